//! One function per subcommand. Each returns the process exit code; errors
//! are operational failures and map to exit code 1 in `main`.

use std::env;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::Serialize;
use vortex_core::continuation::{run_continuation, RunVerdict, Solution};
use vortex_core::pair::{stability_window, PairProblem, StabilityReport};
use vortex_core::sweep::{bisect_threshold, sweep_grid, BisectionSettings, SweepRun, ThresholdEstimate};
use vortex_core::verify::{run_suite, Suite, VerifyMatrix};

use crate::config::{Overrides, ProblemKind, RunConfig};
use crate::report::{self, RunReport};

pub const OUT_DIR_ENV: &str = "VORTEX_OUT_DIR";
const DEFAULT_OUT: &str = "vortex-out";

/// Flags shared by every subcommand.
#[derive(Clone, Debug, Default)]
pub struct Common {
    pub config: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub overrides: Overrides,
}

impl Common {
    pub fn load(&self) -> Result<RunConfig> {
        self.load_or(ProblemKind::Vortex)
    }

    /// Like [`Common::load`], with `kind` assumed when no config is given.
    pub fn load_or(&self, kind: ProblemKind) -> Result<RunConfig> {
        let base = match &self.config {
            Some(p) => RunConfig::from_file(p).with_context(|| format!("config {}", p.display()))?,
            None => RunConfig { kind, ..RunConfig::default() },
        };
        let c = base.with_overrides(&self.overrides)?;
        c.validate()?;
        Ok(c)
    }

    /// `VORTEX_OUT_DIR`, then `--out`, then the config's `out`, then
    /// `vortex-out`.
    pub fn out_dir(&self, c: Option<&RunConfig>) -> PathBuf {
        env::var_os(OUT_DIR_ENV)
            .filter(|v| !v.is_empty())
            .map(PathBuf::from)
            .or_else(|| self.out.clone())
            .or_else(|| c.and_then(|c| c.out.clone()))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
    }
}

fn prepare(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

fn problem_for(c: &RunConfig) -> Result<PairProblem> {
    Ok(match c.kind {
        ProblemKind::Higgs => c.higgs_problem()?.into_problem(),
        ProblemKind::Vortex => c.pair_problem(None)?,
        other => bail!("solve needs kind = vortex or higgs, got {other}"),
    })
}

fn window_of(p: &PairProblem) -> Result<Option<StabilityReport>> {
    Ok(match &p.model {
        Some(m) => Some(stability_window(m, &p.geom, Some(p.tau()))?),
        None => None,
    })
}

pub fn build_report(c: &RunConfig, p: &PairProblem, sol: &Solution) -> Result<RunReport> {
    Ok(RunReport {
        kind: c.kind.to_string(),
        backend: p.geom.kind().to_string(),
        grid: p.geom.n(),
        rank: p.rank,
        seed: c.continuation.seed,
        degrees: p.summand_degrees(),
        phi_norm_sq: p.phi_norm_sq(Some(&sol.raw_metric())),
        window: window_of(p)?,
        trace_file: report::TRACE_FILE.to_string(),
        solve: sol.report.clone(),
    })
}

fn title(r: &RunReport) -> String {
    format!("{} {} n={} tau={:.6} ({:?})", r.kind, r.backend, r.grid, r.solve.tau, r.solve.verdict)
}

pub fn solve(common: &Common) -> Result<i32> {
    let c = common.load()?;
    let p = problem_for(&c)?;
    let sol = run_continuation(&p, &c.continuation).context("continuation")?;
    let r = build_report(&c, &p, &sol)?;
    let dir = common.out_dir(Some(&c));
    prepare(&dir)?;
    report::write_json(&dir.join(report::REPORT_FILE), &r)?;
    report::write_trace_files(&dir, &sol.report.trace(), &title(&r))?;
    let s = &r.solve;
    println!(
        "{:?}: residual {:.3e}, sup|log f| {:.4}, eps {:.3e}{}",
        s.verdict,
        s.final_residual,
        s.final_sup_log_f,
        s.final_eps,
        s.cause.as_deref().map(|c| format!(" ({c})")).unwrap_or_default()
    );
    println!("wrote {}", dir.display());
    Ok(s.verdict.exit_code())
}

#[derive(Serialize)]
struct SweepOutput {
    grid: Vec<SweepRun>,
    bisection: Option<ThresholdEstimate>,
    window: Option<StabilityReport>,
}

pub fn sweep_tau(common: &Common) -> Result<i32> {
    let c = common.load()?;
    if c.kind != ProblemKind::Vortex {
        bail!("sweep-tau needs kind = vortex");
    }
    let bracket = match (c.tau_lo, c.tau_hi) {
        (Some(lo), Some(hi)) => Some((lo, hi)),
        (None, None) => None,
        _ => bail!("set both tau_lo and tau_hi, or neither"),
    };
    if bracket.is_none() && c.taus.is_empty() {
        bail!("sweep-tau needs taus or a tau_lo/tau_hi bracket");
    }
    let probe = c.pair_problem(Some(bracket.map_or_else(|| c.taus[0], |b| b.0)))?;
    let window = match &probe.model {
        Some(m) => Some(stability_window(m, &probe.geom, None)?),
        None => None,
    };
    let build = |t: f64| c.pair_problem(Some(t));
    let grid = sweep_grid(build, &c.continuation, &c.taus)?;
    let bisection = match bracket {
        Some((lo, hi)) => {
            let set = BisectionSettings { lo, hi, rel_width: c.rel_width, ..Default::default() };
            let analyzer = window.as_ref().filter(|w| !w.window_empty).map(|w| w.window_lo);
            Some(bisect_threshold(build, &c.continuation, &set, analyzer)?)
        }
        None => None,
    };
    for r in &grid {
        println!("tau {:.6}: {:?}", r.tau, r.verdict);
    }
    if let Some(b) = &bisection {
        print!("threshold {:.6} in [{:.6}, {:.6}]", b.estimate, b.lower, b.upper);
        match (b.analyzer, b.relative_error) {
            (Some(a), Some(e)) => println!(", analyzer {a:.6}, relative error {e:.2e}"),
            (Some(a), None) => println!(", analyzer {a:.6}"),
            _ => println!(),
        }
    }
    let dir = common.out_dir(Some(&c));
    prepare(&dir)?;
    report::write_json(&dir.join("sweep.json"), &SweepOutput { grid, bisection, window })?;
    println!("wrote {}", dir.display());
    Ok(0)
}

pub fn stability(common: &Common) -> Result<i32> {
    let c = common.load()?;
    let p = c.pair_problem(Some(c.tau.unwrap_or(0.0)))?;
    let m = p.model.as_ref().context("the problem has no split model")?;
    let w = stability_window(m, &p.geom, c.tau)?;
    match w.window_hi {
        Some(hi) => println!("window ({:.6}, {:.6}){}", w.window_lo, hi, if w.window_empty { " empty" } else { "" }),
        None => println!("window ({:.6}, inf)", w.window_lo),
    }
    if let Some(v) = w.verdict {
        println!("tau {}: {v}", c.tau.unwrap_or_default());
    }
    println!("audited: {}", w.scope);
    let dir = common.out_dir(Some(&c));
    prepare(&dir)?;
    report::write_json(&dir.join("stability.json"), &w)?;
    Ok(0)
}

pub fn verify(common: &Common, suite: Option<&str>) -> Result<i32> {
    let c = common.load_or(ProblemKind::Verify)?;
    let suite: Suite = suite.unwrap_or(&c.suite).parse()?;
    let m: VerifyMatrix = run_suite(suite, c.quick, c.seed)?;
    for ch in &m.checks {
        println!("{} {} (value {:.3e}, margin {:.3e})", if ch.passed { "PASS" } else { "FAIL" }, ch.name, ch.value, ch.margin);
    }
    let dir = common.out_dir(Some(&c));
    prepare(&dir)?;
    report::write_json(&dir.join("verify.json"), &m)?;
    let failed = m.checks.iter().filter(|c| !c.passed).count();
    println!("{} checks, {failed} failed", m.checks.len());
    Ok(if m.all_passed { 0 } else { 1 })
}

/// Re-renders the trace and plot from an existing `report.json`.
pub fn rerender(common: &Common, dir: Option<&Path>) -> Result<i32> {
    let dir = dir.map(Path::to_path_buf).unwrap_or_else(|| common.out_dir(None));
    let r = report::read_report(&dir.join(report::REPORT_FILE))?;
    report::write_trace_files(&dir, &r.solve.trace(), &title(&r))?;
    println!("{:?}: residual {:.3e}, {} steps", r.solve.verdict, r.solve.final_residual, r.solve.steps.len());
    Ok(match r.solve.verdict {
        RunVerdict::Converged => 0,
        v => v.exit_code(),
    })
}
