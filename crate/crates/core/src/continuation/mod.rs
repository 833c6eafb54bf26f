//! Continuation in `ε` from `1` towards `0` for `L_ε(f) = K_{h₀f} + ε log f = 0`.

pub mod diagnostics;
pub mod gauge;
pub mod gmres;
pub mod newton;
pub mod operator;

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::MatField;
use crate::pair::{self, PairProblem, Verdict};
pub use diagnostics::DiagnosticsRecord;
use diagnostics::{diagnostics_check, reference_curvature_sup, DiagnosticsInput};
use gauge::{initial_gauge, GaugedProblem};
pub use newton::{newton_solve, NewtonOutcome, NewtonStatus};
use operator::OperatorState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuationConfig {
    pub eps_min: f64,
    /// Multiplicative `ε` step before any halving.
    pub ratio: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub lin_tol: f64,
    pub restart: usize,
    pub max_linear: usize,
    /// Divergence cap on `sup|log f|`.
    pub cap: f64,
    pub armijo: f64,
    pub min_step: f64,
    /// Consecutive step halvings allowed before the run is declared failed.
    pub max_halvings: usize,
    /// Solve the `ε = 0` equation after reaching `eps_min`.
    pub polish: bool,
    /// Divergence threshold on the residual roundoff floor. Past it the
    /// metric is too degenerate for the residual to be resolved in doubles.
    pub floor_cap: f64,
    /// Arnoldi steps for the smallest-singular-value estimate; 0 disables it.
    pub ritz_steps: usize,
    pub seed: u64,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            eps_min: 1e-3,
            ratio: 0.7,
            newton_tol: 1e-10,
            max_newton: 50,
            lin_tol: 1e-8,
            restart: 50,
            max_linear: 600,
            cap: 50.0,
            armijo: 1e-4,
            min_step: 1.0 / 1024.0,
            max_halvings: 8,
            polish: true,
            floor_cap: 1e-7,
            ritz_steps: 0,
            seed: 0,
        }
    }
}

impl ContinuationConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.eps_min > 0.0 && self.eps_min < 1.0) {
            return bad("eps_min must lie in (0, 1)");
        }
        if !(self.ratio > 0.0 && self.ratio < 1.0) {
            return bad("ratio must lie in (0, 1)");
        }
        if !(self.newton_tol > 0.0 && self.lin_tol > 0.0 && self.lin_tol < 1.0) {
            return bad("tolerances must be positive and lin_tol below 1");
        }
        if self.max_newton == 0 || self.restart == 0 || self.max_linear == 0 {
            return bad("iteration limits must be positive");
        }
        if !(self.cap > 0.0 && self.floor_cap > 0.0) {
            return bad("cap and floor_cap must be positive");
        }
        if !(self.armijo > 0.0 && self.armijo < 1.0 && self.min_step > 0.0 && self.min_step <= 1.0) {
            return bad("line search parameters out of range");
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunVerdict {
    Converged,
    Diverged,
    /// Did not converge on a pair the analyzer places on the boundary.
    Boundary,
    Failed,
}

impl RunVerdict {
    pub fn exit_code(self) -> i32 {
        match self {
            RunVerdict::Converged => 0,
            RunVerdict::Diverged | RunVerdict::Boundary => 2,
            RunVerdict::Failed => 1,
        }
    }
}

/// One row of the CSV trace.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TraceRow {
    pub eps: f64,
    pub residual_sup: f64,
    pub sup_log_f: f64,
    #[serde(with = "crate::serde_float")]
    pub apriori_margin: f64,
    pub energy_gap: f64,
    pub cauchy_increment: Option<f64>,
    pub newton_iters: usize,
}

impl From<&DiagnosticsRecord> for TraceRow {
    fn from(d: &DiagnosticsRecord) -> Self {
        TraceRow {
            eps: d.eps,
            residual_sup: d.residual_sup,
            sup_log_f: d.sup_log_f,
            apriori_margin: d.apriori_margin,
            energy_gap: d.energy_gap,
            cauchy_increment: d.cauchy_increment,
            newton_iters: d.newton_iters,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SolveReport {
    pub verdict: RunVerdict,
    pub cause: Option<String>,
    pub tau: f64,
    pub analyzer_verdict: Option<Verdict>,
    /// `ε` of the last accepted state, `0` after a successful polish.
    pub final_eps: f64,
    #[serde(with = "crate::serde_float")]
    pub final_residual: f64,
    #[serde(with = "crate::serde_float")]
    pub final_sup_log_f: f64,
    #[serde(with = "crate::serde_float")]
    pub gauge_residual: f64,
    #[serde(with = "crate::serde_float")]
    pub gauge_holomorphic_defect: f64,
    pub total_newton: usize,
    pub total_linear: usize,
    pub wall_seconds: f64,
    pub steps: Vec<DiagnosticsRecord>,
}

impl SolveReport {
    pub fn trace(&self) -> Vec<TraceRow> {
        self.steps.iter().map(TraceRow::from).collect()
    }

    pub fn converged(&self) -> bool {
        self.verdict == RunVerdict::Converged
    }
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub report: SolveReport,
    pub gauged: GaugedProblem,
    /// Last accepted `s` relative to the gauged reference.
    pub s: MatField,
    /// Last accepted `ε`.
    pub eps: f64,
}

impl Solution {
    /// Metric relative to the original reference `h₀`.
    pub fn raw_metric(&self) -> MatField {
        self.gauged.raw_metric(&self.s)
    }
}

/// Continuation from the default starting metric, see [`default_start`].
pub fn run_continuation(p: &PairProblem, cfg: &ContinuationConfig) -> Result<Solution> {
    run_continuation_from(p, cfg, &default_start(p, cfg)?)
}

/// Starting metric `h₀·f_h` for the gauge: the `ε = 1` solution in the
/// original frame when Newton finds it, otherwise `h₀` itself. Near that
/// metric the gauge transform is close to the identity; from a metric with a
/// large eigenvalue spread of `K⁰` it amplifies off-diagonal terms by
/// `e^{spread/2}`.
pub fn default_start(p: &PairProblem, cfg: &ContinuationConfig) -> Result<MatField> {
    let zero = MatField::zeros(p.points(), p.rank);
    let out = newton_solve(p, 1.0, &zero, cfg)?;
    Ok(if out.converged() { out.s.exp() } else { MatField::identity(p.points(), p.rank) })
}

struct Accepted {
    eps: f64,
    s: MatField,
}

/// Continuation started from the metric `h₀·f_h`.
pub fn run_continuation_from(p: &PairProblem, cfg: &ContinuationConfig, f_h: &MatField) -> Result<Solution> {
    cfg.validate()?;
    let started = Instant::now();
    let gauged = initial_gauge(p, f_h)?;
    let q = &gauged.problem;
    let k0_sup = reference_curvature_sup(q);
    let analyzer_verdict = match (&p.model, &p.theta) {
        (Some(m), None) => Some(pair::classify(m, &p.geom, p.tau())?),
        _ => None,
    };

    let mut steps = Vec::new();
    let mut total_newton = 0;
    let mut total_linear = 0;
    let record = |state: &OperatorState<'_>, prev: Option<&MatField>, it: usize, lin: usize, steps: &mut Vec<DiagnosticsRecord>| -> Result<()> {
        let seed = cfg.seed.wrapping_add(steps.len() as u64);
        let d = diagnostics_check(DiagnosticsInput {
            state,
            prev_f: prev,
            newton_iters: it,
            linear_iters: lin,
            k0_sup,
            ritz_steps: cfg.ritz_steps,
            seed,
        })?;
        steps.push(d);
        Ok(())
    };

    let mut cur = Accepted { eps: 1.0, s: gauged.s_start.clone() };
    // Tidy the start to the Newton tolerance before stepping.
    let first = newton_solve(q, 1.0, &cur.s, cfg)?;
    total_newton += first.iterations;
    total_linear += first.linear_iterations;
    if !first.converged() {
        let report = finish(
            FinishArgs { verdict: RunVerdict::Failed, cause: Some(format!("start did not converge: {:?} at residual {:e} (gauge residual {:e})", first.status, first.residual_sup, gauged.start_residual)), final_eps: 1.0, final_residual: first.residual_sup, final_sup: first.s.sup_norm() },
            &gauged, p.tau(), analyzer_verdict, total_newton, total_linear, started, steps,
        );
        return Ok(Solution { report, s: first.s, eps: 1.0, gauged });
    }
    cur.s = first.s;
    {
        let st = OperatorState::new(q, 1.0, &cur.s)?;
        record(&st, None, first.iterations, first.linear_iterations, &mut steps)?;
    }

    let base = cfg.ratio.ln();
    let mut log_step = base;
    let mut halvings = 0;
    let mut prev: Option<Accepted> = None;
    let mut outcome: Option<(RunVerdict, String)> = None;
    while cur.eps > cfg.eps_min * (1.0 + 1e-12) {
        let target = (cur.eps * log_step.exp()).max(cfg.eps_min);
        let pred = match &prev {
            Some(pv) => {
                let w = (target.ln() - cur.eps.ln()) / (cur.eps.ln() - pv.eps.ln());
                cur.s.axpy(w, &cur.s.sub(&pv.s))
            }
            None => cur.s.clone(),
        };
        let out = newton_solve(q, target, &pred, cfg)?;
        total_newton += out.iterations;
        total_linear += out.linear_iterations;
        if out.status == NewtonStatus::Capped {
            outcome = Some((RunVerdict::Diverged, format!("sup|log f| exceeded the cap {} near eps = {target:e}", cfg.cap)));
            let st = OperatorState::new(q, target, &out.s)?;
            let pf = cur.s.exp();
            record(&st, Some(&pf), out.iterations, out.linear_iterations, &mut steps)?;
            break;
        }
        if out.converged() {
            let pf = cur.s.exp();
            let st = OperatorState::new(q, target, &out.s)?;
            record(&st, Some(&pf), out.iterations, out.linear_iterations, &mut steps)?;
            let floor = st.roundoff_floor()?;
            if floor > cfg.floor_cap {
                outcome = Some((RunVerdict::Diverged, format!("residual roundoff floor {floor:e} exceeded {:e} at eps = {target:e}, sup|log f| = {:.3}", cfg.floor_cap, out.s.sup_norm())));
                cur = Accepted { eps: target, s: out.s };
                break;
            }
            let old = std::mem::replace(&mut cur, Accepted { eps: target, s: out.s });
            prev = Some(old);
            halvings = 0;
            log_step = (2.0 * log_step).max(base);
        } else {
            halvings += 1;
            if halvings > cfg.max_halvings {
                outcome = Some((RunVerdict::Failed, format!("step halving exhausted at eps = {:e}: {:?}", cur.eps, out.status)));
                break;
            }
            log_step *= 0.5;
        }
    }

    let (verdict, cause, final_eps, final_residual, final_sup, s_final) = match outcome {
        Some((v, c)) => {
            let r = steps.last().map(|d| d.residual_sup).unwrap_or(f64::NAN);
            let sup = steps.last().map(|d| d.sup_log_f).unwrap_or(f64::NAN);
            (v, Some(c), cur.eps, r, sup, cur.s.clone())
        }
        None if cfg.polish => {
            let mut out = None;
            if let Some(pv) = &prev {
                let w = -cur.eps / (cur.eps - pv.eps);
                let guess = cur.s.axpy(w, &cur.s.sub(&pv.s));
                let o = newton_solve(q, 0.0, &guess, cfg)?;
                total_newton += o.iterations;
                total_linear += o.linear_iterations;
                if o.converged() {
                    out = Some(o);
                }
            }
            let o = match out {
                Some(o) => o,
                None => {
                    let o = newton_solve(q, 0.0, &cur.s, cfg)?;
                    total_newton += o.iterations;
                    total_linear += o.linear_iterations;
                    o
                }
            };
            let pf = cur.s.exp();
            let st = OperatorState::new(q, 0.0, &o.s)?;
            record(&st, Some(&pf), o.iterations, o.linear_iterations, &mut steps)?;
            let sup = o.s.sup_norm();
            match o.status {
                NewtonStatus::Converged => (RunVerdict::Converged, None, 0.0, o.residual_sup, sup, o.s),
                NewtonStatus::Capped => (RunVerdict::Diverged, Some("polish at eps = 0 exceeded the cap".into()), cur.eps, o.residual_sup, sup, cur.s.clone()),
                st => (RunVerdict::Failed, Some(format!("polish at eps = 0 failed: {st:?}")), cur.eps, o.residual_sup, sup, cur.s.clone()),
            }
        }
        None => {
            let d = steps.last().expect("at least the start is recorded");
            (RunVerdict::Converged, None, cur.eps, d.residual_sup, d.sup_log_f, cur.s.clone())
        }
    };
    let verdict = if verdict != RunVerdict::Converged && analyzer_verdict == Some(Verdict::Boundary) {
        RunVerdict::Boundary
    } else {
        verdict
    };
    let eps_final = final_eps;
    let report = finish(
        FinishArgs { verdict, cause, final_eps, final_residual, final_sup },
        &gauged, p.tau(), analyzer_verdict, total_newton, total_linear, started, steps,
    );
    Ok(Solution { report, s: s_final, eps: eps_final, gauged })
}

/// Runs the continuation from two starting metrics and returns the distance
/// `sup|log(H_a^{-1/2} H_b H_a^{-1/2})|` between the final raw metrics,
/// together with both solutions.
pub fn uniqueness_probe(
    p: &PairProblem,
    cfg: &ContinuationConfig,
    h_a: &MatField,
    h_b: &MatField,
) -> Result<(f64, Solution, Solution)> {
    let a = run_continuation_from(p, cfg, h_a)?;
    let b = run_continuation_from(p, cfg, h_b)?;
    let d = gauge::metric_distance(&a.raw_metric(), &b.raw_metric())?;
    Ok((d, a, b))
}

struct FinishArgs {
    verdict: RunVerdict,
    cause: Option<String>,
    final_eps: f64,
    final_residual: f64,
    final_sup: f64,
}

#[allow(clippy::too_many_arguments)]
fn finish(
    a: FinishArgs,
    gauged: &GaugedProblem,
    tau: f64,
    analyzer_verdict: Option<Verdict>,
    total_newton: usize,
    total_linear: usize,
    started: Instant,
    steps: Vec<DiagnosticsRecord>,
) -> SolveReport {
    SolveReport {
        verdict: a.verdict,
        cause: a.cause,
        tau,
        analyzer_verdict,
        final_eps: a.final_eps,
        final_residual: a.final_residual,
        final_sup_log_f: a.final_sup,
        gauge_residual: gauged.start_residual,
        gauge_holomorphic_defect: gauged.holomorphic_defect,
        total_newton,
        total_linear,
        wall_seconds: started.elapsed().as_secs_f64(),
        steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::C64;
    use crate::geometry::{make_hopf, make_torus};
    use crate::pair::{curvatures_for_degrees, SplitModel};
    use std::f64::consts::PI;

    #[test]
    fn config_validation() {
        assert!(ContinuationConfig::default().validate().is_ok());
        let c = ContinuationConfig { ratio: 1.5, ..Default::default() };
        assert!(c.validate().is_err());
        let c = ContinuationConfig { eps_min: 0.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn rank_one_torus_matches_closed_form() {
        // Constant curvature and constant φ: the vortex metric is constant,
        // `c + ½|φ|²f − τ/2 = 0`.
        let g = make_torus(16, 1.0).unwrap();
        let c = curvatures_for_degrees(&g, &[1.0]);
        let tau = 4.0 * PI * 3.0;
        let p = PairProblem::split(g, &c, None, &[C64::new(1.0, 0.0)], tau).unwrap();
        let sol = run_continuation(&p, &ContinuationConfig::default()).unwrap();
        assert!(sol.report.converged(), "{:?}", sol.report.cause);
        let f = sol.raw_metric();
        let expect = (tau / 2.0 - c[0]) * 2.0;
        for i in 0..f.len() {
            assert!((f.at(i)[(0, 0)].re - expect).abs() < 1e-8);
        }
    }

    #[test]
    fn unstable_rank_one_diverges() {
        let g = make_torus(16, 1.0).unwrap();
        let c = curvatures_for_degrees(&g, &[1.0]);
        let tau = 0.8 * 4.0 * PI;
        let p = PairProblem::split(g, &c, None, &[C64::new(1.0, 0.0)], tau)
            .unwrap()
            .with_model(SplitModel::new(vec![1.0], 0).unwrap())
            .unwrap();
        let sol = run_continuation(&p, &ContinuationConfig::default()).unwrap();
        assert_eq!(sol.report.verdict, RunVerdict::Diverged, "{:?}", sol.report.cause);
    }

    #[test]
    fn rank_two_without_solution_diverges() {
        let g = make_hopf(64).unwrap();
        let c = curvatures_for_degrees(&g, &[0.0, 0.0]);
        let w = vec![crate::pair::weight_profile(&g, 0.3, 1), vec![0.0; 64]];
        let p = PairProblem::split(g, &c, Some(&w), &[C64::new(1.0, 0.0), C64::new(0.5, 0.0)], 2.0).unwrap();
        let sol = run_continuation(&p, &ContinuationConfig::default()).unwrap();
        assert_eq!(sol.report.verdict, RunVerdict::Diverged, "{:?}", sol.report.cause);
    }

    #[test]
    fn hopf_rank_two_with_weights_converges() {
        // φ lies in the first summand; the second carries the Einstein constant.
        let g = make_hopf(64).unwrap();
        let tau = 2.0;
        let w = vec![crate::pair::weight_profile(&g, 0.3, 1), crate::pair::weight_profile(&g, -0.2, 2)];
        let p = PairProblem::split(g, &[0.0, tau / 2.0], Some(&w), &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], tau).unwrap();
        let sol = run_continuation(&p, &ContinuationConfig { ritz_steps: 8, ..Default::default() }).unwrap();
        assert!(sol.report.converged(), "{:?}", sol.report.cause);
        assert!(sol.report.final_residual <= 1e-9);
        for d in &sol.report.steps {
            assert!(d.energy_gap <= 1e-8 * d.energy_scale.max(1.0), "{d:?}");
            assert!(d.apriori_margin >= -1e-6);
            assert!(d.monotonicity >= -1e-12);
        }
    }

    fn bisect(g: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if g(lo) * g(mid) <= 0.0 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        0.5 * (lo + hi)
    }

    fn scalar_problem(n: usize) -> PairProblem {
        PairProblem::split(make_torus(n, 1.0).unwrap(), &[0.0], None, &[C64::new(1.0, 0.0)], 2.0).unwrap()
    }

    #[test]
    fn scalar_newton_matches_bisection() {
        let p = scalar_problem(8);
        let cfg = ContinuationConfig::default();
        for eps in [1.0, 0.5] {
            let expect = bisect(|f: f64| 0.5 * f - 1.0 + eps * f.ln(), 0.1, 10.0);
            let out = newton_solve(&p, eps, &MatField::zeros(p.points(), 1), &cfg).unwrap();
            assert!(out.converged());
            let f = out.s.exp();
            for i in 0..p.points() {
                assert!((f.at(i)[(0, 0)].re - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn scalar_continuation_reaches_two() {
        let p = scalar_problem(8);
        let sol = run_continuation(&p, &ContinuationConfig::default()).unwrap();
        assert!(sol.report.converged());
        assert_eq!(sol.report.final_eps, 0.0);
        let f = sol.raw_metric();
        assert!((0..f.len()).all(|i| (f.at(i)[(0, 0)].re - 2.0).abs() < 1e-10));
    }

    #[test]
    fn distinct_starts_reach_the_same_metric() {
        let g = make_torus(16, 1.0).unwrap();
        let c = curvatures_for_degrees(&g, &[1.0]);
        let w = vec![crate::pair::weight_profile(&g, 0.2, 1)];
        let p = PairProblem::split(g.clone(), &c, Some(&w), &[C64::new(1.0, 0.0)], 12.0 * PI).unwrap();
        let h_a = MatField::identity(g.points(), 1);
        let h_b = MatField::diagonal(&[(0..g.points())
            .map(|i| {
                let (x, y) = g.node_coords(i);
                1.7 * (0.3 * (2.0 * PI * x).sin() * (2.0 * PI * y).cos()).exp()
            })
            .collect()]);
        let (d, a, b) = uniqueness_probe(&p, &ContinuationConfig::default(), &h_a, &h_b).unwrap();
        assert!(a.report.converged() && b.report.converged(), "{:?} {:?}", a.report.cause, b.report.cause);
        assert!(d < 1e-8, "{d}");
    }
}
