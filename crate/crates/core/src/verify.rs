//! Property checks across all modules, collected into a pass/fail matrix.

use std::f64::consts::PI;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::continuation::diagnostics::psi_identity_check;
use crate::continuation::operator::{residual_hat, OperatorState};
use crate::continuation::{run_continuation, ContinuationConfig, RunVerdict, SolveReport};
use crate::error::{Error, Result};
use crate::exec;
use crate::fiber::{self, sample, C64};
use crate::field::MatField;
use crate::geometry::{make_hopf, make_torus, max_principle_margin, random_smooth, Geometry};
use crate::higgs::{self, HiggsProblem};
use crate::instances;
use crate::pair::{self, PairProblem, SplitModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    All,
    Geometry,
    Fiber,
    Pair,
    Continuation,
    Higgs,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "all" => Suite::All,
            "geometry" => Suite::Geometry,
            "fiber" => Suite::Fiber,
            "pair" => Suite::Pair,
            "continuation" => Suite::Continuation,
            "higgs" => Suite::Higgs,
            other => return Err(Error::Config(format!("unknown suite {other:?}"))),
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Bound {
    /// Passes when `value ≤ threshold`.
    AtMost,
    /// Passes when `value ≥ threshold`.
    AtLeast,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    #[serde(with = "crate::serde_float")]
    pub value: f64,
    pub threshold: f64,
    pub bound: Bound,
    /// Distance to the threshold on the passing side; negative on failure.
    #[serde(with = "crate::serde_float")]
    pub margin: f64,
    pub passed: bool,
}

impl Check {
    pub fn at_most(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name.into(), value, threshold, Bound::AtMost)
    }

    pub fn at_least(name: impl Into<String>, value: f64, threshold: f64) -> Self {
        Self::new(name.into(), value, threshold, Bound::AtLeast)
    }

    fn new(name: String, value: f64, threshold: f64, bound: Bound) -> Self {
        let margin = match bound {
            Bound::AtMost => threshold - value,
            Bound::AtLeast => value - threshold,
        };
        // NaN compares false and fails
        let passed = margin >= 0.0;
        Check { name, value, threshold, bound, margin, passed }
    }

    fn failed(name: impl Into<String>, err: &Error) -> Self {
        let mut c = Self::at_most(name, f64::NAN, 0.0);
        c.name = format!("{} ({err})", c.name);
        c
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct VerifyMatrix {
    pub suite: Suite,
    pub quick: bool,
    pub seed: u64,
    pub checks: Vec<Check>,
    pub all_passed: bool,
}

struct Setup {
    quick: bool,
    seed: u64,
    torus_n: usize,
    hopf_n: usize,
    probes: usize,
}

type CheckFn = fn(&Setup) -> Result<Vec<Check>>;

pub fn run_suite(suite: Suite, quick: bool, seed: u64) -> Result<VerifyMatrix> {
    let (torus_n, hopf_n) = instances::grids(quick);
    let setup = Setup { quick, seed, torus_n, hopf_n, probes: if quick { 10 } else { 50 } };
    let mut jobs: Vec<(&str, CheckFn)> = Vec::new();
    let want = |s: Suite| suite == Suite::All || suite == s;
    if want(Suite::Geometry) {
        jobs.push(("geometry", geometry_checks));
    }
    if want(Suite::Fiber) {
        jobs.push(("fiber", fiber_checks));
    }
    if want(Suite::Pair) {
        jobs.push(("pair", pair_checks));
    }
    if want(Suite::Continuation) {
        jobs.push(("continuation.runs", run_checks));
        jobs.push(("continuation.identities", identity_checks));
    }
    if want(Suite::Higgs) {
        jobs.push(("higgs", higgs_checks));
    }
    let results = exec::map_jobs(jobs, |(name, f)| match f(&setup) {
        Ok(c) => c,
        Err(e) => vec![Check::failed(name, &e)],
    });
    let checks: Vec<Check> = results.into_iter().flatten().collect();
    let all_passed = checks.iter().all(|c| c.passed);
    Ok(VerifyMatrix { suite, quick, seed, checks, all_passed })
}

fn backends(s: &Setup) -> Result<[Geometry; 2]> {
    Ok([make_torus(s.torus_n, 1.0)?, make_hopf(s.hopf_n)?])
}

fn geometry_checks(s: &Setup) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    for g in backends(s)? {
        let tag = g.kind().to_string();
        let mut p_int: f64 = 0.0;
        let mut deg_shift: f64 = 0.0;
        let c = g.constant_curvature(1.0);
        let base = g.degree(&vec![c; g.points()]);
        for _ in 0..20 {
            let u = random_smooth(&g, &mut rng, 4);
            let pu = g.p_operator(&u)?;
            p_int = p_int.max(g.integrate(&pu).abs());
            // curvature of the conformally changed metric e^{-u}h
            let curv: Vec<f64> = pu.iter().map(|v| c - v).collect();
            deg_shift = deg_shift.max((g.degree(&curv) - base).abs());
        }
        out.push(Check::at_most(format!("geometry.p_integral_zero.{tag}"), p_int, 1e-8));
        out.push(Check::at_most(format!("geometry.degree_metric_independence.{tag}"), deg_shift, 1e-8));
        out.push(Check::at_least(format!("geometry.maximum_principle.{tag}"), max_principle_margin(&g, s.seed, 100), 0.0));
    }
    Ok(out)
}

fn fiber_checks(s: &Setup) -> Result<Vec<Check>> {
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x11);
    let mut xi_gap = f64::INFINITY;
    for _ in 0..1000 {
        let r = rng.gen_range(1..=3);
        let phi = sample::vector(&mut rng, r, 1.0);
        let sm = sample::hermitian(&mut rng, r, 2.0);
        let h0 = sample::positive(&mut rng, r, 0.3, 3.0);
        xi_gap = xi_gap.min(fiber::xi_path(&phi, &sm, &h0, 1.0)? - fiber::xi_path(&phi, &sm, &h0, 0.0)?);
    }
    let mut xi_prime = f64::INFINITY;
    let mut fd_err: f64 = 0.0;
    for _ in 0..500 {
        let r = rng.gen_range(2..=3);
        let th = sample::complex_matrix(&mut rng, r, 1.0);
        let sm = sample::hermitian(&mut rng, r, 1.0);
        let t = rng.gen_range(-1.0..1.0);
        let d = fiber::higgs_xi_derivative(&th, &sm, t);
        xi_prime = xi_prime.min(d);
        let dt = 1e-5;
        let fd = (fiber::higgs_xi(&th, &sm, t + dt) - fiber::higgs_xi(&th, &sm, t - dt)) / (2.0 * dt);
        fd_err = fd_err.max((fd - d).abs() / d.abs().max(1.0));
    }
    Ok(vec![
        Check::at_least("fiber.xi_monotone", xi_gap, -1e-12),
        Check::at_least("higgs.xi_derivative_nonnegative", xi_prime, -1e-12),
        Check::at_most("higgs.xi_derivative_matches_difference", fd_err, 1e-6),
    ])
}

fn pair_checks(s: &Setup) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    for g in backends(s)? {
        let tag = g.kind().to_string();
        let deg = 1.0;
        let rep = pair::stability_window(&SplitModel::new(vec![deg], 0)?, &g, None)?;
        let expect = instances::line_threshold(&g, deg);
        out.push(Check::at_most(format!("pair.rank_one_window.{tag}"), (rep.window_lo - expect).abs(), 1e-12));
    }
    // f = τ/|c|² for the trivial line bundle with constant section c
    let g = make_torus(s.torus_n.min(16), 1.0)?;
    let c = 1.5;
    let p = PairProblem::split(g, &[0.0], None, &[C64::new(c, 0.0)], 2.0)?;
    let sol = run_continuation(&p, &ContinuationConfig::default())?;
    let f = sol.raw_metric();
    let err = (0..f.len()).map(|i| (f.at(i)[(0, 0)].re - 2.0 / (c * c)).abs()).fold(0.0, f64::max);
    out.push(Check::at_most("pair.trivial_calibration", err, 1e-8));
    Ok(out)
}

fn run_one(name: &str, quick: bool) -> Result<SolveReport> {
    let p = instances::by_name(name, quick)?;
    Ok(run_continuation(&p, &ContinuationConfig::default())?.report)
}

fn run_checks(s: &Setup) -> Result<Vec<Check>> {
    let names: Vec<&str> = instances::NAMES.to_vec();
    let reports = exec::map_jobs(names.clone(), |n| run_one(n, s.quick));
    let mut out = Vec::new();
    for (name, rep) in names.iter().zip(reports) {
        let rep = match rep {
            Ok(r) => r,
            Err(e) => {
                out.push(Check::failed(format!("continuation.run.{name}"), &e));
                continue;
            }
        };
        out.push(Check::at_most(format!("continuation.gauge_exact.{name}"), rep.gauge_residual, 1e-10));
        if name.ends_with("-unstable") {
            let hit = rep.verdict == RunVerdict::Diverged && rep.final_eps >= 1e-2;
            out.push(Check::at_least(format!("continuation.unstable_hits_cap.{name}"), if hit { 1.0 } else { 0.0 }, 1.0));
            continue;
        }
        let ok = rep.verdict == RunVerdict::Converged;
        out.push(Check::at_most(format!("continuation.final_residual.{name}"), if ok { rep.final_residual } else { f64::INFINITY }, 1e-9));
        let apriori = rep.steps.iter().map(|d| d.apriori_margin).fold(f64::INFINITY, f64::min);
        out.push(Check::at_least(format!("continuation.apriori.{name}"), apriori, -1e-6));
        let gap = rep.steps.iter().map(|d| d.energy_gap / d.energy_scale.max(1.0)).fold(0.0, f64::max);
        out.push(Check::at_most(format!("continuation.energy_identity.{name}"), gap, 1e-4));
        let mono = rep.steps.iter().map(|d| d.monotonicity).fold(f64::INFINITY, f64::min);
        out.push(Check::at_least(format!("continuation.monotonicity.{name}"), mono, -1e-8));
    }
    Ok(out)
}

/// Random smooth Hermitian field `Σ_k u_k(x)·A_k` of the given size.
pub fn random_hermitian_field<R: Rng>(g: &Geometry, rng: &mut R, rank: usize, amp: f64) -> MatField {
    let us: Vec<Vec<f64>> = (0..2).map(|_| random_smooth(g, rng, 2)).collect();
    let mats: Vec<_> = (0..2).map(|_| sample::hermitian(rng, rank, amp)).collect();
    let norm = us.iter().flatten().fold(0.0f64, |m, v| m.max(v.abs())).max(1.0);
    MatField::from_fn(g.points(), rank, |i| {
        &mats[0] * C64::new(us[0][i] / norm, 0.0) + &mats[1] * C64::new(us[1][i] / norm, 0.0)
    })
}

/// `max` over probes of `|FD − d₂L̂(φ)| / |d₂L̂(φ)|`, with the five-point
/// difference of `L̂ = f·L_ε(f)` at step `3e-4`. A two-point difference is
/// not accurate enough here: roundoff in `L̂` grows like `h⁻²` on fine grids
/// while the `t²` truncation constant varies by two orders between probes.
pub fn linearization_fd_error(p: &PairProblem, eps: f64, probes: usize, seed: u64) -> Result<f64> {
    linearization_fd_error_at(p, eps, probes, seed, 3e-4)
}

/// [`linearization_fd_error`] at a given difference step `t`.
pub fn linearization_fd_error_at(p: &PairProblem, eps: f64, probes: usize, seed: u64, t: f64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..probes {
        let f = random_hermitian_field(&p.geom, &mut rng, p.rank, 0.8).exp();
        let dir = random_hermitian_field(&p.geom, &mut rng, p.rank, 1.0);
        let at = |k: f64| residual_hat(p, eps, &f.axpy(k * t, &dir));
        let (p1, m1, p2, m2) = (at(1.0)?, at(-1.0)?, at(2.0)?, at(-2.0)?);
        let fd = p1.sub(&m1).scale(8.0).sub(&p2.sub(&m2)).scale(1.0 / (12.0 * t));
        let an = OperatorState::new(p, eps, &f.log()?)?.apply_f(&dir);
        worst = worst.max(fd.sub(&an).sup_norm() / an.sup_norm().max(1e-12));
    }
    Ok(worst)
}

fn identity_checks(s: &Setup) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let fd_grid = (s.torus_n.min(16), s.hopf_n.min(128));
    let fd_cases = [
        ("torus-line", instances::torus_line(fd_grid.0, 1.0, 1.2 * 4.0 * PI, 0.3)?),
        ("hopf-split", instances::split_case_b(make_hopf(fd_grid.1)?, 0.0, 1.0, (0.3, -0.2))?),
    ];
    for (name, p) in &fd_cases {
        let err = linearization_fd_error(p, 0.3, s.probes, s.seed)?;
        out.push(Check::at_most(format!("continuation.linearization_fd.{name}"), err, 1e-5));
    }
    // pointwise psi identity with f = e^u on the torus
    let g = make_torus(s.torus_n.max(32), 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x22);
    let u = random_smooth(&g, &mut rng, 1);
    let top = u.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-12);
    let f = MatField::diagonal(&[u.iter().map(|v| (0.5 * v / top).exp()).collect()]);
    out.push(Check::at_most("continuation.psi_identity_rank_one", psi_identity_check(&g, &f)?, 1e-8));
    // trivial vortex
    let p = instances::by_name("torus-trivial", true)?;
    let sol = run_continuation(&p, &ContinuationConfig::default())?;
    let f = sol.raw_metric();
    let err = (0..f.len()).map(|i| (f.at(i)[(0, 0)].re - 2.0).abs()).fold(0.0, f64::max);
    out.push(Check::at_most("continuation.trivial_vortex", err, 1e-8));
    Ok(out)
}

fn higgs_checks(s: &Setup) -> Result<Vec<Check>> {
    let mut out = Vec::new();
    let g = make_torus(s.torus_n.min(16), 1.0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(s.seed ^ 0x33);
    let mut semi = f64::INFINITY;
    let mut trace: f64 = 0.0;
    for k in 0..500 {
        let r = 2 + k % 2;
        let hp = HiggsProblem::split(g.clone(), &vec![0.0; r], rng.gen_range(0.2..2.0), 0.0)?;
        let f = MatField::constant(g.points(), sample::positive(&mut rng, r, 0.2, 5.0));
        let eta = sample::hermitian(&mut rng, r, 1.0);
        semi = semi.min(higgs::higgs_semipositivity_check(&hp, &f, &[(0, eta)])?);
        if k % 50 == 0 {
            let fr = random_hermitian_field(&g, &mut rng, r, 0.8).exp();
            let b = higgs::bracket_curvature(&hp, &fr)?;
            trace = trace.max(b.trace().iter().fold(0.0, |m, t| m.max(t.abs())));
        }
    }
    out.push(Check::at_least("higgs.semipositivity", semi, -1e-12));
    out.push(Check::at_most("higgs.bracket_trace_free", trace, 1e-12));
    let hp = HiggsProblem::split(g.clone(), &[1.0, -1.0], 0.8, 0.0)?;
    out.push(Check::at_most("higgs.linearization_fd", linearization_fd_error(hp.problem(), 0.3, s.probes, s.seed)?, 1e-5));
    // rank-1 and θ = 0 reductions against the pair machinery
    let mut red: f64 = 0.0;
    for (curv, scale) in [(vec![0.7], 1.0), (vec![0.5, -0.5], 0.0)] {
        let r = curv.len();
        let hp = HiggsProblem::split(g.clone(), &curv, scale, 0.3)?;
        let pp = PairProblem::split(g.clone(), &curv, None, &vec![C64::new(0.0, 0.0); r], 0.6)?;
        let f = random_hermitian_field(&g, &mut rng, r, 0.8).exp();
        let a = higgs::residual_higgs(&hp, 0.5, &f)?;
        let b = crate::continuation::operator::residual_l(&pp, 0.5, &f)?;
        red = red.max(a.sub(&b).sup_norm());
    }
    out.push(Check::at_most("higgs.reduction", red, 1e-14));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_names_parse() {
        assert_eq!("all".parse::<Suite>().unwrap(), Suite::All);
        assert!("bogus".parse::<Suite>().is_err());
    }

    #[test]
    fn check_bounds() {
        assert!(Check::at_most("a", 1.0, 2.0).passed);
        assert!(!Check::at_most("a", f64::NAN, 2.0).passed);
        assert!(Check::at_least("a", 0.0, -1e-12).passed);
        assert!(!Check::at_least("a", -1.0, 0.0).passed);
    }

    #[test]
    fn quick_suite_passes() {
        let m = run_suite(Suite::All, true, 7).unwrap();
        let failed: Vec<_> = m.checks.iter().filter(|c| !c.passed).collect();
        if cfg!(feature = "corrupt-lambda-sign") {
            assert!(failed.iter().any(|c| c.name.starts_with("geometry.maximum_principle")));
        } else {
            assert!(failed.is_empty(), "{failed:#?}");
        }
    }
}
