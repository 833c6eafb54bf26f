//! Solvability sweeps in `τ`: independent runs on a grid, and a bracketing
//! search for the smallest `τ` at which the continuation converges.

use serde::{Deserialize, Serialize};

use crate::continuation::{run_continuation, ContinuationConfig, RunVerdict};
use crate::error::{Error, Result};
use crate::exec;
use crate::pair::PairProblem;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepRun {
    pub tau: f64,
    pub verdict: RunVerdict,
    pub cause: Option<String>,
    #[serde(with = "crate::serde_float")]
    pub final_residual: f64,
    #[serde(with = "crate::serde_float")]
    pub final_sup_log_f: f64,
    pub final_eps: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BisectionSettings {
    pub lo: f64,
    pub hi: f64,
    /// Stop once `hi − lo ≤ rel_width·|mid|`.
    pub rel_width: f64,
    /// Interior points evaluated concurrently per round.
    pub points_per_round: usize,
    pub max_rounds: usize,
}

impl Default for BisectionSettings {
    fn default() -> Self {
        BisectionSettings { lo: 0.0, hi: 1.0, rel_width: 0.01, points_per_round: 3, max_rounds: 40 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ThresholdEstimate {
    /// Largest `τ` seen not to converge.
    pub lower: f64,
    /// Smallest `τ` seen to converge.
    pub upper: f64,
    pub estimate: f64,
    /// Threshold predicted by the stability analyzer, when available.
    pub analyzer: Option<f64>,
    pub relative_error: Option<f64>,
    pub runs: Vec<SweepRun>,
}

pub fn solve_at(p: &PairProblem, cfg: &ContinuationConfig) -> Result<SweepRun> {
    let sol = run_continuation(p, cfg)?;
    let r = sol.report;
    Ok(SweepRun {
        tau: r.tau,
        verdict: r.verdict,
        cause: r.cause,
        final_residual: r.final_residual,
        final_sup_log_f: r.final_sup_log_f,
        final_eps: r.final_eps,
    })
}

/// Independent runs at each `τ`, concurrently, in input order.
pub fn sweep_grid<B>(build: B, cfg: &ContinuationConfig, taus: &[f64]) -> Result<Vec<SweepRun>>
where
    B: Fn(f64) -> Result<PairProblem> + Sync + Send,
{
    exec::map_jobs(taus.to_vec(), |t| solve_at(&build(t)?, cfg)).into_iter().collect()
}

/// Shrinks `[lo, hi]` around the change of verdict from "not converged" to
/// "converged". Errors when both ends give the same verdict.
pub fn bisect_threshold<B>(build: B, cfg: &ContinuationConfig, set: &BisectionSettings, analyzer: Option<f64>) -> Result<ThresholdEstimate>
where
    B: Fn(f64) -> Result<PairProblem> + Sync + Send,
{
    if !(set.lo < set.hi) || !set.lo.is_finite() || !set.hi.is_finite() {
        return Err(Error::Config(format!("bracket [{}, {}] is empty", set.lo, set.hi)));
    }
    if !(set.rel_width > 0.0) || set.points_per_round == 0 {
        return Err(Error::Config("rel_width must be positive and points_per_round at least 1".into()));
    }
    let mut runs = sweep_grid(&build, cfg, &[set.lo, set.hi])?;
    let (lo_ok, hi_ok) = (runs[0].verdict == RunVerdict::Converged, runs[1].verdict == RunVerdict::Converged);
    if lo_ok || !hi_ok {
        return Err(Error::Bracket(format!(
            "verdicts at tau = {} and {} are {:?} and {:?}",
            set.lo, set.hi, runs[0].verdict, runs[1].verdict
        )));
    }
    let floor = 1e-3 * (set.hi - set.lo);
    let (mut lo, mut hi) = (set.lo, set.hi);
    for _ in 0..set.max_rounds {
        let mid = 0.5 * (lo + hi);
        if hi - lo <= (set.rel_width * mid.abs()).max(floor) {
            break;
        }
        let k = set.points_per_round;
        let pts: Vec<f64> = (1..=k).map(|j| lo + (hi - lo) * j as f64 / (k + 1) as f64).collect();
        let round = sweep_grid(&build, cfg, &pts)?;
        match round.iter().position(|r| r.verdict == RunVerdict::Converged) {
            Some(0) => hi = pts[0],
            Some(j) => {
                lo = pts[j - 1];
                hi = pts[j];
            }
            None => lo = pts[k - 1],
        }
        runs.extend(round);
    }
    let estimate = 0.5 * (lo + hi);
    let relative_error = analyzer.filter(|a| *a != 0.0).map(|a| (estimate - a).abs() / a.abs());
    Ok(ThresholdEstimate { lower: lo, upper: hi, estimate, analyzer, relative_error, runs })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::C64;
    use crate::geometry::make_torus;
    use crate::pair::curvatures_for_degrees;
    use std::f64::consts::PI;

    fn torus_line(n: usize, deg: f64) -> impl Fn(f64) -> Result<PairProblem> + Sync + Send {
        move |tau| {
            let g = make_torus(n, 1.0)?;
            let c = curvatures_for_degrees(&g, &[deg]);
            PairProblem::split(g, &c, None, &[C64::new(1.0, 0.0)], tau)
        }
    }

    #[test]
    fn constant_line_threshold() {
        let set = BisectionSettings { lo: 0.5 * 4.0 * PI, hi: 2.0 * 4.0 * PI, ..Default::default() };
        let est = bisect_threshold(torus_line(8, 1.0), &ContinuationConfig::default(), &set, Some(4.0 * PI)).unwrap();
        assert!(est.relative_error.unwrap() < 0.05, "{est:?}");
        assert!(est.upper - est.lower <= 0.01 * est.estimate + 1e-12);
    }

    #[test]
    fn degree_zero_threshold_is_zero() {
        let set = BisectionSettings { lo: -4.0 * PI, hi: 4.0 * PI, ..Default::default() };
        let est = bisect_threshold(torus_line(8, 0.0), &ContinuationConfig::default(), &set, None).unwrap();
        assert!(est.estimate.abs() <= 0.05 * 4.0 * PI, "{est:?}");
    }

    #[test]
    fn bracket_without_change_is_rejected() {
        let set = BisectionSettings { lo: 3.0 * 4.0 * PI, hi: 4.0 * 4.0 * PI, ..Default::default() };
        let r = bisect_threshold(torus_line(8, 1.0), &ContinuationConfig::default(), &set, None);
        assert!(matches!(r, Err(Error::Bracket(_))));
    }
}
