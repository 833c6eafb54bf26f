//! Damped Newton–Krylov solve of `f^{-1/2} L̂(ε, f) f^{-1/2} = 0` in `s = log f`.

use serde::{Deserialize, Serialize};

use super::gmres::{gmres, GmresSettings};
use super::operator::OperatorState;
use super::ContinuationConfig;
use crate::error::Result;
use crate::field::MatField;
use crate::pair::PairProblem;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NewtonStatus {
    Converged,
    /// `sup|s|` exceeded the cap.
    Capped,
    MaxIterations,
    LineSearchFailed,
    LinearBreakdown,
}

#[derive(Clone, Debug)]
pub struct NewtonOutcome {
    pub s: MatField,
    pub residual_sup: f64,
    pub iterations: usize,
    pub linear_iterations: usize,
    pub status: NewtonStatus,
}


impl NewtonOutcome {
    pub fn converged(&self) -> bool {
        self.status == NewtonStatus::Converged
    }
}

pub fn sup_abs(s: &MatField) -> f64 {
    s.sup_norm()
}

/// Line-search merit: Euclidean norm of the packed `f^{-1/2}L̂f^{-1/2}`,
/// the quantity the Newton step linearizes.
fn merit(state: &OperatorState<'_>) -> f64 {
    state.residual_sym().pack_hermitian().iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Newton iteration from `s0` at fixed `ε`.
pub fn newton_solve(p: &PairProblem, eps: f64, s0: &MatField, cfg: &ContinuationConfig) -> Result<NewtonOutcome> {
    let mut s = s0.clone();
    let mut state = OperatorState::new(p, eps, &s)?;
    let mut res = state.residual_sup();
    let mut m = merit(&state);
    let mut linear_total = 0;
    let points = p.points();
    let rank = p.rank;
    for it in 0..=cfg.max_newton {
        if !res.is_finite() {
            return Ok(NewtonOutcome { s, residual_sup: res, iterations: it, linear_iterations: linear_total, status: NewtonStatus::LineSearchFailed });
        }
        if res <= cfg.newton_tol {
            return Ok(NewtonOutcome { s, residual_sup: res, iterations: it, linear_iterations: linear_total, status: NewtonStatus::Converged });
        }
        if sup_abs(&s) > cfg.cap {
            return Ok(NewtonOutcome { s, residual_sup: res, iterations: it, linear_iterations: linear_total, status: NewtonStatus::Capped });
        }
        if it == cfg.max_newton {
            break;
        }
        let sigma = state.preconditioner_shift();
        let rhs: Vec<f64> = state.residual_sym().pack_hermitian().iter().map(|v| -v).collect();
        let st = &state;
        let apply = |v: &[f64]| st.apply_sym(&MatField::unpack_hermitian(points, rank, v)).pack_hermitian();
        let precond = |v: &[f64]| st.precondition_sym(&MatField::unpack_hermitian(points, rank, v), sigma).pack_hermitian();
        let settings = GmresSettings { tol: cfg.lin_tol, restart: cfg.restart, max_iterations: cfg.max_linear };
        let lin = gmres(apply, precond, &rhs, settings);
        linear_total += lin.iterations;
        // A breakdown that still reduced the residual gives a usable inexact
        // step; at ε = 0 the scale of a summand without φ is a null direction.
        if !lin.relative_residual.is_finite() || lin.relative_residual > 0.5 {
            let status = if res <= 10.0 * cfg.newton_tol.max(state.roundoff_floor()?) { NewtonStatus::Converged } else { NewtonStatus::LinearBreakdown };
            return Ok(NewtonOutcome { s, residual_sup: res, iterations: it, linear_iterations: linear_total, status });
        }
        let step = MatField::unpack_hermitian(points, rank, &lin.x);
        let mut alpha = 1.0;
        let accepted = loop {
            let trial = s.axpy(alpha, &step);
            let trial_state = OperatorState::new(p, eps, &trial)?;
            let trial_m = merit(&trial_state);
            if trial_m.is_finite() && trial_m <= (1.0 - cfg.armijo * alpha) * m {
                break Some((trial, trial_state, trial_m));
            }
            alpha *= 0.5;
            if alpha < cfg.min_step {
                break None;
            }
        };
        match accepted {
            Some((trial, trial_state, trial_m)) => {
                drop(state);
                s = trial;
                state = trial_state;
                res = state.residual_sup();
                m = trial_m;
            }
            None => {
                // Stagnation inside the success band is the roundoff floor.
                let status = if res <= 10.0 * cfg.newton_tol.max(state.roundoff_floor()?) { NewtonStatus::Converged } else { NewtonStatus::LineSearchFailed };
                return Ok(NewtonOutcome { s, residual_sup: res, iterations: it + 1, linear_iterations: linear_total, status });
            }
        }
    }
    Ok(NewtonOutcome { s, residual_sup: res, iterations: cfg.max_newton, linear_iterations: linear_total, status: NewtonStatus::MaxIterations })
}
