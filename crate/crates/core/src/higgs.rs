//! Higgs bundles: `L_ε(f) = iΛ(F_h + [θ, θ*_h]) − λ·id + ε·log f`.
//!
//! A Higgs problem is a [`PairProblem`] with `φ = 0`, a Higgs field and the
//! shift set to `λ`, so the continuation machinery runs unchanged.

use crate::continuation::operator::{bracket_constant, bracket_hat_at, OperatorState};
use crate::error::{Error, Result};
use crate::fiber::{self, CMat, C64};
use crate::field::{MatField, SectionField};
use crate::geometry::Geometry;
use crate::pair::{holomorphic_tolerance, PairProblem};

#[derive(Clone, Debug)]
pub struct HiggsProblem {
    pair: PairProblem,
}

impl HiggsProblem {
    /// Validates holomorphy of `θ` for the background `∂̄`.
    pub fn new(geom: Geometry, curv: MatField, a0: MatField, theta: MatField, lambda: f64) -> Result<Self> {
        let n = geom.points();
        let r = curv.rank();
        theta.check_shape(n, r)?;
        if !lambda.is_finite() {
            return Err(Error::Model("lambda must be finite".into()));
        }
        let phi = SectionField::zeros(n, r);
        let base = PairProblem::from_fields(geom, curv, a0, phi, 2.0 * lambda)?;
        let pair = base.with_fields(base.curv.clone(), base.a0.clone(), base.phi.clone(), Some(theta));
        let hp = HiggsProblem { pair };
        let defect = hp.holomorphic_defect();
        let tol = holomorphic_tolerance(hp.pair.geom.kind()) * hp.theta().sup_norm().max(1.0);
        if defect > tol {
            return Err(Error::Model(format!("theta is not holomorphic: defect {defect:e} exceeds {tol:e}")));
        }
        Ok(hp)
    }

    /// Split background with constant curvatures and the constant nilpotent
    /// Higgs field `scale·e₁⊗θ²` (zero for rank 1).
    pub fn split(geom: Geometry, curvatures: &[f64], theta_scale: f64, lambda: f64) -> Result<Self> {
        let r = curvatures.len();
        if r == 0 {
            return Err(Error::Length("empty curvature list".into()));
        }
        let n = geom.points();
        let curv = MatField::diagonal(&curvatures.iter().map(|c| vec![*c; n]).collect::<Vec<_>>());
        let mut th = CMat::zeros(r, r);
        if r >= 2 {
            th[(0, 1)] = C64::new(theta_scale, 0.0);
        }
        Self::new(geom, curv, MatField::zeros(n, r), MatField::constant(n, th), lambda)
    }

    pub fn problem(&self) -> &PairProblem {
        &self.pair
    }

    pub fn into_problem(self) -> PairProblem {
        self.pair
    }

    pub fn theta(&self) -> &MatField {
        self.pair.theta.as_ref().expect("Higgs problem carries theta")
    }

    pub fn lambda(&self) -> f64 {
        self.pair.shift
    }

    pub fn rank(&self) -> usize {
        self.pair.rank
    }

    /// `sup|∂̄_E θ|` at the form points.
    pub fn holomorphic_defect(&self) -> f64 {
        let g = &self.pair.geom;
        let th = self.theta();
        let d = g.dbar(th);
        if !self.pair.has_connection() {
            return d.sup_norm();
        }
        let a01 = self.pair.a01();
        let tb = g.to_form_grid_mat(th);
        MatField::from_fn(d.len(), self.rank(), |i| d.at(i) + fiber::commutator(a01.at(i), tb.at(i))).sup_norm()
    }

    /// `λ` that makes the traced, integrated equation consistent:
    /// `∫ tr iΛF₀ = λ·r·Vol`.
    pub fn degree_lambda(&self) -> f64 {
        let g = &self.pair.geom;
        g.integrate(&self.pair.curv.trace()) / (self.rank() as f64 * g.volume())
    }
}

/// `iΛ[θ, θ*_h]` for `h = h₀·f`, as an endomorphism.
pub fn bracket_curvature(hp: &HiggsProblem, f: &MatField) -> Result<MatField> {
    let c = bracket_constant(hp.problem());
    let th = hp.theta();
    let n = hp.problem().points();
    f.check_shape(n, hp.rank())?;
    let finv = f.pow(-1.0)?;
    Ok(MatField::from_fn(n, hp.rank(), |i| finv.at(i) * bracket_hat_at(c, th.at(i), f.at(i), finv.at(i))))
}

/// `L_ε(f)`.
pub fn residual_higgs(hp: &HiggsProblem, eps: f64, f: &MatField) -> Result<MatField> {
    crate::continuation::operator::residual_l(hp.problem(), eps, f)
}

/// `d₂L̂(ε, f)(φ)` including the bracket terms.
pub fn linearization_higgs_apply(hp: &HiggsProblem, eps: f64, f: &MatField, phi: &MatField) -> Result<MatField> {
    crate::continuation::operator::linearization_apply(hp.problem(), eps, f, phi)
}

/// `Θ = c·f^{1/2}(−[θ, f⁻¹φf⁻¹θ†f] + [θ, f⁻¹θ†φ])f^{-1/2}` with
/// `φ = f^{1/2}ηf^{1/2}`, at one fiber.
pub fn theta_form(c: f64, theta: &CMat, f: &CMat, eta: &CMat) -> Result<CMat> {
    let root = fiber::herm_pow(f, 0.5)?;
    let iroot = fiber::herm_pow(f, -0.5)?;
    let finv = fiber::herm_pow(f, -1.0)?;
    let phi = &root * eta * &root;
    let td = theta.adjoint();
    let a = fiber::commutator(theta, &(&finv * &phi * &finv * &td * f));
    let b = fiber::commutator(theta, &(&finv * &td * &phi));
    Ok(&root * (b - a) * &iroot * C64::new(c, 0.0))
}

/// `min` over probes of `h₀(Θ, η)`; every value should be `≥ 0`.
pub fn higgs_semipositivity_check(hp: &HiggsProblem, f: &MatField, probes: &[(usize, CMat)]) -> Result<f64> {
    let c = bracket_constant(hp.problem());
    let th = hp.theta();
    let mut worst = f64::INFINITY;
    for (i, eta) in probes {
        let t = theta_form(c, th.at(*i), f.at(*i), eta)?;
        worst = worst.min(fiber::inner(&t, eta));
    }
    Ok(worst)
}

/// `c·|[f^{1/2}θf^{-1/2}, η]|²`, the closed form of `h₀(Θ, η)`.
pub fn theta_form_closed(c: f64, theta: &CMat, f: &CMat, eta: &CMat) -> Result<f64> {
    let root = fiber::herm_pow(f, 0.5)?;
    let iroot = fiber::herm_pow(f, -0.5)?;
    let tw = &root * theta * &iroot;
    let k = fiber::commutator(&tw, eta);
    Ok(c * fiber::inner(&k, &k))
}

/// Residual of a solve restricted to the Higgs equation, for reports.
pub fn state_residual(hp: &HiggsProblem, eps: f64, s: &MatField) -> Result<f64> {
    Ok(OperatorState::new(hp.problem(), eps, s)?.residual_sup())
}
