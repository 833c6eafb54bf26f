//! The perturbed operator `L̂(ε, f) = f·L_ε(f)` and its derivative.
//!
//! The discrete `L̂` is the Hermitian part of `f·M` with
//! `M = iΛF₀ + iΛ∂̄_E(f⁻¹∂₀f) + ½φφ†f − shift + ε·log f`, plus the Higgs term
//! `f·iΛ[θ, θ*_h]`, which is already Hermitian. In the continuum `f·M` is
//! Hermitian on its own; taking the Hermitian part removes the discretization
//! defect without changing the zero set's meaning.

use crate::error::Result;
use crate::exec;
use crate::fiber::{self, dd1_exp, CMat, ExpKernel, HermEigen, TwoVarKernel, C64};
use crate::field::MatField;
use crate::pair::PairProblem;

/// `1/exp[x, y]`: with eigenvalues of `s`, `funcalc_two` of this kernel is
/// `Dlog_f` for `f = e^s`.
struct InverseExpKernel;

impl TwoVarKernel for InverseExpKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        1.0 / dd1_exp(x, y)
    }
}

/// Kernel of `δs ↦ Dexp_{-s/2}[-δs/2]`.
struct HalfInverseRootKernel;

impl TwoVarKernel for HalfInverseRootKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        -0.5 * dd1_exp(-0.5 * x, -0.5 * y)
    }
}

/// Signed contraction constant of the Higgs bracket, `iΛ(e∧ē)`.
pub fn bracket_constant(p: &PairProblem) -> f64 {
    -p.geom.lambda_sign() * p.geom.kappa()
}

/// `f·iΛ[θ, θ*_h] = c·(fΘf⁻¹Θ†f − Θ†fΘ)` at one point.
pub fn bracket_hat_at(c: f64, theta: &CMat, f: &CMat, finv: &CMat) -> CMat {
    let td = theta.adjoint();
    let a = f * theta * finv * &td * f;
    let b = &td * f * theta;
    (a - b) * C64::new(c, 0.0)
}

/// Directional derivative of [`bracket_hat_at`] along `φ` in `f`.
pub fn bracket_hat_derivative_at(c: f64, theta: &CMat, f: &CMat, finv: &CMat, phi: &CMat) -> CMat {
    let td = theta.adjoint();
    let tfi = theta * finv;
    let left = phi * &tfi * &td * f;
    let mid = f * &tfi * phi * finv * &td * f;
    let right = f * &tfi * &td * phi;
    let b = &td * phi * theta;
    (left - mid + right - b) * C64::new(c, 0.0)
}

/// Everything the residual and the linearization need at one state `s`.
pub struct OperatorState<'a> {
    p: &'a PairProblem,
    eps: f64,
    s: MatField,
    f: MatField,
    finv: MatField,
    node_eig: Vec<HermEigen>,
    form_eig: Vec<HermEigen>,
    form_e: MatField,
    form_einv: MatField,
    /// `Ds` at the form points.
    ds: MatField,
    /// `Dexp_S[Ds]` at the form points.
    dexp_ds: MatField,
    /// Raw vortex part of `M` including `ε s`.
    m_raw: MatField,
    hat: MatField,
    /// `f^{-1/2} L̂ f^{-1/2}`.
    sym: MatField,
}

impl<'a> OperatorState<'a> {
    pub fn new(p: &'a PairProblem, eps: f64, s: &MatField) -> Result<Self> {
        s.check_shape(p.points(), p.rank)?;
        let g = &p.geom;
        let node_eig = s.eigen();
        let f = MatField::from_vec(p.rank, exec::map_slice(&node_eig, |e| e.apply_one(f64::exp)));
        let finv = MatField::from_vec(p.rank, exec::map_slice(&node_eig, |e| e.apply_one(|x| (-x).exp())));
        let sbar = g.to_form_grid_mat(s);
        let form_eig = sbar.eigen();
        let form_e = MatField::from_vec(p.rank, exec::map_slice(&form_eig, |e| e.apply_one(f64::exp)));
        let form_einv = MatField::from_vec(p.rank, exec::map_slice(&form_eig, |e| e.apply_one(|x| (-x).exp())));
        let ds = g.d10_mat(s);
        let dexp_ds = MatField::from_vec(
            p.rank,
            exec::map_indices(ds.len(), |i| form_eig[i].apply_two(&ExpKernel, ds.at(i))),
        );
        let conn = MatField::from_fn(ds.len(), p.rank, |i| {
            let mut c = form_einv.at(i) * dexp_ds.at(i);
            if p.has_connection() {
                let a = p.a0.at(i);
                c += form_einv.at(i) * a * form_e.at(i) - a;
            }
            c
        });
        let upd = p.lambda_dbar_end(&conn);
        let pt = p.phi_term(&f);
        let half = C64::new(0.5, 0.0);
        let shift = fiber::scaled_identity(p.rank, p.shift);
        let e = C64::new(eps, 0.0);
        let m_raw = MatField::from_fn(p.points(), p.rank, |i| {
            p.curv.at(i) + upd.at(i) + pt.at(i) * half - &shift + s.at(i) * e
        });
        let bc = bracket_constant(p);
        let hat = MatField::from_fn(p.points(), p.rank, |i| {
            let mut h = fiber::hermitian_part(&(f.at(i) * m_raw.at(i)));
            if let Some(th) = &p.theta {
                h += bracket_hat_at(bc, th.at(i), f.at(i), finv.at(i));
            }
            h
        });
        let root = MatField::from_vec(p.rank, exec::map_slice(&node_eig, |e| e.apply_one(|x| (0.5 * x).exp())));
        let iroot = MatField::from_vec(p.rank, exec::map_slice(&node_eig, |e| e.apply_one(|x| (-0.5 * x).exp())));
        let sym = MatField::from_fn(p.points(), p.rank, |i| {
            let mut h = fiber::hermitian_part(&(root.at(i) * m_raw.at(i) * iroot.at(i)));
            if let Some(th) = &p.theta {
                h += fiber::hermitian_part(&(iroot.at(i) * bracket_hat_at(bc, th.at(i), f.at(i), finv.at(i)) * iroot.at(i)));
            }
            h
        });
        Ok(OperatorState {
            p,
            eps,
            s: s.clone(),
            f,
            finv,
            node_eig,
            form_eig,
            form_e,
            form_einv,
            ds,
            dexp_ds,
            m_raw,
            hat,
            sym,
        })
    }

    pub fn problem(&self) -> &PairProblem {
        self.p
    }

    pub fn eps(&self) -> f64 {
        self.eps
    }

    pub fn s(&self) -> &MatField {
        &self.s
    }

    pub fn f(&self) -> &MatField {
        &self.f
    }

    pub fn finv(&self) -> &MatField {
        &self.finv
    }

    /// `L̂(ε, f)`, Hermitian.
    pub fn residual_hat(&self) -> &MatField {
        &self.hat
    }

    /// `L_ε(f) = f⁻¹ L̂`.
    pub fn residual(&self) -> MatField {
        self.finv.mul(&self.hat)
    }

    /// `sup_x |L_ε(f)(x)|_h`, the pointwise norm in the metric `h = h₀·f`,
    /// which equals the Frobenius norm of `f^{1/2} L f^{-1/2}`.
    pub fn residual_sup(&self) -> f64 {
        self.sym.sup_norm()
    }

    /// `Dlog_f[φ]`.
    pub fn log_derivative(&self, phi: &MatField) -> MatField {
        MatField::from_vec(
            self.p.rank,
            exec::map_indices(phi.len(), |i| self.node_eig[i].apply_two(&InverseExpKernel, phi.at(i))),
        )
    }

    /// `Dexp_s[δs]`.
    pub fn exp_derivative(&self, ds: &MatField) -> MatField {
        MatField::from_vec(
            self.p.rank,
            exec::map_indices(ds.len(), |i| self.node_eig[i].apply_two(&ExpKernel, ds.at(i))),
        )
    }

    /// Derivative of `f⁻¹∂₀f` along `δs`, at the form points.
    fn connection_derivative(&self, dels: &MatField) -> MatField {
        let g = &self.p.geom;
        let ybar = g.to_form_grid_mat(dels);
        let y = g.d10_mat(dels);
        let has_a0 = self.p.has_connection();
        MatField::from_vec(
            self.p.rank,
            exec::map_indices(y.len(), |i| {
                let eig = &self.form_eig[i];
                let einv = self.form_einv.at(i);
                let d_ybar = eig.apply_two(&ExpKernel, ybar.at(i));
                let d_y = eig.apply_two(&ExpKernel, y.at(i));
                let dd = fiber::d2_exp(eig, self.ds.at(i), ybar.at(i));
                let de_inv = -(einv * &d_ybar * einv);
                let mut out = &de_inv * self.dexp_ds.at(i) + einv * (dd + d_y);
                if has_a0 {
                    let a = self.p.a0.at(i);
                    out += &de_inv * a * self.form_e.at(i) + einv * a * &d_ybar;
                }
                out
            }),
        )
    }

    fn apply_core(&self, phi: &MatField, dels: &MatField) -> MatField {
        let p = self.p;
        let du = p.lambda_dbar_end(&self.connection_derivative(dels));
        let half = C64::new(0.5, 0.0);
        let e = C64::new(self.eps, 0.0);
        let bc = bracket_constant(p);
        MatField::from_vec(
            p.rank,
            exec::map_indices(phi.len(), |i| {
                let ph = phi.at(i);
                let sec = p.phi.at(i);
                let dm = du.at(i) + sec * (sec.adjoint() * ph) * half + dels.at(i) * e;
                let mut out = fiber::hermitian_part(&(ph * self.m_raw.at(i) + self.f.at(i) * dm));
                if let Some(th) = &p.theta {
                    out += bracket_hat_derivative_at(bc, th.at(i), self.f.at(i), self.finv.at(i), ph);
                }
                out
            }),
        )
    }

    /// `d₂L̂(ε, f)(φ)` for a Hermitian variation `φ` of `f`.
    pub fn apply_f(&self, phi: &MatField) -> MatField {
        let dels = self.log_derivative(phi);
        self.apply_core(phi, &dels)
    }

    /// Derivative of `L̂` along an additive variation `δs` of `s = log f`.
    pub fn apply_s(&self, dels: &MatField) -> MatField {
        let phi = self.exp_derivative(dels);
        self.apply_core(&phi, dels)
    }

    /// `f^{-1/2}` at the nodes.
    pub fn inverse_root(&self) -> MatField {
        MatField::from_vec(self.p.rank, exec::map_slice(&self.node_eig, |e| e.apply_one(|x| (-0.5 * x).exp())))
    }

    /// Symmetric residual `f^{-1/2} L̂ f^{-1/2}`, Hermitian and similar to
    /// `L_ε(f)` pointwise. Unlike `L̂` it does not vanish as `f → 0`.
    pub fn residual_sym(&self) -> &MatField {
        &self.sym
    }

    /// Resolution limit of [`residual_sup`](Self::residual_sup): the change of
    /// the residual when `s` is perturbed at the size of its own rounding,
    /// `8·ε_mach·max(1, sup|s|)` per entry, with a fixed pseudo-random sign
    /// pattern.
    pub fn roundoff_floor(&self) -> Result<f64> {
        let scale = 8.0 * f64::EPSILON * self.s.sup_norm().max(1.0);
        let n = self.s.len();
        let r = self.p.rank;
        let mut seed: u64 = 0x9e37_79b9_7f4a_7c15;
        let mut coin = move || {
            seed ^= seed << 13;
            seed ^= seed >> 7;
            seed ^= seed << 17;
            if seed & 1 == 0 { 1.0 } else { -1.0 }
        };
        let dof: Vec<f64> = (0..MatField::hermitian_dof(n, r)).map(|_| scale * coin()).collect();
        let pert = self.s.add(&MatField::unpack_hermitian(n, r, &dof));
        let other = OperatorState::new(self.p, self.eps, &pert)?;
        Ok(other.sym.sub(&self.sym).sup_norm())
    }

    /// Derivative of [`residual_sym`](Self::residual_sym) along `δs`.
    pub fn apply_sym(&self, dels: &MatField) -> MatField {
        let dhat = self.apply_s(dels);
        let e = self.inverse_root();
        MatField::from_vec(
            self.p.rank,
            exec::map_indices(dels.len(), |i| {
                let de = self.node_eig[i].apply_two(&HalfInverseRootKernel, dels.at(i));
                let eh = e.at(i) * self.hat.at(i);
                let x = &de * self.hat.at(i) * e.at(i) + e.at(i) * dhat.at(i) * e.at(i) + eh * de;
                fiber::hermitian_part(&x)
            }),
        )
    }

    /// Approximate inverse of [`apply_sym`](Self::apply_sym).
    pub fn precondition_sym(&self, r: &MatField, sigma: f64) -> MatField {
        let root = MatField::from_vec(self.p.rank, exec::map_slice(&self.node_eig, |e| e.apply_one(|x| (0.5 * x).exp())));
        let rhat = MatField::from_fn(r.len(), self.p.rank, |i| root.at(i) * r.at(i) * root.at(i));
        self.precondition(&rhat, sigma)
    }

    /// Shift for the `(P + σ)⁻¹` preconditioner.
    pub fn preconditioner_shift(&self) -> f64 {
        let p = self.p;
        let mass: Vec<f64> = exec::map_indices(p.points(), |i| {
            let v = p.phi.at(i);
            (v.adjoint() * self.f.at(i) * v)[(0, 0)].re
        });
        let mean = exec::ordered_sum(&mass) / mass.len() as f64;
        (self.eps + 0.5 * mean / p.rank as f64).max(1e-3)
    }

    /// Approximate inverse of [`apply_s`](Self::apply_s):
    /// `δs ≈ (P + σ)⁻¹ H(f⁻¹ r)`.
    pub fn precondition(&self, r: &MatField, sigma: f64) -> MatField {
        let scaled = self.finv.zip_map(r, |fi, x| fiber::hermitian_part(&(fi * x)));
        self.p.geom.solve_shifted_mat(&scaled, sigma).hermitian_part()
    }
}

/// `L_ε(f)` for `f = e^s`.
pub fn residual_l(p: &PairProblem, eps: f64, f: &MatField) -> Result<MatField> {
    let s = f.log()?;
    Ok(OperatorState::new(p, eps, &s)?.residual())
}

/// `L̂(ε, f) = f·L_ε(f)`.
pub fn residual_hat(p: &PairProblem, eps: f64, f: &MatField) -> Result<MatField> {
    let s = f.log()?;
    Ok(OperatorState::new(p, eps, &s)?.residual_hat().clone())
}

/// Matrix-free `d₂L̂(ε, f)(φ)`.
pub fn linearization_apply(p: &PairProblem, eps: f64, f: &MatField, phi: &MatField) -> Result<MatField> {
    let s = f.log()?;
    Ok(OperatorState::new(p, eps, &s)?.apply_f(phi))
}
