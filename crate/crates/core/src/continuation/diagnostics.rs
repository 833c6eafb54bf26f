//! Runtime checks of the estimates and identities along a continuation run.

use serde::{Deserialize, Serialize};

use super::gmres::smallest_singular_estimate;
use super::operator::OperatorState;
use crate::error::Result;
use crate::exec;
use crate::fiber::{self, HermEigen, PsiKernel, C64};
use crate::field::MatField;
use crate::geometry::Geometry;
use crate::pair::PairProblem;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub eps: f64,
    pub residual_sup: f64,
    pub sup_log_f: f64,
    pub l2_log_f: f64,
    /// `ε⁻¹ sup|K⁰_{h₀}|`.
    #[serde(with = "crate::serde_float")]
    pub apriori_bound: f64,
    /// `apriori_bound − sup|log f|`; negative means the estimate is violated.
    #[serde(with = "crate::serde_float")]
    pub apriori_margin: f64,
    /// `min_x (|K⁰||s| − ½P(|s|²) − ε|s|²)`.
    #[serde(with = "crate::serde_float")]
    pub pointwise_margin: f64,
    pub energy_lhs: f64,
    pub energy_rhs: f64,
    pub energy_gap: f64,
    pub energy_scale: f64,
    /// `∫⟨φ⊗φ*_{h₀f} − φ⊗φ*_{h₀}, log f⟩`.
    pub monotonicity: f64,
    /// `sup|log(f_prev^{-1/2} f f_prev^{-1/2})|` against the previous accepted state.
    pub cauchy_increment: Option<f64>,
    pub newton_iters: usize,
    pub linear_iters: usize,
    pub sigma_min_estimate: Option<f64>,
}

/// Terms of the integrated energy identity
/// `−ε‖s‖² = ∫⟨iΛF₀ + ½φ⊗φ*_{h₀f} − (τ/2)id, s⟩ + ∫⟨Ψ(s)(∂̄s), ∂̄s⟩`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EnergyIdentity {
    pub lhs: f64,
    pub curvature_term: f64,
    pub psi_term: f64,
    pub gap: f64,
    pub scale: f64,
}

/// `κ ∫ ⟨Ψ(s̄)(∂̄_E s), ∂̄_E s⟩` at the form points.
pub fn psi_energy(p: &PairProblem, s: &MatField) -> f64 {
    let g = &p.geom;
    let sbar = g.to_form_grid_mat(s);
    let mut b = g.dbar(s);
    if p.has_connection() {
        let a01 = p.a01();
        b = MatField::from_fn(b.len(), p.rank, |i| b.at(i) + fiber::commutator(a01.at(i), sbar.at(i)));
    }
    let dens: Vec<f64> = exec::map_indices(b.len(), |i| {
        let eig = HermEigen::new(sbar.at(i));
        fiber::inner(&eig.apply_two(&PsiKernel, b.at(i)), b.at(i))
    });
    g.kappa() * g.integrate(&dens)
}

pub fn energy_identity(p: &PairProblem, eps: f64, s: &MatField, f: &MatField) -> EnergyIdentity {
    let g = &p.geom;
    let lhs = -eps * g.inner_mat(s, s);
    let pt = p.phi_term(f);
    let half = C64::new(0.5, 0.0);
    let shift = fiber::scaled_identity(p.rank, p.shift);
    let k = MatField::from_fn(p.points(), p.rank, |i| p.curv.at(i) + pt.at(i) * half - &shift);
    let curvature_term = g.inner_mat(&k, s);
    let psi_term = psi_energy(p, s);
    let gap = (lhs - curvature_term - psi_term).abs();
    // Sum of the magnitudes of the pieces before they cancel. At a solution
    // with ε = 0 the curvature term itself is a cancellation of O(1) parts.
    let pieces = [
        g.inner_mat(&p.curv, s).abs(),
        0.5 * g.inner_mat(&pt, s).abs(),
        p.shift.abs() * g.integrate_trace(s).abs(),
    ];
    let scale = lhs.abs() + pieces.iter().sum::<f64>() + psi_term.abs();
    EnergyIdentity { lhs, curvature_term, psi_term, gap, scale }
}

/// Pointwise identity `iΛ tr(f⁻¹∂f ∂̄s) = ⟨Ψ(s)(∂̄s), ∂̄s⟩` with
/// the left side built from differences of `f` itself. Returns
/// `∫|LHS − RHS| dvol`.
pub fn psi_identity_check(g: &Geometry, f: &MatField) -> Result<f64> {
    let s = f.log()?;
    let df = g.d10_mat(f);
    let ds_bar = g.dbar(&s);
    let sbar = g.to_form_grid_mat(&s);
    let k = g.kappa();
    let gap: Vec<f64> = exec::map_indices(df.len(), |i| {
        let eig = HermEigen::new(sbar.at(i));
        let fbinv = eig.apply_one(|x| (-x).exp());
        let lhs = k * (fbinv * df.at(i) * ds_bar.at(i)).trace().re;
        let rhs = k * fiber::inner(&eig.apply_two(&PsiKernel, ds_bar.at(i)), ds_bar.at(i));
        (lhs - rhs).abs()
    });
    Ok(g.integrate(&gap))
}

/// `sup|K⁰_{h₀}|` for the reference metric of the problem.
pub fn reference_curvature_sup(p: &PairProblem) -> f64 {
    let mut k = p.mean_curvature_reference();
    if let Some(th) = &p.theta {
        let c = super::operator::bracket_constant(p);
        let id = fiber::identity(p.rank);
        k = k.zip_map(th, |m, t| m + super::operator::bracket_hat_at(c, t, &id, &id));
    }
    k.sup_norm()
}

/// `min_x (|K⁰||s| − ½P(|s|²) − ε|s|²)`.
pub fn pointwise_margin(p: &PairProblem, eps: f64, s: &MatField) -> Result<f64> {
    let k0 = p.mean_curvature_reference();
    let n2 = s.pointwise_norm_sq();
    let pn = p.geom.p_operator(&n2)?;
    Ok((0..n2.len())
        .map(|i| fiber::norm(k0.at(i)) * n2[i].sqrt() - 0.5 * pn[i] - eps * n2[i])
        .fold(f64::INFINITY, f64::min))
}

pub fn monotonicity_integral(p: &PairProblem, s: &MatField, f: &MatField) -> f64 {
    let d: Vec<f64> = exec::map_indices(p.points(), |i| {
        let v = p.phi.at(i);
        let m = f.at(i) * s.at(i) - s.at(i);
        (v.adjoint() * m * v)[(0, 0)].re
    });
    p.geom.integrate(&d)
}

pub fn cauchy_increment(prev_f: &MatField, f: &MatField) -> Result<f64> {
    let root = prev_f.pow(-0.5)?;
    let rel = MatField::from_fn(f.len(), f.rank(), |i| fiber::hermitian_part(&(root.at(i) * f.at(i) * root.at(i))));
    Ok(rel.log()?.sup_norm())
}

/// Arnoldi estimate of the smallest singular value of `d₂L̂` in the `s`
/// variable, from a deterministic start vector.
pub fn sigma_min_estimate(state: &OperatorState<'_>, steps: usize, seed: u64) -> f64 {
    use rand::{Rng, SeedableRng};
    let p = state.problem();
    let (n, r) = (p.points(), p.rank);
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let start: Vec<f64> = (0..MatField::hermitian_dof(n, r)).map(|_| rng.gen_range(-1.0..1.0)).collect();
    smallest_singular_estimate(|v| state.apply_s(&MatField::unpack_hermitian(n, r, v)).pack_hermitian(), &start, steps)
}

pub struct DiagnosticsInput<'a> {
    pub state: &'a OperatorState<'a>,
    pub prev_f: Option<&'a MatField>,
    pub newton_iters: usize,
    pub linear_iters: usize,
    pub k0_sup: f64,
    pub ritz_steps: usize,
    pub seed: u64,
}

pub fn diagnostics_check(inp: DiagnosticsInput<'_>) -> Result<DiagnosticsRecord> {
    let st = inp.state;
    let p = st.problem();
    let eps = st.eps();
    let s = st.s();
    let f = st.f();
    let sup_log_f = s.sup_norm();
    let apriori_bound = if eps > 0.0 { inp.k0_sup / eps } else { f64::INFINITY };
    let e = energy_identity(p, eps, s, f);
    Ok(DiagnosticsRecord {
        eps,
        residual_sup: st.residual_sup(),
        sup_log_f,
        l2_log_f: p.geom.l2_norm_mat(s),
        apriori_bound,
        apriori_margin: apriori_bound - sup_log_f,
        pointwise_margin: pointwise_margin(p, eps, s)?,
        energy_lhs: e.lhs,
        energy_rhs: e.curvature_term + e.psi_term,
        energy_gap: e.gap,
        energy_scale: e.scale,
        monotonicity: monotonicity_integral(p, s, f),
        cauchy_increment: match inp.prev_f {
            Some(pf) => Some(cauchy_increment(pf, f)?),
            None => None,
        },
        newton_iters: inp.newton_iters,
        linear_iters: inp.linear_iters,
        sigma_min_estimate: if inp.ritz_steps > 0 { Some(sigma_min_estimate(st, inp.ritz_steps, inp.seed)) } else { None },
    })
}
