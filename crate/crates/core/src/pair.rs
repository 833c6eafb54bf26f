//! Holomorphic pair instances and slope-stability analysis of split models.

use std::f64::consts::PI;

use nalgebra::{DMatrix, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fiber::{self, CMat, CVec, ConnectionKernel, HermEigen, C64};
use crate::field::{MatField, SectionField};
use crate::geometry::{BackendKind, Geometry};

/// Holomorphicity tolerance for `φ`, relative to `sup|φ|`.
pub fn holomorphic_tolerance(kind: BackendKind) -> f64 {
    match kind {
        BackendKind::Torus => 1e-8,
        BackendKind::Hopf => 1e-6,
    }
}

/// Line-bundle summands, the summand carrying `φ`, and non-split extensions.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitModel {
    pub degrees: Vec<f64>,
    pub phi_index: usize,
    /// `(a, b)`: summand `a` is a subbundle and `b` a quotient of a non-split
    /// extension, so an invariant sub-sum containing `b` must contain `a`.
    #[serde(default)]
    pub extensions: Vec<(usize, usize)>,
}

impl SplitModel {
    pub fn new(degrees: Vec<f64>, phi_index: usize) -> Result<Self> {
        Self::with_extensions(degrees, phi_index, Vec::new())
    }

    pub fn with_extensions(degrees: Vec<f64>, phi_index: usize, extensions: Vec<(usize, usize)>) -> Result<Self> {
        let m = SplitModel { degrees, phi_index, extensions };
        m.validate()?;
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let r = self.degrees.len();
        if r == 0 {
            return Err(Error::Model("split model has no summands".into()));
        }
        if r > 20 {
            return Err(Error::Model(format!("split model rank {r} is too large to enumerate")));
        }
        if self.phi_index >= r {
            return Err(Error::Model(format!("phi summand {} out of range for rank {r}", self.phi_index)));
        }
        for &(a, b) in &self.extensions {
            if a >= r || b >= r || a == b {
                return Err(Error::Model(format!("invalid extension ({a}, {b}) for rank {r}")));
            }
        }
        if self.degrees.iter().any(|d| !d.is_finite()) {
            return Err(Error::Model("degrees must be finite".into()));
        }
        Ok(())
    }

    pub fn rank(&self) -> usize {
        self.degrees.len()
    }

    pub fn total_degree(&self) -> f64 {
        self.degrees.iter().sum()
    }

    pub fn slope(&self) -> f64 {
        self.total_degree() / self.rank() as f64
    }

    fn admissible(&self, mask: u32) -> bool {
        self.extensions.iter().all(|&(a, b)| mask & (1 << b) == 0 || mask & (1 << a) != 0)
    }

    /// Every admissible nonempty coordinate sub-sum, `E` itself last.
    pub fn subsums(&self) -> Vec<SubSum> {
        let r = self.rank();
        let full = (1u32 << r) - 1;
        let total = self.total_degree();
        (1..=full)
            .filter(|&m| self.admissible(m))
            .map(|mask| {
                let members: Vec<usize> = (0..r).filter(|k| mask & (1 << k) != 0).collect();
                let degree: f64 = members.iter().map(|&k| self.degrees[k]).sum();
                let rank = members.len();
                let quotient_slope =
                    if rank < r { Some((total - degree) / (r - rank) as f64) } else { None };
                SubSum {
                    contains_phi: mask & (1 << self.phi_index) != 0,
                    slope: degree / rank as f64,
                    members,
                    degree,
                    rank,
                    quotient_slope,
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubSum {
    pub members: Vec<usize>,
    pub degree: f64,
    pub rank: usize,
    pub slope: f64,
    pub quotient_slope: Option<f64>,
    pub contains_phi: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Verdict {
    #[serde(rename = "tau-stable")]
    Stable,
    #[serde(rename = "boundary")]
    Boundary,
    #[serde(rename = "unstable")]
    Unstable,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Stable => "tau-stable",
            Verdict::Boundary => "boundary",
            Verdict::Unstable => "unstable",
        };
        f.write_str(s)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StabilityReport {
    pub mu_max: f64,
    /// `None` stands for `+∞` (no proper sub-sum contains `φ`).
    pub mu_min_phi: Option<f64>,
    pub window_lo: f64,
    /// `None` stands for `+∞`.
    pub window_hi: Option<f64>,
    pub window_empty: bool,
    pub volume: f64,
    pub tau: Option<f64>,
    pub verdict: Option<Verdict>,
    pub audited: Vec<SubSum>,
    pub scope: String,
}

pub const AUDIT_SCOPE: &str = "coordinate sub-sums of the declared split model only";

const BOUNDARY_TOL: f64 = 1e-9;

pub fn mu_max(m: &SplitModel, _g: &Geometry) -> Result<f64> {
    m.validate()?;
    Ok(m.subsums().iter().map(|s| s.slope).fold(f64::NEG_INFINITY, f64::max))
}

/// Smallest quotient slope over proper sub-sums containing `φ`; `+∞` if none.
pub fn mu_min_phi(m: &SplitModel, _g: &Geometry) -> Result<f64> {
    m.validate()?;
    Ok(m
        .subsums()
        .iter()
        .filter(|s| s.contains_phi)
        .filter_map(|s| s.quotient_slope)
        .fold(f64::INFINITY, f64::min))
}

fn tau_to_slope(g: &Geometry, tau: f64) -> f64 {
    tau * g.volume() / (4.0 * PI)
}

fn slope_to_tau(g: &Geometry, mu: f64) -> f64 {
    4.0 * PI * mu / g.volume()
}

fn verdict_for(lo: f64, hi: f64, x: f64) -> Verdict {
    let near = |a: f64| a.is_finite() && (x - a).abs() <= BOUNDARY_TOL * a.abs().max(1.0);
    if near(lo) || near(hi) {
        Verdict::Boundary
    } else if lo < x && x < hi {
        Verdict::Stable
    } else {
        Verdict::Unstable
    }
}

pub fn classify(m: &SplitModel, g: &Geometry, tau: f64) -> Result<Verdict> {
    Ok(verdict_for(mu_max(m, g)?, mu_min_phi(m, g)?, tau_to_slope(g, tau)))
}

pub fn stability_window(m: &SplitModel, g: &Geometry, tau: Option<f64>) -> Result<StabilityReport> {
    let hi = mu_min_phi(m, g)?;
    let lo = mu_max(m, g)?;
    let finite = |x: f64| if x.is_finite() { Some(x) } else { None };
    Ok(StabilityReport {
        mu_max: lo,
        mu_min_phi: finite(hi),
        window_lo: slope_to_tau(g, lo),
        window_hi: finite(slope_to_tau(g, hi)),
        window_empty: lo >= hi,
        volume: g.volume(),
        tau,
        verdict: tau.map(|t| verdict_for(lo, hi, tau_to_slope(g, t))),
        audited: m.subsums(),
        scope: AUDIT_SCOPE.to_string(),
    })
}

/// `ν = λ·rank E·(μ(E) − τ·Vol/4π)`.
pub fn nu_case1(lambda: f64, m: &SplitModel, g: &Geometry, tau: f64) -> Result<f64> {
    m.validate()?;
    Ok(lambda * m.rank() as f64 * (m.slope() - tau_to_slope(g, tau)))
}

/// `ν` for distinct eigenvalues `λ_1 < … < λ_l` and the chain of sub-objects
/// `(μ(E_i), rank E_i)`, `i = 1, …, l−1`.
pub fn nu_case2(eigenvalues: &[f64], chain: &[(f64, f64)], m: &SplitModel, g: &Geometry, tau: f64) -> Result<f64> {
    m.validate()?;
    let l = eigenvalues.len();
    if l < 2 || chain.len() != l - 1 {
        return Err(Error::Length(format!(
            "{} eigenvalues need {} chain entries, got {}",
            l,
            l.saturating_sub(1),
            chain.len()
        )));
    }
    if eigenvalues.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::Model("eigenvalues must be sorted ascending".into()));
    }
    let x = tau_to_slope(g, tau);
    let mut nu = eigenvalues[l - 1] * m.rank() as f64 * (m.slope() - x);
    for (i, &(mu_i, r_i)) in chain.iter().enumerate() {
        nu -= (eigenvalues[i + 1] - eigenvalues[i]) * r_i * (mu_i - x);
    }
    Ok(nu)
}

/// Constant `iΛF` per summand realizing the given degrees.
pub fn curvatures_for_degrees(g: &Geometry, degrees: &[f64]) -> Vec<f64> {
    degrees.iter().map(|&d| g.constant_curvature(d)).collect()
}

/// Degrees of the diagonal summands of a curvature field.
pub fn summand_degrees(g: &Geometry, curv: &MatField) -> Vec<f64> {
    (0..curv.rank())
        .map(|k| g.degree(&curv.component(k, k).iter().map(|z| z.re).collect::<Vec<_>>()))
        .collect()
}

/// Smooth periodic metric weight used to make instances spatially non-trivial.
pub fn weight_profile(g: &Geometry, amp: f64, k: usize) -> Vec<f64> {
    let l = g.period();
    let ph = 0.9 * k as f64;
    (0..g.points())
        .map(|i| {
            let (x, y) = g.node_coords(i);
            match g.kind() {
                BackendKind::Torus => {
                    amp * ((2.0 * PI * x / l + ph).cos() + 0.5 * (2.0 * PI * (x + (k as f64 + 1.0) * y) / l).sin())
                }
                BackendKind::Hopf => amp * ((2.0 * PI * x / l + ph).sin() + 0.3 * (4.0 * PI * x / l).cos()),
            }
        })
        .collect()
}

/// `f⁻¹∂_{A₀}f` at the form points for `f = e^s`; `a0 = None` is the
/// trivial connection.
pub fn connection_form_with(g: &Geometry, a0: Option<&MatField>, s: &MatField) -> MatField {
    let ds = g.d10_mat(s);
    let sbar = g.to_form_grid_mat(s);
    MatField::from_fn(ds.len(), s.rank(), |i| {
        let eig = HermEigen::new(sbar.at(i));
        let mut c = eig.apply_two(&ConnectionKernel, ds.at(i));
        if let Some(a0) = a0 {
            let a = a0.at(i);
            let fb = eig.apply_one(f64::exp);
            let fbinv = eig.apply_one(|x| (-x).exp());
            c += &fbinv * a * &fb - a;
        }
        c
    })
}

/// A holomorphic pair (or, with `theta`, a Higgs bundle) over a backend, in a
/// unitary frame of the reference metric `h₀`.
#[derive(Clone, Debug)]
pub struct PairProblem {
    pub geom: Geometry,
    pub rank: usize,
    /// `iΛF_{h₀}` at the nodes.
    pub curv: MatField,
    /// (1,0) connection coefficient at the form points; the (0,1) part is `-A₀†`.
    pub a0: MatField,
    pub phi: SectionField,
    /// Higgs field coefficient at the nodes.
    pub theta: Option<MatField>,
    /// `τ/2` for pairs, `λ` for Higgs bundles.
    pub shift: f64,
    pub model: Option<SplitModel>,
    a0_zero: bool,
}

impl PairProblem {
    /// Assembles and validates a pair from raw fields.
    pub fn from_fields(geom: Geometry, curv: MatField, a0: MatField, phi: SectionField, tau: f64) -> Result<Self> {
        let n = geom.points();
        let r = curv.rank();
        curv.check_shape(n, r)?;
        a0.check_shape(n, r)?;
        if phi.len() != n || phi.rank() != r {
            return Err(Error::Shape(format!("phi has {} points of rank {}", phi.len(), phi.rank())));
        }
        if curv.hermitian_defect() > 1e-12 {
            return Err(Error::Model("background curvature is not Hermitian".into()));
        }
        if !tau.is_finite() {
            return Err(Error::Model("tau must be finite".into()));
        }
        let a0_zero = a0.sup_norm() == 0.0;
        let p = PairProblem { geom, rank: r, curv, a0, phi, theta: None, shift: 0.5 * tau, model: None, a0_zero };
        let defect = p.holomorphic_defect();
        let tol = holomorphic_tolerance(p.geom.kind()) * p.phi.sup_norm().max(1.0);
        if defect > tol {
            return Err(Error::Model(format!("phi is not holomorphic: defect {defect:e} exceeds {tol:e}")));
        }
        Ok(p)
    }

    /// Split pair `⊕ L_k` with constant curvatures `c_k`, optional metric
    /// weights `ψ_k`, and the section `φ = (φ⁰_k e^{-ψ_k/2})`.
    pub fn split(geom: Geometry, curvatures: &[f64], weights: Option<&[Vec<f64>]>, phi0: &[C64], tau: f64) -> Result<Self> {
        let r = curvatures.len();
        if phi0.len() != r {
            return Err(Error::Length(format!("phi has {} entries for rank {r}", phi0.len())));
        }
        let n = geom.points();
        let zero = vec![0.0; n];
        let psi: Vec<&[f64]> = match weights {
            Some(w) => {
                if w.len() != r || w.iter().any(|v| v.len() != n) {
                    return Err(Error::Length("weight profiles do not match rank and grid".into()));
                }
                w.iter().map(|v| v.as_slice()).collect()
            }
            None => vec![zero.as_slice(); r],
        };
        let mut curv_diag = Vec::with_capacity(r);
        let mut a01_diag = Vec::with_capacity(r);
        for k in 0..r {
            let p_psi = geom.p_operator(psi[k])?;
            curv_diag.push(p_psi.iter().map(|v| curvatures[k] - v).collect::<Vec<f64>>());
            a01_diag.push(dbar_weight_connection(&geom, psi[k]));
        }
        let curv = MatField::diagonal(&curv_diag);
        let a0 = MatField::from_fn(n, r, |i| {
            CMat::from_fn(r, r, |a, b| if a == b { -a01_diag[a][i].conj() } else { C64::new(0.0, 0.0) })
        });
        let phi = SectionField::from_vec(
            r,
            (0..n).map(|i| CVec::from_fn(r, |k, _| phi0[k] * (-0.5 * psi[k][i]).exp())).collect(),
        );
        Self::from_fields(geom, curv, a0, phi, tau)
    }

    pub fn with_model(mut self, model: SplitModel) -> Result<Self> {
        model.validate()?;
        if model.rank() != self.rank {
            return Err(Error::Model(format!("model rank {} differs from bundle rank {}", model.rank(), self.rank)));
        }
        let actual = summand_degrees(&self.geom, &self.curv);
        for (d, a) in model.degrees.iter().zip(&actual) {
            if (d - a).abs() > 1e-8 * d.abs().max(1.0) {
                return Err(Error::Model(format!("declared degree {d} differs from curvature degree {a}")));
            }
        }
        self.model = Some(model);
        Ok(self)
    }

    /// Same geometry, shift and model with replaced fields. Holomorphy is not
    /// re-checked; callers record `holomorphic_defect` themselves.
    pub fn with_fields(&self, curv: MatField, a0: MatField, phi: SectionField, theta: Option<MatField>) -> Self {
        let a0_zero = a0.sup_norm() == 0.0;
        PairProblem { geom: self.geom.clone(), rank: self.rank, curv, a0, phi, theta, shift: self.shift, model: self.model.clone(), a0_zero }
    }

    pub fn tau(&self) -> f64 {
        2.0 * self.shift
    }

    pub fn with_tau(mut self, tau: f64) -> Self {
        self.shift = 0.5 * tau;
        self
    }

    pub fn points(&self) -> usize {
        self.geom.points()
    }

    pub fn has_connection(&self) -> bool {
        !self.a0_zero
    }

    /// `(0,1)` connection coefficient `-A₀†` at the form points.
    pub fn a01(&self) -> MatField {
        self.a0.map(|a| -a.adjoint())
    }

    /// `sup|∂̄_{A₀} φ|`.
    pub fn holomorphic_defect(&self) -> f64 {
        let g = &self.geom;
        let r = self.rank;
        let mut worst: f64 = 0.0;
        let a01 = self.a01();
        let mut dphi = Vec::with_capacity(r);
        let mut phib = Vec::with_capacity(r);
        for k in 0..r {
            let c = self.phi.component(k);
            dphi.push(g.d01(&c));
            phib.push(g.to_form_grid(&c));
        }
        for i in 0..self.points() {
            let v = CVec::from_fn(r, |k, _| phib[k][i]);
            let w = a01.at(i) * v;
            let d = CVec::from_fn(r, |k, _| dphi[k][i] + w[k]);
            worst = worst.max(d.norm());
        }
        worst
    }

    /// `f⁻¹∂₀f` at the form points, for `f = e^s`.
    pub fn connection_form(&self, s: &MatField) -> MatField {
        connection_form_with(&self.geom, if self.a0_zero { None } else { Some(&self.a0) }, s)
    }


    /// `iΛ∂̄_E(a)` for an End-valued (1,0)-form coefficient at the form points.
    pub fn lambda_dbar_end(&self, a: &MatField) -> MatField {
        let g = &self.geom;
        let plain = g.lambda_dbar_mat(a);
        if self.a0_zero {
            return plain;
        }
        let a01 = self.a01();
        let twist = a01.zip_map(a, fiber::commutator);
        let twist = g.from_form_grid_mat(&twist);
        let c = C64::new(g.kappa() * g.lambda_sign(), 0.0);
        plain.zip_map(&twist, |p, t| p + t * c)
    }

    /// `iΛ∂̄(f⁻¹∂₀f)` for `f = e^s`.
    pub fn curvature_update(&self, s: &MatField) -> MatField {
        self.lambda_dbar_end(&self.connection_form(s))
    }

    /// `φφ†f`, the endomorphism `φ⊗φ*_{h₀·f}`.
    pub fn phi_term(&self, f: &MatField) -> MatField {
        MatField::from_fn(self.points(), self.rank, |i| {
            let p = self.phi.at(i);
            p * (p.adjoint() * f.at(i))
        })
    }

    /// `‖φ‖²_{L²}` for the metric `h₀·f` (`f = id` when `None`).
    pub fn phi_norm_sq(&self, f: Option<&MatField>) -> f64 {
        let dens: Vec<f64> = (0..self.points())
            .map(|i| {
                let p = self.phi.at(i);
                match f {
                    Some(f) => (p.adjoint() * f.at(i) * p)[(0, 0)].re,
                    None => p.norm_squared(),
                }
            })
            .collect();
        self.geom.integrate(&dens)
    }

    /// Degrees of the diagonal summands of the background curvature.
    pub fn summand_degrees(&self) -> Vec<f64> {
        summand_degrees(&self.geom, &self.curv)
    }

    /// Mean curvature at `h₀`: `iΛF₀ + ½φφ† − (τ/2)id`.
    pub fn mean_curvature_reference(&self) -> MatField {
        let half = C64::new(0.5, 0.0);
        let shift = fiber::scaled_identity(self.rank, self.shift);
        let pp = self.phi.outer();
        self.curv.zip_map(&pp, |c, p| c + p * half - &shift)
    }

    /// `K = iΛF_{h₀·f} + ½φ⊗φ*_{h₀·f} − (τ/2)id`, returned as
    /// `f⁻¹·H(f·K)` so it is exactly self-adjoint for `h₀·f`.
    pub fn mean_curvature(&self, f: &MatField) -> Result<MatField> {
        let s = f.log()?;
        let raw = self.raw_mean_curvature(&s, f);
        Ok(f.zip_map(&raw, |fi, k| {
            let hat = fiber::hermitian_part(&(fi * k));
            fi.clone().lu().solve(&hat).unwrap_or(hat)
        }))
    }

    /// `iΛF₀ + iΛ∂̄(f⁻¹∂₀f) + ½φφ†f − shift`, without symmetrization.
    pub fn raw_mean_curvature(&self, s: &MatField, f: &MatField) -> MatField {
        let upd = self.curvature_update(s);
        let pt = self.phi_term(f);
        let half = C64::new(0.5, 0.0);
        let shift = fiber::scaled_identity(self.rank, self.shift);
        MatField::from_fn(self.points(), self.rank, |i| self.curv.at(i) + upd.at(i) + pt.at(i) * half - &shift)
    }

    /// Whether a nonzero constant endomorphism commuting with the background
    /// annihilates `φ` everywhere. `true` means `φ`-simple.
    pub fn phi_simple_check(&self) -> Result<bool> {
        if self.geom.kind() != BackendKind::Torus {
            return Err(Error::Unsupported("phi-simple check needs the torus backend".into()));
        }
        let r = self.rank;
        let dim = 2 * r * r;
        // Real coordinates of u: (Re, Im) of each entry.
        let unit = |k: usize| {
            let e = k / 2;
            let z = if k.is_multiple_of(2) { C64::new(1.0, 0.0) } else { C64::new(0.0, 1.0) };
            let mut m = CMat::zeros(r, r);
            m[(e / r, e % r)] = z;
            m
        };
        let basis: Vec<CMat> = (0..dim).map(unit).collect();
        let mut gram = DMatrix::<f64>::zeros(dim, dim);
        let mut add_rows = |images: Vec<Vec<C64>>| {
            // images[k] = constraint map applied to basis element k
            for a in 0..dim {
                for b in a..dim {
                    let v: f64 = images[a].iter().zip(&images[b]).map(|(x, y)| (x.conj() * y).re).sum();
                    gram[(a, b)] += v;
                    if a != b {
                        gram[(b, a)] += v;
                    }
                }
            }
        };
        let flat = |m: CMat| m.iter().copied().collect::<Vec<C64>>();
        for i in 0..self.points() {
            let c = self.curv.at(i);
            let a = self.a0.at(i).adjoint();
            let p = self.phi.at(i);
            let imgs: Vec<Vec<C64>> = basis
                .iter()
                .map(|u| {
                    let mut v = flat(fiber::commutator(c, u));
                    v.extend(flat(fiber::commutator(&a, u)));
                    v.extend((u * p).iter().copied());
                    v
                })
                .collect();
            add_rows(imgs);
        }
        let eig = SymmetricEigen::new(gram);
        let max = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let min = eig.eigenvalues.iter().fold(f64::INFINITY, |m, v| m.min(*v));
        Ok(min > 1e-10 * max.max(1e-300))
    }
}

/// `(0,1)` connection coefficient of the unitary frame of `e^{-ψ}`, chosen so
/// that `e^{-ψ/2}` is discretely holomorphic.
fn dbar_weight_connection(g: &Geometry, psi: &[f64]) -> Vec<C64> {
    match g.kind() {
        BackendKind::Torus => {
            let e: Vec<C64> = psi.iter().map(|&x| C64::new((-0.5 * x).exp(), 0.0)).collect();
            g.d01(&e).into_iter().zip(&e).map(|(d, v)| -d / v).collect()
        }
        BackendKind::Hopf => {
            let n = psi.len();
            let h = g.spacing();
            (0..n).map(|i| C64::new(2.0 / h * (0.25 * (psi[(i + 1) % n] - psi[i])).tanh(), 0.0)).collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_hopf, make_torus};

    fn torus() -> Geometry {
        make_torus(16, 1.0).unwrap()
    }

    fn c(x: f64) -> C64 {
        C64::new(x, 0.0)
    }

    #[test]
    fn mu_max_examples() {
        let g = torus();
        assert_eq!(mu_max(&SplitModel::new(vec![1.5], 0).unwrap(), &g).unwrap(), 1.5);
        assert_eq!(mu_max(&SplitModel::new(vec![2.0, 0.0], 1).unwrap(), &g).unwrap(), 2.0);
        assert_eq!(mu_max(&SplitModel::new(vec![-1.0, 0.0, 3.0], 0).unwrap(), &g).unwrap(), 3.0);
    }

    #[test]
    fn mu_min_phi_examples() {
        let g = torus();
        assert_eq!(mu_min_phi(&SplitModel::new(vec![1.0], 0).unwrap(), &g).unwrap(), f64::INFINITY);
        assert_eq!(mu_min_phi(&SplitModel::new(vec![-2.0, 0.0], 0).unwrap(), &g).unwrap(), 0.0);
        assert_eq!(mu_min_phi(&SplitModel::new(vec![-1.0, 1.0, 2.0], 0).unwrap(), &g).unwrap(), 1.0);
    }

    #[test]
    fn extensions_restrict_subsums() {
        let g = torus();
        // L₂ (degree 3) sits only as a quotient of the extension by L₁.
        let m = SplitModel::with_extensions(vec![-1.0, 3.0], 0, vec![(0, 1)]).unwrap();
        assert_eq!(mu_max(&m, &g).unwrap(), 1.0);
        assert!(m.subsums().iter().all(|s| s.members != vec![1]));
        assert!(SplitModel::with_extensions(vec![0.0, 1.0], 0, vec![(0, 0)]).is_err());
    }

    #[test]
    fn empty_model_and_bad_index_rejected() {
        assert!(matches!(SplitModel::new(vec![], 0), Err(Error::Model(_))));
        assert!(matches!(SplitModel::new(vec![1.0], 1), Err(Error::Model(_))));
    }

    #[test]
    fn window_and_verdicts() {
        let g = torus();
        let m = SplitModel::new(vec![1.0], 0).unwrap();
        let rep = stability_window(&m, &g, Some(4.0 * PI * 1.05)).unwrap();
        assert!((rep.window_lo - 4.0 * PI).abs() < 1e-12);
        assert_eq!(rep.window_hi, None);
        assert_eq!(rep.verdict, Some(Verdict::Stable));
        assert_eq!(classify(&m, &g, 4.0 * PI).unwrap(), Verdict::Boundary);
        assert_eq!(classify(&m, &g, 0.9 * 4.0 * PI).unwrap(), Verdict::Unstable);

        let m2 = SplitModel::new(vec![2.0, 0.0], 1).unwrap();
        let rep = stability_window(&m2, &g, None).unwrap();
        assert!(rep.window_empty);
        for t in [0.5, 1.0, 3.0, 10.0, 30.0] {
            assert_ne!(classify(&m2, &g, t).unwrap(), Verdict::Stable);
        }
        assert_eq!(classify(&m2, &g, 8.0 * PI).unwrap(), Verdict::Boundary);
    }

    #[test]
    fn classify_is_monotone_in_tau() {
        let g = make_hopf(32).unwrap();
        // A non-split extension of L₂ by L₁ has the only proper sub-sum {L₁}.
        let m = SplitModel::with_extensions(vec![0.0, 2.0], 0, vec![(0, 1)]).unwrap();
        let rep = stability_window(&m, &g, None).unwrap();
        let lo = rep.window_lo;
        let hi = rep.window_hi.unwrap();
        assert!(lo < hi);
        let mut seen = Vec::new();
        for k in 0..200 {
            let t = lo - 1.0 + (hi - lo + 2.0) * k as f64 / 199.0;
            let v = classify(&m, &g, t).unwrap();
            if seen.last() != Some(&v) {
                seen.push(v);
            }
        }
        assert_eq!(seen, vec![Verdict::Unstable, Verdict::Stable, Verdict::Unstable]);
        assert_eq!(classify(&m, &g, lo).unwrap(), Verdict::Boundary);
        assert_eq!(classify(&m, &g, hi).unwrap(), Verdict::Boundary);
    }

    #[test]
    fn rank_one_window_is_bradlow_condition() {
        for g in [torus(), make_hopf(64).unwrap()] {
            for d in [-1.0, 0.0, 0.5, 2.0] {
                let m = SplitModel::new(vec![d], 0).unwrap();
                let rep = stability_window(&m, &g, None).unwrap();
                assert!((rep.window_lo - 4.0 * PI * d / g.volume()).abs() < 1e-12);
                assert!(rep.window_hi.is_none());
            }
        }
    }

    #[test]
    fn nu_values() {
        let g = torus();
        let m = SplitModel::new(vec![1.0], 0).unwrap();
        assert!((nu_case1(-1.0, &m, &g, 8.0 * PI).unwrap() - 1.0).abs() < 1e-14);
        assert!(nu_case1(-1.0, &m, &g, 4.0 * PI).unwrap().abs() < 1e-14);
        // Sign flips as μ(E) crosses τ·Vol/4π.
        assert!(nu_case1(-1.0, &m, &g, 4.0 * PI * 0.9).unwrap() < 0.0);
        assert!(nu_case1(-1.0, &m, &g, 4.0 * PI * 1.1).unwrap() > 0.0);
    }

    #[test]
    fn nu_case2_reductions() {
        let g = torus();
        let m = SplitModel::new(vec![0.5, 1.5, 1.0], 0).unwrap();
        let tau = 3.0;
        let x = tau * g.volume() / (4.0 * PI);
        // Equal eigenvalues: every gap vanishes and Case 1 remains.
        let v = nu_case2(&[-2.0, -2.0, -2.0], &[(0.3, 1.0), (0.9, 2.0)], &m, &g, tau).unwrap();
        assert!((v - nu_case1(-2.0, &m, &g, tau).unwrap()).abs() < 1e-14);
        // Chain slopes at τ·Vol/4π: only the top term survives, which is Case 1 with λ_l.
        let v = nu_case2(&[-3.0, -2.0, -1.0], &[(x, 1.0), (x, 2.0)], &m, &g, tau).unwrap();
        assert!((v - nu_case1(-1.0, &m, &g, tau).unwrap()).abs() < 1e-12);
        // Hand-expanded two-step chain.
        let v = nu_case2(&[-3.0, -1.0], &[(2.0, 1.0)], &m, &g, tau).unwrap();
        let oracle = -3.0 * (1.0 - x) - 2.0 * 1.0 * (2.0 - x);
        assert!((v - oracle).abs() < 1e-12);
        assert!(matches!(nu_case2(&[-1.0, 0.0], &[], &m, &g, tau), Err(Error::Length(_))));
        assert!(matches!(nu_case2(&[-1.0], &[], &m, &g, tau), Err(Error::Length(_))));
    }

    #[test]
    fn mean_curvature_trivial_scalar() {
        let g = torus();
        let p = PairProblem::split(g.clone(), &[0.0], None, &[c(1.0)], 2.0).unwrap();
        let f = MatField::constant(g.points(), fiber::scaled_identity(1, 2.0));
        assert!(p.mean_curvature(&f).unwrap().sup_norm() < 1e-14);
        let id = MatField::identity(g.points(), 1);
        let k = p.mean_curvature(&id).unwrap();
        assert!(k.sub(&p.mean_curvature_reference()).sup_norm() < 1e-14);
    }

    #[test]
    fn mean_curvature_traced_integral() {
        // ∫ tr K(f) = 2π·deg + ½∫|φ|²_{h₀f} − (τ/2)·r·Vol for any f, because the
        // curvature update is an exact divergence.
        for g in [torus(), make_hopf(128).unwrap()] {
            let w: Vec<Vec<f64>> = (0..2).map(|k| weight_profile(&g, 0.3, k)).collect();
            let p = PairProblem::split(g.clone(), &[g.constant_curvature(1.0), g.constant_curvature(-0.5)], Some(&w), &[c(1.0), c(0.5)], 5.0)
                .unwrap();
            let s = MatField::from_fn(g.points(), 2, |i| {
                let (x, y) = g.node_coords(i);
                let a = (2.0 * PI * (x + y) / g.period()).sin();
                let b = (2.0 * PI * x / g.period()).cos();
                CMat::from_row_slice(2, 2, &[c(0.4 * a), C64::new(0.2 * b, 0.1 * a), C64::new(0.2 * b, -0.1 * a), c(-0.3 * b)])
            });
            let f = s.exp();
            let k = p.mean_curvature(&f).unwrap();
            let lhs = g.integrate_trace(&k);
            let pt = p.phi_term(&f);
            let rhs = 2.0 * PI * 0.5 + 0.5 * g.integrate_trace(&pt) - 0.5 * 5.0 * 2.0 * g.volume();
            assert!((lhs - rhs).abs() < 1e-6, "{:?}: {lhs} vs {rhs}", g.kind());
        }
    }

    #[test]
    fn reference_mean_curvature_integral() {
        let g = torus();
        let p = PairProblem::split(g.clone(), &[g.constant_curvature(1.0)], None, &[c(2.0)], 3.0).unwrap();
        let k = p.mean_curvature_reference();
        let expect = 2.0 * PI + 0.5 * 4.0 * g.volume() - 1.5 * g.volume();
        assert!((g.integrate_trace(&k) - expect).abs() < 1e-10);
    }

    #[test]
    fn split_with_weights_is_holomorphic_and_has_declared_degrees() {
        for g in [make_torus(32, 1.0).unwrap(), make_hopf(256).unwrap()] {
            let w: Vec<Vec<f64>> = (0..2).map(|k| weight_profile(&g, 0.4, k)).collect();
            let curv = curvatures_for_degrees(&g, &[1.0, 2.0]);
            let p = PairProblem::split(g.clone(), &curv, Some(&w), &[c(1.0), c(1.0)], 30.0).unwrap();
            assert!(p.holomorphic_defect() < 1e-8);
            let p = p.with_model(SplitModel::new(vec![1.0, 2.0], 0).unwrap()).unwrap();
            assert!(p.model.is_some());
        }
    }

    #[test]
    fn declared_degrees_must_match_curvature() {
        let g = torus();
        let p = PairProblem::split(g.clone(), &[g.constant_curvature(1.0)], None, &[c(1.0)], 1.0).unwrap();
        assert!(p.with_model(SplitModel::new(vec![2.0], 0).unwrap()).is_err());
    }

    #[test]
    fn non_holomorphic_phi_rejected() {
        let g = torus();
        let n = g.points();
        let curv = MatField::zeros(n, 1);
        let a0 = MatField::zeros(n, 1);
        let phi = SectionField::from_vec(1, (0..n).map(|i| CVec::from_element(1, c(1.0 + (2.0 * PI * g.node_coords(i).0).sin()))).collect());
        assert!(matches!(PairProblem::from_fields(g, curv, a0, phi, 1.0), Err(Error::Model(_))));
    }

    #[test]
    fn connection_form_is_additive_for_commuting_fields() {
        let g = make_hopf(64).unwrap();
        let w: Vec<Vec<f64>> = (0..2).map(|k| weight_profile(&g, 0.3, k)).collect();
        let p = PairProblem::split(g.clone(), &[0.0, 0.0], Some(&w), &[c(1.0), c(1.0)], 1.0).unwrap();
        let a = MatField::diagonal(&[weight_profile(&g, 0.7, 3), weight_profile(&g, -0.2, 4)]);
        let b = MatField::diagonal(&[weight_profile(&g, 0.1, 5), weight_profile(&g, 0.5, 6)]);
        let lhs = p.connection_form(&a.add(&b));
        let rhs = p.connection_form(&a).add(&p.connection_form(&b));
        assert!(lhs.sub(&rhs).sup_norm() < 1e-12);
    }

    #[test]
    fn phi_simple_examples() {
        let g = torus();
        let p = PairProblem::split(g.clone(), &[0.0], None, &[c(1.0)], 1.0).unwrap();
        assert!(p.phi_simple_check().unwrap());
        let p = PairProblem::split(g.clone(), &[0.0, 0.0], None, &[c(1.0), c(0.0)], 1.0).unwrap();
        assert!(!p.phi_simple_check().unwrap());
        // Distinct diagonal backgrounds force diagonal u; u·(1,1) = 0 then forces u = 0.
        let p = PairProblem::split(g.clone(), &[1.0, -1.0], None, &[c(1.0), c(1.0)], 1.0).unwrap();
        assert!(p.phi_simple_check().unwrap());
        // Equal backgrounds admit u = [[1, -1], [1, -1]], which kills (1, 1).
        let p = PairProblem::split(g.clone(), &[0.5, 0.5], None, &[c(1.0), c(1.0)], 1.0).unwrap();
        assert!(!p.phi_simple_check().unwrap());
        let h = PairProblem::split(make_hopf(32).unwrap(), &[0.0], None, &[c(1.0)], 1.0).unwrap();
        assert!(matches!(h.phi_simple_check(), Err(Error::Unsupported(_))));
    }
}
