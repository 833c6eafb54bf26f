//! Discretized base manifolds.
//!
//! Two backends share one interface:
//!
//! * `Torus`: the flat square torus `C/(LZ + iLZ)` with `ω = dx∧dy`, sampled on an
//!   `n×n` grid with spectral (Fourier) differentiation. Form coefficients live on
//!   the same grid as functions.
//! * `Hopf`: the standard Hopf surface `(C²∖0)/(z ~ 2z)` with
//!   `ω = |z|⁻² Σ i dz_j∧dz̄_j`, reduced to `U(2)`-invariant data. Invariant
//!   functions depend on `t = log|z|²` only, which is periodic with period
//!   `ln 4`. Functions live on nodes `t_i = i·h`; form coefficients (along `∂t`
//!   and `∂̄t`) live on the staggered points `t_i + h/2`.
//!
//! Conventions. `Λ` is the trace against the metric, so `iΛ(i·dz∧dz̄)`-type
//! contractions are `κ = 2` on the torus and `κ = 1` for `∂t∧∂̄t` on the Hopf
//! surface. `P = iΛ∂̄∂` then equals `-½Δ` on the torus and `-(u'' + u')` on the
//! Hopf surface. The first-order drift `u'` is the torsion of the Gauduchon
//! metric; it makes `P` non-normal. In both cases `P ≥ 0` at an interior maximum.
//! `lambda_sign` is the overall sign of the contraction and is `-1` in a correct
//! build.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec;
use crate::fiber::{CMat, C64};
use crate::field::MatField;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Torus,
    Hopf,
}

impl fmt::Display for BackendKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            BackendKind::Torus => write!(f, "torus"),
            BackendKind::Hopf => write!(f, "hopf"),
        }
    }
}

impl std::str::FromStr for BackendKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "torus" => Ok(BackendKind::Torus),
            "hopf" => Ok(BackendKind::Hopf),
            other => Err(Error::Unsupported(other.to_string())),
        }
    }
}

/// Sign of the `Λ` contraction in a correct build.
#[cfg(not(feature = "corrupt-lambda-sign"))]
pub const DEFAULT_LAMBDA_SIGN: f64 = -1.0;
#[cfg(feature = "corrupt-lambda-sign")]
pub const DEFAULT_LAMBDA_SIGN: f64 = 1.0;

/// Fundamental period of `t = log|z|²` under `z ↦ 2z`.
pub const HOPF_PERIOD: f64 = 2.0 * std::f64::consts::LN_2;

/// Reduced volume density on the Hopf surface: `dvol = π² dt`.
pub const HOPF_DENSITY: f64 = PI * PI;

/// A (1,1)-form obtained as `∂̄` of a (1,0)-form `a·e`, where `e` is `dz` on the
/// torus and `∂t` on the Hopf surface: `main·(ē∧e) + torsion·∂̄e`.
#[derive(Clone, Debug)]
pub struct TwoForm {
    pub main: Vec<C64>,
    pub torsion: Vec<C64>,
}

#[derive(Clone)]
pub struct Geometry {
    kind: BackendKind,
    n: usize,
    period: f64,
    lambda_sign: f64,
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for Geometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Geometry")
            .field("kind", &self.kind)
            .field("n", &self.n)
            .field("period", &self.period)
            .field("lambda_sign", &self.lambda_sign)
            .finish()
    }
}

pub fn make_torus(n: usize, period: f64) -> Result<Geometry> {
    if n < 8 || !n.is_multiple_of(2) {
        return Err(Error::GridTooSmall(format!("torus grid must be even and at least 8, got {n}")));
    }
    if !(period > 0.0 && period.is_finite()) {
        return Err(Error::Config(format!("torus period must be positive, got {period}")));
    }
    Ok(Geometry::new(BackendKind::Torus, n, period))
}

pub fn make_hopf(n: usize) -> Result<Geometry> {
    if n < 16 {
        return Err(Error::GridTooSmall(format!("hopf grid must be at least 16, got {n}")));
    }
    Ok(Geometry::new(BackendKind::Hopf, n, HOPF_PERIOD))
}

/// Signed wavenumber of FFT bin `j`, with the Nyquist bin zeroed so odd
/// derivatives stay real and compositions stay consistent.
fn wavenumber(j: usize, n: usize, period: f64) -> f64 {
    let k = if j < n / 2 {
        j as f64
    } else if j == n / 2 {
        0.0
    } else {
        j as f64 - n as f64
    };
    2.0 * PI * k / period
}

impl Geometry {
    fn new(kind: BackendKind, n: usize, period: f64) -> Self {
        let mut planner = FftPlanner::new();
        Geometry {
            kind,
            n,
            period,
            lambda_sign: DEFAULT_LAMBDA_SIGN,
            fwd: planner.plan_fft_forward(n),
            inv: planner.plan_fft_inverse(n),
        }
    }

    /// Overrides the contraction sign. Only the calibration guard uses this.
    pub fn with_lambda_sign(mut self, sign: f64) -> Self {
        self.lambda_sign = sign;
        self
    }

    pub fn kind(&self) -> BackendKind {
        self.kind
    }

    /// Grid size along each axis.
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn period(&self) -> f64 {
        self.period
    }

    pub fn spacing(&self) -> f64 {
        self.period / self.n as f64
    }

    pub fn points(&self) -> usize {
        match self.kind {
            BackendKind::Torus => self.n * self.n,
            BackendKind::Hopf => self.n,
        }
    }

    pub fn lambda_sign(&self) -> f64 {
        self.lambda_sign
    }

    /// `|iΛ(ē∧e)|` for the basic (1,0)-form `e`.
    pub fn kappa(&self) -> f64 {
        match self.kind {
            BackendKind::Torus => 2.0,
            BackendKind::Hopf => 1.0,
        }
    }

    /// Coordinates of node `i`: `(x, y)` on the torus, `(t, 0)` on the Hopf surface.
    pub fn node_coords(&self, i: usize) -> (f64, f64) {
        let h = self.spacing();
        match self.kind {
            BackendKind::Torus => ((i % self.n) as f64 * h, (i / self.n) as f64 * h),
            BackendKind::Hopf => (i as f64 * h, 0.0),
        }
    }

    /// Coordinates of form point `i`.
    pub fn form_coords(&self, i: usize) -> (f64, f64) {
        let (x, y) = self.node_coords(i);
        match self.kind {
            BackendKind::Torus => (x, y),
            BackendKind::Hopf => (x + 0.5 * self.spacing(), y),
        }
    }

    pub fn volume(&self) -> f64 {
        match self.kind {
            BackendKind::Torus => self.period * self.period,
            BackendKind::Hopf => HOPF_DENSITY * self.period,
        }
    }

    /// Quadrature weight of one grid point (nodes and form points alike).
    pub fn cell_weight(&self) -> f64 {
        self.volume() / self.points() as f64
    }

    /// `∫ u dvol`, summed in index order.
    pub fn integrate(&self, u: &[f64]) -> f64 {
        exec::ordered_sum(u) * self.cell_weight()
    }

    /// `L²` inner product `∫ Re tr(A B†) dvol` of matrix fields.
    pub fn inner_mat(&self, a: &MatField, b: &MatField) -> f64 {
        self.integrate(&a.pointwise_inner(b))
    }

    pub fn l2_norm_mat(&self, a: &MatField) -> f64 {
        self.inner_mat(a, a).max(0.0).sqrt()
    }

    /// `deg = (1/2π) ∫ tr iΛF dvol` from the contracted curvature trace.
    pub fn degree(&self, trace_ilf: &[f64]) -> f64 {
        self.integrate(trace_ilf) / (2.0 * PI)
    }

    /// Constant value of `iΛF` realizing a line bundle of degree `d`.
    pub fn constant_curvature(&self, d: f64) -> f64 {
        2.0 * PI * d / self.volume()
    }

    /// Contracted curvature of the Hopf line bundle with deck weight `λ`:
    /// `log₂ λ`, constant.
    pub fn hopf_line_curvature(deck_weight: f64) -> f64 {
        deck_weight.log2()
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.points() {
            return Err(Error::Shape(format!("field has {} points, backend has {}", len, self.points())));
        }
        Ok(())
    }

    fn fft2(&self, data: &mut [C64], inverse: bool) {
        let n = self.n;
        let plan = if inverse { &self.inv } else { &self.fwd };
        plan.process(data);
        let mut t = vec![C64::new(0.0, 0.0); n * n];
        for r in 0..n {
            for c in 0..n {
                t[c * n + r] = data[r * n + c];
            }
        }
        plan.process(&mut t);
        for r in 0..n {
            for c in 0..n {
                data[r * n + c] = t[c * n + r];
            }
        }
        if inverse {
            let s = 1.0 / (n * n) as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        }
    }

    fn fft1(&self, data: &mut [C64], inverse: bool) {
        if inverse {
            self.inv.process(data);
            let s = 1.0 / self.n as f64;
            for v in data.iter_mut() {
                *v *= s;
            }
        } else {
            self.fwd.process(data);
        }
    }

    /// Applies a Fourier multiplier on the torus: `symbol(a, b)` with
    /// `a, b` the x- and y-wavenumbers.
    fn torus_multiplier(&self, u: &[C64], symbol: impl Fn(f64, f64) -> C64) -> Vec<C64> {
        let n = self.n;
        let mut buf = u.to_vec();
        self.fft2(&mut buf, false);
        for ky in 0..n {
            let b = wavenumber(ky, n, self.period);
            for kx in 0..n {
                let a = wavenumber(kx, n, self.period);
                buf[ky * n + kx] *= symbol(a, b);
            }
        }
        self.fft2(&mut buf, true);
        buf
    }

    /// Coefficient of `e` in `∂u`: `∂_z u` (torus) or `u'(t)` at form points (Hopf).
    pub fn d10(&self, u: &[C64]) -> Vec<C64> {
        match self.kind {
            BackendKind::Torus => self.torus_multiplier(u, |a, b| C64::new(0.5 * b, 0.5 * a)),
            BackendKind::Hopf => self.forward_difference(u),
        }
    }

    /// Coefficient of `ē` in `∂̄u`.
    pub fn d01(&self, u: &[C64]) -> Vec<C64> {
        match self.kind {
            BackendKind::Torus => self.torus_multiplier(u, |a, b| C64::new(-0.5 * b, 0.5 * a)),
            BackendKind::Hopf => self.forward_difference(u),
        }
    }

    fn forward_difference(&self, u: &[C64]) -> Vec<C64> {
        let n = self.n;
        let h = self.spacing();
        (0..n).map(|i| (u[(i + 1) % n] - u[i]) / h).collect()
    }

    /// Samples a node function at the form points.
    pub fn to_form_grid(&self, u: &[C64]) -> Vec<C64> {
        match self.kind {
            BackendKind::Torus => u.to_vec(),
            BackendKind::Hopf => {
                let n = self.n;
                (0..n).map(|i| (u[i] + u[(i + 1) % n]) * 0.5).collect()
            }
        }
    }

    /// Samples a form-point function at the nodes.
    pub fn from_form_grid(&self, u: &[C64]) -> Vec<C64> {
        match self.kind {
            BackendKind::Torus => u.to_vec(),
            BackendKind::Hopf => {
                let n = self.n;
                (0..n).map(|i| (u[(i + n - 1) % n] + u[i]) * 0.5).collect()
            }
        }
    }

    /// `∂̄(a·e)` for a (1,0)-form coefficient `a` given at form points.
    pub fn dbar_form(&self, a: &[C64]) -> TwoForm {
        match self.kind {
            BackendKind::Torus => {
                TwoForm { main: self.d01(a), torsion: vec![C64::new(0.0, 0.0); a.len()] }
            }
            BackendKind::Hopf => {
                let n = self.n;
                let h = self.spacing();
                let main = (0..n).map(|i| (a[i] - a[(i + n - 1) % n]) / h).collect();
                let torsion = (0..n).map(|i| (a[i] + a[(i + n - 1) % n]) * 0.5).collect();
                TwoForm { main, torsion }
            }
        }
    }

    /// `iΛ` of a (1,1)-form of the shape produced by [`dbar_form`](Self::dbar_form).
    pub fn lambda_contract(&self, w: &TwoForm) -> Vec<C64> {
        let k = self.kappa();
        let s = self.lambda_sign;
        w.main.iter().zip(&w.torsion).map(|(m, t)| (m * k + t) * s).collect()
    }

    /// `iΛ∂̄(a·e)`.
    pub fn lambda_dbar(&self, a: &[C64]) -> Vec<C64> {
        self.lambda_contract(&self.dbar_form(a))
    }

    /// `iΛ(β ē ∧ α e)` for coefficients on the form grid, without differentiation:
    /// the pointwise pairing used by the integral identities.
    pub fn lambda_pair(&self, beta01: C64, alpha10: C64) -> C64 {
        beta01 * alpha10 * (self.kappa() * self.lambda_sign)
    }

    /// Symbol of `P` at wavenumbers `(a, b)` (torus) or angle `θ = a` (Hopf).
    fn p_symbol(&self, a: f64, b: f64) -> C64 {
        let s = -self.lambda_sign;
        match self.kind {
            BackendKind::Torus => C64::new(s * 0.5 * (a * a + b * b), 0.0),
            BackendKind::Hopf => {
                let h = self.spacing();
                C64::new(s * (2.0 - 2.0 * a.cos()) / (h * h), -s * a.sin() / h)
            }
        }
    }

    /// `P = iΛ∂̄∂`, assembled directly (Fourier symbol on the torus, compact
    /// stencil on the Hopf surface).
    pub fn p_operator_c(&self, u: &[C64]) -> Vec<C64> {
        match self.kind {
            BackendKind::Torus => self.torus_multiplier(u, |a, b| self.p_symbol(a, b)),
            BackendKind::Hopf => {
                let n = self.n;
                let h = self.spacing();
                let s = -self.lambda_sign;
                (0..n)
                    .map(|i| {
                        let up = u[(i + 1) % n];
                        let um = u[(i + n - 1) % n];
                        -(up - u[i] * 2.0 + um) / (h * h) * s - (up - um) / (2.0 * h) * s
                    })
                    .collect()
            }
        }
    }

    pub fn p_operator(&self, u: &[f64]) -> Result<Vec<f64>> {
        self.check_len(u.len())?;
        let c: Vec<C64> = u.iter().map(|&x| C64::new(x, 0.0)).collect();
        Ok(self.p_operator_c(&c).into_iter().map(|z| z.re).collect())
    }

    /// Solves `(P + σ) v = rhs` exactly in Fourier space.
    pub fn solve_shifted(&self, rhs: &[C64], sigma: f64) -> Vec<C64> {
        let shifted = |z: C64| {
            let d = z + sigma;
            if d.norm() < 1e-300 {
                C64::new(0.0, 0.0)
            } else {
                d.inv()
            }
        };
        match self.kind {
            BackendKind::Torus => self.torus_multiplier(rhs, |a, b| shifted(self.p_symbol(a, b))),
            BackendKind::Hopf => {
                let n = self.n;
                let mut buf = rhs.to_vec();
                self.fft1(&mut buf, false);
                for (k, v) in buf.iter_mut().enumerate() {
                    let theta = 2.0 * PI * k as f64 / n as f64;
                    *v *= shifted(self.p_symbol(theta, 0.0));
                }
                self.fft1(&mut buf, true);
                buf
            }
        }
    }

    pub fn d10_mat(&self, u: &MatField) -> MatField {
        u.map_components(|c| self.d10(c))
    }

    /// `∂̄u` for an endomorphism field, componentwise in the unitary frame.
    pub fn dbar(&self, u: &MatField) -> MatField {
        u.map_components(|c| self.d01(c))
    }

    /// `∂₀u = ∂u + [A₀, u]` for an endomorphism field, with `A₀` the (1,0)
    /// connection coefficient on the form grid.
    pub fn d0(&self, u: &MatField, a0: &MatField) -> MatField {
        let du = self.d10_mat(u);
        let ub = self.to_form_grid_mat(u);
        let n = du.len();
        MatField::from_fn(n, u.rank(), |i| {
            let a = a0.at(i);
            let x = ub.at(i);
            du.at(i) + a * x - x * a
        })
    }

    pub fn to_form_grid_mat(&self, u: &MatField) -> MatField {
        u.map_components(|c| self.to_form_grid(c))
    }

    pub fn from_form_grid_mat(&self, u: &MatField) -> MatField {
        u.map_components(|c| self.from_form_grid(c))
    }

    pub fn lambda_dbar_mat(&self, a: &MatField) -> MatField {
        a.map_components(|c| self.lambda_dbar(c))
    }

    pub fn p_operator_mat(&self, u: &MatField) -> MatField {
        u.map_components(|c| self.p_operator_c(c))
    }

    pub fn solve_shifted_mat(&self, rhs: &MatField, sigma: f64) -> MatField {
        rhs.map_components(|c| self.solve_shifted(c, sigma))
    }

    /// `∫ tr M dvol` for a matrix field.
    pub fn integrate_trace(&self, m: &MatField) -> f64 {
        self.integrate(&m.trace())
    }

    /// Pointwise constant matrix field.
    pub fn constant_field(&self, m: CMat) -> MatField {
        MatField::constant(self.points(), m)
    }
}

/// Random smooth real field built from Fourier modes up to `modes`.
pub fn random_smooth<R: Rng>(g: &Geometry, rng: &mut R, modes: i32) -> Vec<f64> {
    let mut terms = Vec::new();
    for kx in -modes..=modes {
        let ky_range = if g.kind() == BackendKind::Torus { -modes..=modes } else { 0..=0 };
        for ky in ky_range {
            terms.push((kx, ky, rng.gen_range(-1.0..1.0), rng.gen_range(0.0..2.0 * PI)));
        }
    }
    let l = g.period();
    (0..g.points())
        .map(|i| {
            let (x, y) = g.node_coords(i);
            terms
                .iter()
                .map(|&(kx, ky, c, ph)| c * (2.0 * PI * (kx as f64 * x + ky as f64 * y) / l + ph).cos())
                .sum::<f64>()
        })
        .collect()
}

/// Slack per `h²` allowed in the maximum-principle check.
const MAX_PRINCIPLE_C: f64 = 50.0;

/// `min` over random smooth `u` of `P(u)` at the maximum of `u`, plus an
/// `O(h²)` slack. Nonnegative when the contraction sign is right.
pub fn max_principle_margin(g: &Geometry, seed: u64, samples: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = g.spacing();
    let mut worst = f64::INFINITY;
    for _ in 0..samples {
        let u = random_smooth(g, &mut rng, 3);
        let pu = match g.p_operator(&u) {
            Ok(v) => v,
            Err(_) => return f64::NEG_INFINITY,
        };
        let imax = (0..u.len()).max_by(|&a, &b| u[a].total_cmp(&u[b])).unwrap_or(0);
        worst = worst.min(pu[imax] + MAX_PRINCIPLE_C * h * h);
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;

    fn real(u: &[f64]) -> Vec<C64> {
        u.iter().map(|&x| C64::new(x, 0.0)).collect()
    }

    fn sup_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
    }

    #[test]
    fn grid_size_validation() {
        assert!(matches!(make_torus(6, 1.0), Err(Error::GridTooSmall(_))));
        assert!(matches!(make_torus(33, 1.0), Err(Error::GridTooSmall(_))));
        assert!(matches!(make_hopf(8), Err(Error::GridTooSmall(_))));
        assert!(make_torus(8, 1.0).is_ok());
    }

    #[test]
    fn torus_volume_and_integration() {
        let g = make_torus(64, 1.0).unwrap();
        assert_eq!(g.volume(), 1.0);
        assert!((g.integrate(&vec![1.0; g.points()]) - 1.0).abs() < 1e-14);
        let mode: Vec<f64> = (0..g.points()).map(|i| (2.0 * PI * g.node_coords(i).0).sin()).collect();
        assert!(g.integrate(&mode).abs() < 1e-12);
    }

    #[test]
    fn hopf_volume_matches_radial_quadrature() {
        // Riemannian volume of the shell 1 ≤ |z| < 2 under |z|⁻²·(Euclidean metric):
        // ∫ 2π² r³ / r⁴ dr, by composite Simpson in r.
        let m = 2000;
        let dr = 1.0 / m as f64;
        let f = |r: f64| 2.0 * PI * PI / r;
        let mut acc = f(1.0) + f(2.0);
        for k in 1..m {
            let r = 1.0 + k as f64 * dr;
            acc += if k % 2 == 1 { 4.0 * f(r) } else { 2.0 * f(r) };
        }
        let oracle = acc * dr / 3.0;
        let g = make_hopf(64).unwrap();
        assert!((g.volume() - oracle).abs() < 1e-10 * oracle);
        assert!((g.integrate(&vec![1.0; 64]) - oracle).abs() < 1e-10 * oracle);
    }

    #[test]
    fn p_annihilates_constants_exactly() {
        for g in [make_torus(16, 1.0).unwrap(), make_hopf(32).unwrap()] {
            let pu = g.p_operator(&vec![3.5; g.points()]).unwrap();
            assert!(pu.iter().all(|&v| v.abs() < 1e-12), "{:?}", g.kind());
        }
    }

    #[test]
    fn torus_p_on_sine_mode() {
        let g = make_torus(64, 1.0).unwrap();
        let u: Vec<f64> = (0..g.points()).map(|i| (2.0 * PI * g.node_coords(i).0).sin()).collect();
        let pu = g.p_operator(&u).unwrap();
        // -½ ∂²/∂x² sin(2πx) = ½ (2π)² sin(2πx)
        let expect: Vec<f64> = u.iter().map(|v| 0.5 * 4.0 * PI * PI * v).collect();
        assert!(sup_diff(&pu, &expect) < 1e-10);
    }

    #[test]
    fn p_is_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for g in [make_torus(16, 1.0).unwrap(), make_hopf(64).unwrap()] {
            let u = random_smooth(&g, &mut rng, 3);
            let v = random_smooth(&g, &mut rng, 3);
            let w: Vec<f64> = u.iter().zip(&v).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
            let pu = g.p_operator(&u).unwrap();
            let pv = g.p_operator(&v).unwrap();
            let pw = g.p_operator(&w).unwrap();
            let comb: Vec<f64> = pu.iter().zip(&pv).map(|(a, b)| 2.0 * a - 0.5 * b).collect();
            let scale = pw.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            assert!(sup_diff(&pw, &comb) < 1e-12 * scale);
        }
    }

    #[test]
    fn gauduchon_integral_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for g in [make_torus(32, 1.0).unwrap(), make_hopf(128).unwrap()] {
            for _ in 0..100 {
                let u: Vec<f64> = (0..g.points()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let norm = g.integrate(&u.iter().map(|x| x * x).collect::<Vec<_>>()).sqrt();
                let ip = g.integrate(&g.p_operator(&u).unwrap());
                assert!(ip.abs() <= 1e-8 * norm.max(1.0), "{:?}: {ip}", g.kind());
            }
        }
    }

    #[test]
    fn composition_matches_direct_p() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for g in [make_torus(32, 1.0).unwrap(), make_hopf(128).unwrap()] {
            let u = random_smooth(&g, &mut rng, 4);
            let direct = g.p_operator(&u).unwrap();
            let composed: Vec<f64> = g.lambda_dbar(&g.d10(&real(&u))).iter().map(|z| z.re).collect();
            let scale = direct.iter().fold(1.0f64, |m, x| m.max(x.abs()));
            assert!(sup_diff(&direct, &composed) < 1e-10 * scale, "{:?}", g.kind());
        }
    }

    #[test]
    fn dbar_of_constant_vanishes_and_untwisted_d0_is_plain_d() {
        let g = make_torus(16, 1.0).unwrap();
        let c = vec![C64::new(2.0, -1.0); g.points()];
        assert!(g.d01(&c).iter().all(|z| z.norm() < 1e-12));
        let u = MatField::from_fn(g.points(), 2, |i| {
            let (x, y) = g.node_coords(i);
            CMat::from_fn(2, 2, |a, b| C64::new((2.0 * PI * (x + a as f64 * y)).sin(), b as f64 * x.cos()))
        });
        let zero = MatField::zeros(g.points(), 2);
        assert_eq!(g.d0(&u, &zero).sub(&g.d10_mat(&u)).sup_norm(), 0.0);
    }

    #[test]
    fn leibniz_rule_on_torus() {
        let g = make_torus(32, 1.0).unwrap();
        let u: Vec<C64> = (0..g.points()).map(|i| C64::new((2.0 * PI * g.node_coords(i).0).cos(), 0.0)).collect();
        let v: Vec<C64> = (0..g.points()).map(|i| C64::new((2.0 * PI * g.node_coords(i).1).sin(), 0.0)).collect();
        let uv: Vec<C64> = u.iter().zip(&v).map(|(a, b)| a * b).collect();
        let lhs = g.d01(&uv);
        let du = g.d01(&u);
        let dv = g.d01(&v);
        for i in 0..g.points() {
            assert!((lhs[i] - (du[i] * v[i] + u[i] * dv[i])).norm() < 1e-10);
        }
    }

    /// `-¼|z|²Δ_{R⁴}` applied to `x ↦ w(log|x|²)` by a fourth-order 4-D
    /// centered stencil.
    fn ambient_p(w: &dyn Fn(f64) -> f64, x: [f64; 4], d: f64) -> f64 {
        let val = |p: [f64; 4]| w(p.iter().map(|c| c * c).sum::<f64>().ln());
        let c = val(x);
        let mut lap = 0.0;
        for k in 0..4 {
            let at = |m: f64| {
                let mut p = x;
                p[k] += m * d;
                val(p)
            };
            lap += (-at(2.0) + 16.0 * at(1.0) - 30.0 * c + 16.0 * at(-1.0) - at(-2.0)) / (12.0 * d * d);
        }
        let r2: f64 = x.iter().map(|c| c * c).sum();
        -0.25 * r2 * lap
    }

    #[test]
    fn hopf_reduction_matches_ambient_stencil() {
        let g = make_hopf(8192).unwrap();
        let l = g.period();
        let w = move |t: f64| (2.0 * PI * t / l).sin() + 0.3 * (4.0 * PI * t / l + 0.7).cos();
        let u: Vec<f64> = (0..g.points()).map(|i| w(g.node_coords(i).0)).collect();
        let pu = g.p_operator(&u).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for &i in &[0usize, 1200, 3111, 4096, 7999] {
            let t = g.node_coords(i).0;
            // A point of C² = R⁴ with |z|² = e^t in a random direction.
            let mut dir = [0.0; 4];
            for c in dir.iter_mut() {
                *c = rng.gen_range(-1.0..1.0);
            }
            let nrm = dir.iter().map(|c| c * c).sum::<f64>().sqrt();
            let r = (0.5 * t).exp();
            let x = dir.map(|c| c / nrm * r);
            let amb = ambient_p(&w, x, 2e-3);
            assert!((pu[i] - amb).abs() < 1e-4, "t={t}: reduced {} vs ambient {}", pu[i], amb);
        }
    }

    #[test]
    fn hopf_p_second_order_convergence() {
        let w = |t: f64| (2.0 * PI * t / HOPF_PERIOD).sin().exp();
        let err = |n: usize| {
            let g = make_hopf(n).unwrap();
            let l = HOPF_PERIOD;
            let k = 2.0 * PI / l;
            let u: Vec<f64> = (0..n).map(|i| w(g.node_coords(i).0)).collect();
            let pu = g.p_operator(&u).unwrap();
            (0..n)
                .map(|i| {
                    let t = g.node_coords(i).0;
                    let s = (k * t).sin();
                    let c = (k * t).cos();
                    let e = s.exp();
                    let d1 = k * c * e;
                    let d2 = (k * k * c * c - k * k * s) * e;
                    (pu[i] + d1 + d2).abs()
                })
                .fold(0.0, f64::max)
        };
        let ratio = err(128) / err(256);
        assert!((3.5..4.5).contains(&ratio), "ratio {ratio}");
    }

    #[test]
    fn torus_p_spectral_convergence() {
        let w = |x: f64, y: f64| ((2.0 * PI * x).sin() + (2.0 * PI * y).cos()).exp();
        let err = |n: usize| {
            let g = make_torus(n, 1.0).unwrap();
            let u: Vec<f64> = (0..g.points()).map(|i| { let (x, y) = g.node_coords(i); w(x, y) }).collect();
            let pu = g.p_operator(&u).unwrap();
            (0..g.points())
                .map(|i| {
                    let (x, y) = g.node_coords(i);
                    let k = 2.0 * PI;
                    let (sx, cx, sy, cy) = ((k * x).sin(), (k * x).cos(), (k * y).sin(), (k * y).cos());
                    let uxx = (k * k * cx * cx - k * k * sx) * w(x, y);
                    let uyy = (k * k * sy * sy - k * k * cy) * w(x, y);
                    (pu[i] + 0.5 * (uxx + uyy)).abs()
                })
                .fold(0.0, f64::max)
        };
        let coarse = err(16);
        let fine = err(32);
        assert!(fine < 1e-9, "fine {fine}");
        assert!(fine < 1e-3 * coarse);
    }

    #[test]
    fn maximum_principle_direction() {
        for g in [make_torus(64, 1.0).unwrap(), make_hopf(512).unwrap()] {
            let m = max_principle_margin(&g, 17, 100);
            if cfg!(feature = "corrupt-lambda-sign") {
                assert!(m < 0.0);
            } else {
                assert!(m >= 0.0, "{:?} margin {m}", g.kind());
            }
        }
    }

    #[test]
    fn flipped_sign_breaks_maximum_principle() {
        for g in [make_torus(64, 1.0).unwrap(), make_hopf(512).unwrap()] {
            let g = g.clone().with_lambda_sign(-g.lambda_sign());
            let m = max_principle_margin(&g, 17, 100);
            if cfg!(feature = "corrupt-lambda-sign") {
                assert!(m >= 0.0);
            } else {
                assert!(m < 0.0, "{:?} margin {m}", g.kind());
            }
        }
    }

    #[test]
    fn degree_calibration() {
        let g = make_torus(64, 1.0).unwrap();
        assert_eq!(g.degree(&vec![0.0; g.points()]), 0.0);
        let c = g.constant_curvature(1.0);
        assert!((c - 2.0 * PI).abs() < 1e-15);
        assert!((g.degree(&vec![c; g.points()]) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn hopf_line_bundle_degree() {
        // The weight ψ = log₂λ · t is the linear-in-t metric weight whose
        // deck shift by ln 4 is 2 ln λ; its contracted curvature is -P(ψ),
        // evaluated here by the stencil on interior nodes without wrap-around.
        let g = make_hopf(512).unwrap();
        let lambda: f64 = 2.0;
        let a = lambda.log2();
        let h = g.spacing();
        let psi = |t: f64| a * t;
        for i in 1..10 {
            let t = i as f64 * h;
            let p = -(psi(t + h) - 2.0 * psi(t) + psi(t - h)) / (h * h) - (psi(t + h) - psi(t - h)) / (2.0 * h);
            assert!((-p - Geometry::hopf_line_curvature(lambda)).abs() < 1e-9);
        }
        let deg = g.degree(&vec![Geometry::hopf_line_curvature(lambda); g.points()]);
        // Symbolic reduction: deg = log₂λ · π² ln 4 / 2π = π ln λ.
        assert!((deg - PI * lambda.ln()).abs() < 1e-10);
        assert!(deg > 0.0);
    }

    #[test]
    fn degree_is_metric_independent_for_conformal_changes() {
        // iΛ∂̄(f⁻¹∂f) for f = e^u is the exact divergence P(u); its integral vanishes.
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        for g in [make_torus(32, 1.0).unwrap(), make_hopf(256).unwrap()] {
            let base = vec![g.constant_curvature(1.0); g.points()];
            let u = random_smooth(&g, &mut rng, 3);
            let upd: Vec<f64> = g.lambda_dbar(&g.d10(&real(&u))).iter().map(|z| z.re).collect();
            let new: Vec<f64> = base.iter().zip(&upd).map(|(a, b)| a + b).collect();
            assert!((g.degree(&new) - g.degree(&base)).abs() < 1e-8);
        }
    }

    #[test]
    fn shifted_solve_inverts_p_plus_sigma() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        for g in [make_torus(32, 1.0).unwrap(), make_hopf(128).unwrap()] {
            let rhs: Vec<C64> = (0..g.points()).map(|_| C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))).collect();
            let v = g.solve_shifted(&rhs, 0.7);
            let back = g.p_operator_c(&v);
            for i in 0..g.points() {
                assert!((back[i] + v[i] * 0.7 - rhs[i]).norm() < 1e-9, "{:?}", g.kind());
            }
        }
    }
}
