//! Pointwise Hermitian linear algebra on a single fiber.
//!
//! Everything here works on small dense `r×r` complex matrices expressed in an
//! `h₀`-unitary frame, so "Hermitian" means equal to its conjugate transpose.
//! Functional calculus goes through the unitary eigendecomposition: for
//! `s = Σ λ_i e_i⊗θ^i`,
//!
//! * `g(s) = Σ g(λ_i) e_i⊗θ^i` ([`funcalc_one`]),
//! * `F(s)(A)` multiplies entry `(i, j)` of `A` (in the eigenbasis) by
//!   `F(λ_j, λ_i)` ([`funcalc_two`]).
//!
//! With `F = dg` (the divided difference of `g`) the second map is the
//! derivative of the first (Daleckii–Krein).

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;
pub type CMat = DMatrix<C64>;
pub type CVec = DVector<C64>;

/// Eigenvalues below this are clamped before taking logarithms.
pub const EIG_CLAMP: f64 = 1e-14;
/// Clamping by more than this (relative to the largest eigenvalue) is an error.
pub const EIG_CLAMP_REL_LIMIT: f64 = 1e-10;
/// Below this separation two-variable kernels switch to their Taylor forms.
pub const DIAGONAL_EPS: f64 = 1e-6;

/// Unitary eigendecomposition of a Hermitian matrix, eigenvalues ascending.
#[derive(Clone, Debug)]
pub struct HermEigen {
    pub values: Vec<f64>,
    pub vectors: CMat,
}

impl HermEigen {
    pub fn new(m: &CMat) -> Self {
        let r = m.nrows();
        if r == 1 {
            return HermEigen {
                values: vec![m[(0, 0)].re],
                vectors: CMat::from_element(1, 1, C64::new(1.0, 0.0)),
            };
        }
        let h = hermitian_part(m);
        let eig = h.symmetric_eigen();
        let mut order: Vec<usize> = (0..r).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
        let values = order.iter().map(|&k| eig.eigenvalues[k]).collect();
        let vectors = CMat::from_fn(r, r, |i, j| eig.eigenvectors[(i, order[j])]);
        HermEigen { values, vectors }
    }

    pub fn rank(&self) -> usize {
        self.values.len()
    }

    /// `U diag(g(λ)) U†`.
    pub fn apply_one(&self, g: impl Fn(f64) -> f64) -> CMat {
        let r = self.rank();
        let u = &self.vectors;
        let mut out = CMat::zeros(r, r);
        for k in 0..r {
            let w = g(self.values[k]);
            if w == 0.0 {
                continue;
            }
            for i in 0..r {
                let uik = u[(i, k)] * w;
                for j in 0..r {
                    out[(i, j)] += uik * u[(j, k)].conj();
                }
            }
        }
        out
    }

    /// Rotates into the eigenbasis: `U† A U`.
    pub fn to_eigenbasis(&self, a: &CMat) -> CMat {
        self.vectors.adjoint() * a * &self.vectors
    }

    /// Rotates back: `U B U†`.
    pub fn from_eigenbasis(&self, b: &CMat) -> CMat {
        &self.vectors * b * self.vectors.adjoint()
    }

    pub fn apply_two<K: TwoVarKernel + ?Sized>(&self, kernel: &K, a: &CMat) -> CMat {
        let mut b = self.to_eigenbasis(a);
        let r = self.rank();
        for i in 0..r {
            for j in 0..r {
                b[(i, j)] *= kernel.eval(self.values[j], self.values[i]);
            }
        }
        self.from_eigenbasis(&b)
    }
}

/// `(M + M†)/2`.
pub fn hermitian_part(m: &CMat) -> CMat {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

/// Real Frobenius pairing `Re tr(A B†)`, the `h₀` inner product on `End E`.
pub fn inner(a: &CMat, b: &CMat) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

pub fn norm(a: &CMat) -> f64 {
    inner(a, a).sqrt()
}

pub fn identity(r: usize) -> CMat {
    CMat::identity(r, r)
}

pub fn scaled_identity(r: usize, c: f64) -> CMat {
    CMat::from_diagonal_element(r, r, C64::new(c, 0.0))
}

/// Largest deviation from Hermitian symmetry relative to the matrix norm.
pub fn hermitian_defect(m: &CMat) -> f64 {
    let n = norm(m).max(1e-300);
    norm(&(m - m.adjoint())) / n
}

/// One-variable functional calculus `g(s)`.
pub fn funcalc_one(g: impl Fn(f64) -> f64, s: &CMat) -> CMat {
    HermEigen::new(s).apply_one(g)
}

/// Two-variable functional calculus `F(s)(A)`.
pub fn funcalc_two<K: TwoVarKernel + ?Sized>(kernel: &K, s: &CMat, a: &CMat) -> CMat {
    HermEigen::new(s).apply_two(kernel, a)
}

pub fn herm_exp(s: &CMat) -> CMat {
    funcalc_one(f64::exp, s)
}

/// Logarithm of a positive Hermitian matrix.
pub fn herm_log(f: &CMat) -> Result<CMat> {
    let eig = HermEigen::new(f);
    check_positive(&eig)?;
    Ok(eig.apply_one(|x| x.max(EIG_CLAMP).ln()))
}

/// Errors when clamping would move an eigenvalue by more than the allowed
/// relative amount.
pub fn check_positive(eig: &HermEigen) -> Result<()> {
    let largest = eig.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let smallest = eig.values[0];
    if smallest < EIG_CLAMP && EIG_CLAMP - smallest > EIG_CLAMP_REL_LIMIT * largest.max(1.0) {
        return Err(Error::Singular { eigenvalue: smallest, largest });
    }
    Ok(())
}

/// `f^p` for positive Hermitian `f`.
pub fn herm_pow(f: &CMat, p: f64) -> Result<CMat> {
    let eig = HermEigen::new(f);
    check_positive(&eig)?;
    Ok(eig.apply_one(|x| x.max(EIG_CLAMP).powf(p)))
}

/// A real function of two real variables, used by [`funcalc_two`].
pub trait TwoVarKernel: Sync {
    fn eval(&self, x: f64, y: f64) -> f64;
}

/// `F ≡ 1`; `F(s)` is the identity map.
pub struct UnitKernel;

impl TwoVarKernel for UnitKernel {
    fn eval(&self, _x: f64, _y: f64) -> f64 {
        1.0
    }
}

/// The divided difference `dg(x, y)` of a smooth `g`, with `g'` on the diagonal.
pub struct DividedDifference<G, D> {
    pub g: G,
    pub dg: D,
}

impl<G, D> TwoVarKernel for DividedDifference<G, D>
where
    G: Fn(f64) -> f64 + Sync,
    D: Fn(f64) -> f64 + Sync,
{
    fn eval(&self, x: f64, y: f64) -> f64 {
        if (x - y).abs() < DIAGONAL_EPS {
            (self.dg)(0.5 * (x + y))
        } else {
            ((self.g)(x) - (self.g)(y)) / (x - y)
        }
    }
}

/// Divided difference of `exp`; `funcalc_two(ExpKernel, s, A)` is `Dexp_s[A]`.
pub struct ExpKernel;

impl TwoVarKernel for ExpKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        dd1_exp(x, y)
    }
}

/// Divided difference of `ln` on the positive axis, fed with eigenvalues of
/// `f`: `funcalc_two(LogKernel, f, A)` is `Dlog_f[A]`.
pub struct LogKernel;

impl TwoVarKernel for LogKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        let (x, y) = (x.max(EIG_CLAMP), y.max(EIG_CLAMP));
        let d = x - y;
        if d.abs() < DIAGONAL_EPS * y {
            // 1/m - d²/(12 m³) with m the midpoint
            let m = 0.5 * (x + y);
            1.0 / m + d * d / (12.0 * m * m * m)
        } else {
            (x / y).ln() / d
        }
    }
}

/// `Ψ(x, y) = (e^{y−x} − 1)/(y − x)`, equal to 1 on the diagonal.
pub fn psi_kernel(x: f64, y: f64) -> f64 {
    let d = y - x;
    if d.abs() < DIAGONAL_EPS {
        1.0 + d / 2.0 + d * d / 6.0
    } else {
        d.exp_m1() / d
    }
}

pub struct PsiKernel;

impl TwoVarKernel for PsiKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        psi_kernel(x, y)
    }
}

/// `Ψ` with its arguments swapped. In the eigenbasis of `s`,
/// `e^{−s} Dexp_s[A]` multiplies entry `(i, j)` by `Ψ(λ_i, λ_j)`, which is
/// this kernel under the `F(λ_j, λ_i)` convention of [`funcalc_two`].
pub struct ConnectionKernel;

impl TwoVarKernel for ConnectionKernel {
    fn eval(&self, x: f64, y: f64) -> f64 {
        psi_kernel(y, x)
    }
}

/// First divided difference of `exp`.
pub fn dd1_exp(a: f64, b: f64) -> f64 {
    let d = a - b;
    if d.abs() < DIAGONAL_EPS {
        (0.5 * (a + b)).exp() * (1.0 + d * d / 24.0)
    } else if d > 0.0 {
        b.exp() * d.exp_m1() / d
    } else {
        a.exp() * (-d).exp_m1() / (-d)
    }
}

/// Second divided difference `exp[a, b, c]`.
pub fn dd2_exp(a: f64, b: f64, c: f64) -> f64 {
    let mut x = [a, b, c];
    x.sort_by(f64::total_cmp);
    let spread = x[2] - x[0];
    if spread < 1.0 {
        // exp[x0,x1,x2] = e^m Σ_k h_k(y)/(k+2)!, y = x − m, h_k complete homogeneous
        let m = (x[0] + x[1] + x[2]) / 3.0;
        let y = [x[0] - m, x[1] - m, x[2] - m];
        const TERMS: usize = 24;
        let mut h = [0.0f64; TERMS];
        // one variable: h_k = y0^k
        h[0] = 1.0;
        for k in 1..TERMS {
            h[k] = h[k - 1] * y[0];
        }
        for &yv in &y[1..] {
            for k in 1..TERMS {
                h[k] += yv * h[k - 1];
            }
        }
        let mut fact = 2.0;
        let mut sum = 0.0;
        for (k, hk) in h.iter().enumerate() {
            sum += hk / fact;
            fact *= (k + 3) as f64;
        }
        m.exp() * sum
    } else {
        (dd1_exp(x[2], x[1]) - dd1_exp(x[1], x[0])) / spread
    }
}

/// Second Fréchet derivative `d²exp_S[X, Y]` given the eigendecomposition of `S`.
pub fn d2_exp(eig: &HermEigen, x: &CMat, y: &CMat) -> CMat {
    let r = eig.rank();
    let xe = eig.to_eigenbasis(x);
    let ye = eig.to_eigenbasis(y);
    let lam = &eig.values;
    let mut out = CMat::zeros(r, r);
    for i in 0..r {
        for j in 0..r {
            let mut acc = C64::new(0.0, 0.0);
            for k in 0..r {
                let w = dd2_exp(lam[i], lam[k], lam[j]);
                acc += (xe[(i, k)] * ye[(k, j)] + ye[(i, k)] * xe[(k, j)]) * w;
            }
            out[(i, j)] = acc;
        }
    }
    eig.from_eigenbasis(&out)
}

/// `φ⊗φ*_h` for `h = h₀·f`, i.e. the endomorphism `v ↦ h(v, φ) φ`. With the
/// convention `h(v, w) = w† H₀ f v` this is the matrix `φ φ† H₀ f`.
pub fn phi_outer(phi: &CVec, f: &CMat, h0: &CMat) -> CMat {
    phi * phi.adjoint() * h0 * f
}

/// `ξ(t) = h₀(φ⊗φ*_{h₀} ∘ e^{t s}, s)`, with `s` written in an
/// `h₀`-orthonormal frame (so the pairing is the Frobenius one after moving
/// `φ` into that frame with `h₀^{1/2}`).
pub fn xi_path(phi: &CVec, s: &CMat, h0: &CMat, t: f64) -> Result<f64> {
    let root = herm_pow(h0, 0.5)?;
    let p = &root * phi;
    let eig = HermEigen::new(s);
    let m = eig.apply_one(|x| (t * x).exp() * x);
    Ok((p.adjoint() * m * &p)[(0, 0)].re)
}

/// `ξ(t) = tr((θ e^{−ts} θ† e^{ts} − e^{−ts} θ† e^{ts} θ) s)`, the fiber part
/// of `h₀(iΛ[θ, e^{−ts}θ*e^{ts}], s)` for a unit-normalized contraction.
pub fn higgs_xi(theta: &CMat, s: &CMat, t: f64) -> f64 {
    let eig = HermEigen::new(s);
    let ep = eig.apply_one(|x| (t * x).exp());
    let em = eig.apply_one(|x| (-t * x).exp());
    let b = &em * theta.adjoint() * &ep;
    let c = theta * &b - &b * theta;
    (c * s).trace().re
}

/// `ξ'(t) = |[s, e^{ts/2} θ e^{−ts/2}]|²`.
pub fn higgs_xi_derivative(theta: &CMat, s: &CMat, t: f64) -> f64 {
    let eig = HermEigen::new(s);
    let ep = eig.apply_one(|x| (0.5 * t * x).exp());
    let em = eig.apply_one(|x| (-0.5 * t * x).exp());
    let th = &ep * theta * &em;
    let c = s * &th - &th * s;
    inner(&c, &c)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    a * b - b * a
}

/// Random fiber data for property checks, benches and the verify suite.
pub mod sample {
    use super::*;
    use rand::Rng;

    pub fn gaussian<R: Rng>(rng: &mut R) -> f64 {
        // Box–Muller; rand 0.8 keeps normal sampling in rand_distr.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen();
        (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
    }

    pub fn complex_matrix<R: Rng>(rng: &mut R, r: usize, scale: f64) -> CMat {
        CMat::from_fn(r, r, |_, _| C64::new(gaussian(rng), gaussian(rng)) * scale)
    }

    pub fn hermitian<R: Rng>(rng: &mut R, r: usize, scale: f64) -> CMat {
        hermitian_part(&complex_matrix(rng, r, scale))
    }

    /// Hermitian matrix with eigenvalues drawn uniformly from `[lo, hi]`.
    pub fn hermitian_with_spectrum<R: Rng>(rng: &mut R, r: usize, lo: f64, hi: f64) -> CMat {
        let u = unitary(rng, r);
        let d = CMat::from_fn(r, r, |i, j| {
            if i == j {
                C64::new(rng.gen_range(lo..=hi), 0.0)
            } else {
                C64::new(0.0, 0.0)
            }
        });
        hermitian_part(&(&u * d * u.adjoint()))
    }

    pub fn positive<R: Rng>(rng: &mut R, r: usize, lo: f64, hi: f64) -> CMat {
        herm_exp(&hermitian_with_spectrum(rng, r, lo.ln(), hi.ln()))
    }

    pub fn unitary<R: Rng>(rng: &mut R, r: usize) -> CMat {
        let a = complex_matrix(rng, r, 1.0);
        a.qr().q()
    }

    pub fn vector<R: Rng>(rng: &mut R, r: usize, scale: f64) -> CVec {
        CVec::from_fn(r, |_, _| C64::new(gaussian(rng), gaussian(rng)) * scale)
    }
}
