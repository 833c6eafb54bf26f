//! Grid-indexed fiber data.

use crate::error::{Error, Result};
use crate::exec;
use crate::fiber::{self, CMat, CVec, HermEigen, C64};

pub type ScalarField = Vec<f64>;

/// Grid-indexed `r×r` complex matrices. Houses Hermitian fields (`s = log f`,
/// residuals), positive fields (`f`), and general endomorphism fields
/// (connection forms, Higgs field coefficients).
#[derive(Clone, Debug, PartialEq)]
pub struct MatField {
    rank: usize,
    data: Vec<CMat>,
}

/// Hermitian-valued field.
pub type HermField = MatField;
/// Positive-definite Hermitian-valued field.
pub type PosHermField = MatField;

impl MatField {
    pub fn from_vec(rank: usize, data: Vec<CMat>) -> Self {
        debug_assert!(data.iter().all(|m| m.nrows() == rank && m.ncols() == rank));
        MatField { rank, data }
    }

    pub fn zeros(points: usize, rank: usize) -> Self {
        MatField { rank, data: vec![CMat::zeros(rank, rank); points] }
    }

    pub fn constant(points: usize, m: CMat) -> Self {
        MatField { rank: m.nrows(), data: vec![m; points] }
    }

    pub fn identity(points: usize, rank: usize) -> Self {
        Self::constant(points, fiber::identity(rank))
    }

    pub fn from_fn(points: usize, rank: usize, f: impl Fn(usize) -> CMat + Sync + Send) -> Self {
        MatField { rank, data: exec::map_indices(points, f) }
    }

    /// Diagonal field from per-summand scalar fields.
    pub fn diagonal(entries: &[Vec<f64>]) -> Self {
        let r = entries.len();
        let n = entries[0].len();
        Self::from_fn(n, r, |i| {
            CMat::from_fn(r, r, |a, b| if a == b { C64::new(entries[a][i], 0.0) } else { C64::new(0.0, 0.0) })
        })
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn points(&self) -> &[CMat] {
        &self.data
    }

    pub fn points_mut(&mut self) -> &mut [CMat] {
        &mut self.data
    }

    pub fn at(&self, i: usize) -> &CMat {
        &self.data[i]
    }

    pub fn map(&self, f: impl Fn(&CMat) -> CMat + Sync + Send) -> Self {
        MatField { rank: self.rank, data: exec::map_slice(&self.data, f) }
    }

    pub fn map_indexed(&self, f: impl Fn(usize, &CMat) -> CMat + Sync + Send) -> Self {
        MatField { rank: self.rank, data: exec::map_indices(self.len(), |i| f(i, &self.data[i])) }
    }

    pub fn zip_map(&self, other: &MatField, f: impl Fn(&CMat, &CMat) -> CMat + Sync + Send) -> Self {
        assert_eq!(self.len(), other.len(), "field length mismatch");
        MatField {
            rank: self.rank,
            data: exec::map_indices(self.len(), |i| f(&self.data[i], &other.data[i])),
        }
    }

    pub fn scalar_map(&self, f: impl Fn(&CMat) -> f64 + Sync + Send) -> ScalarField {
        exec::map_slice(&self.data, f)
    }

    pub fn check_shape(&self, points: usize, rank: usize) -> Result<()> {
        if self.len() != points || self.rank != rank {
            return Err(Error::Shape(format!(
                "field has {} points of rank {}, expected {} of rank {}",
                self.len(),
                self.rank,
                points,
                rank
            )));
        }
        Ok(())
    }

    pub fn add(&self, other: &MatField) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &MatField) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scale(&self, c: f64) -> Self {
        self.map(|a| a * C64::new(c, 0.0))
    }

    pub fn axpy(&self, c: f64, other: &MatField) -> Self {
        self.zip_map(other, |a, b| a + b * C64::new(c, 0.0))
    }

    /// Pointwise product `self · other`.
    pub fn mul(&self, other: &MatField) -> Self {
        self.zip_map(other, |a, b| a * b)
    }

    pub fn adjoint(&self) -> Self {
        self.map(|a| a.adjoint())
    }

    pub fn hermitian_part(&self) -> Self {
        self.map(fiber::hermitian_part)
    }

    pub fn exp(&self) -> Self {
        self.map(fiber::herm_exp)
    }

    pub fn log(&self) -> Result<Self> {
        let out: Vec<Result<CMat>> = exec::map_slice(&self.data, fiber::herm_log);
        Ok(MatField { rank: self.rank, data: out.into_iter().collect::<Result<_>>()? })
    }

    pub fn pow(&self, p: f64) -> Result<Self> {
        let out: Vec<Result<CMat>> = exec::map_slice(&self.data, |m| fiber::herm_pow(m, p));
        Ok(MatField { rank: self.rank, data: out.into_iter().collect::<Result<_>>()? })
    }

    pub fn eigen(&self) -> Vec<HermEigen> {
        exec::map_slice(&self.data, HermEigen::new)
    }

    /// Entry `(a, b)` as a complex scalar field.
    pub fn component(&self, a: usize, b: usize) -> Vec<C64> {
        self.data.iter().map(|m| m[(a, b)]).collect()
    }

    /// Applies a linear map of complex scalar fields to every matrix entry.
    pub fn map_components(&self, op: impl Fn(&[C64]) -> Vec<C64>) -> Self {
        self.map_components_to(self.len(), op)
    }

    /// Same as [`map_components`](Self::map_components) for maps that change
    /// the number of points (e.g. onto a staggered grid).
    pub fn map_components_to(&self, points: usize, op: impl Fn(&[C64]) -> Vec<C64>) -> Self {
        let r = self.rank;
        let mut out = vec![CMat::zeros(r, r); points];
        for a in 0..r {
            for b in 0..r {
                let comp = op(&self.component(a, b));
                debug_assert_eq!(comp.len(), points);
                for (m, v) in out.iter_mut().zip(comp) {
                    m[(a, b)] = v;
                }
            }
        }
        MatField { rank: r, data: out }
    }

    pub fn trace(&self) -> ScalarField {
        self.scalar_map(|m| m.trace().re)
    }

    /// `sup_x |M(x)|` in the Frobenius (`h₀`) norm.
    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(fiber::norm).fold(0.0, f64::max)
    }

    /// Pointwise `Re tr(A B†)`.
    pub fn pointwise_inner(&self, other: &MatField) -> ScalarField {
        exec::map_indices(self.len(), |i| fiber::inner(&self.data[i], &other.data[i]))
    }

    pub fn pointwise_norm_sq(&self) -> ScalarField {
        self.pointwise_inner(self)
    }

    /// Largest relative anti-Hermitian part over the grid.
    pub fn hermitian_defect(&self) -> f64 {
        self.data.iter().map(fiber::hermitian_defect).fold(0.0, f64::max)
    }

    /// Number of real degrees of freedom of a Hermitian field.
    pub fn hermitian_dof(points: usize, rank: usize) -> usize {
        points * rank * rank
    }

    /// Packs the Hermitian part into real coordinates: per point the diagonal
    /// followed by `(Re, Im)` of the strict upper triangle, scaled by `√2` so
    /// the Euclidean norm equals the Frobenius norm.
    pub fn pack_hermitian(&self) -> Vec<f64> {
        let r = self.rank;
        let mut out = Vec::with_capacity(self.len() * r * r);
        let s2 = std::f64::consts::SQRT_2;
        for m in &self.data {
            for a in 0..r {
                out.push(m[(a, a)].re);
            }
            for a in 0..r {
                for b in a + 1..r {
                    let z = (m[(a, b)] + m[(b, a)].conj()) * 0.5;
                    out.push(z.re * s2);
                    out.push(z.im * s2);
                }
            }
        }
        out
    }

    pub fn unpack_hermitian(points: usize, rank: usize, v: &[f64]) -> Self {
        let r = rank;
        let stride = r * r;
        assert_eq!(v.len(), points * stride);
        let s2 = std::f64::consts::FRAC_1_SQRT_2;
        Self::from_fn(points, r, |i| {
            let chunk = &v[i * stride..(i + 1) * stride];
            let mut m = CMat::zeros(r, r);
            for a in 0..r {
                m[(a, a)] = C64::new(chunk[a], 0.0);
            }
            let mut k = r;
            for a in 0..r {
                for b in a + 1..r {
                    let z = C64::new(chunk[k] * s2, chunk[k + 1] * s2);
                    m[(a, b)] = z;
                    m[(b, a)] = z.conj();
                    k += 2;
                }
            }
            m
        })
    }
}

/// Grid-indexed complex `r`-vectors: the holomorphic section `φ`.
#[derive(Clone, Debug, PartialEq)]
pub struct SectionField {
    rank: usize,
    data: Vec<CVec>,
}

impl SectionField {
    pub fn from_vec(rank: usize, data: Vec<CVec>) -> Self {
        SectionField { rank, data }
    }

    pub fn constant(points: usize, v: CVec) -> Self {
        SectionField { rank: v.len(), data: vec![v; points] }
    }

    pub fn zeros(points: usize, rank: usize) -> Self {
        Self::constant(points, CVec::zeros(rank))
    }

    pub fn rank(&self) -> usize {
        self.rank
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn at(&self, i: usize) -> &CVec {
        &self.data[i]
    }

    pub fn points(&self) -> &[CVec] {
        &self.data
    }

    pub fn component(&self, a: usize) -> Vec<C64> {
        self.data.iter().map(|v| v[a]).collect()
    }

    pub fn map_components(&self, points: usize, op: impl Fn(&[C64]) -> Vec<C64>) -> Self {
        let r = self.rank;
        let mut out = vec![CVec::zeros(r); points];
        for a in 0..r {
            for (v, z) in out.iter_mut().zip(op(&self.component(a))) {
                v[a] = z;
            }
        }
        SectionField { rank: r, data: out }
    }

    /// Pointwise `φ φ†`.
    pub fn outer(&self) -> MatField {
        MatField::from_fn(self.len(), self.rank, |i| &self.data[i] * self.data[i].adjoint())
    }

    /// Pointwise `|φ|²`.
    pub fn norm_sq(&self) -> ScalarField {
        self.data.iter().map(|v| v.norm_squared()).collect()
    }

    pub fn sup_norm(&self) -> f64 {
        self.data.iter().map(|v| v.norm()).fold(0.0, f64::max)
    }

    /// Pointwise `M(x) φ(x)`.
    pub fn transform(&self, m: &MatField) -> Self {
        SectionField { rank: self.rank, data: exec::map_indices(self.len(), |i| m.at(i) * &self.data[i]) }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fiber::sample;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    proptest! {
        #[test]
        fn hermitian_packing_round_trips_and_preserves_norm(seed in 0u64..1000, rank in 1usize..4) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let f = MatField::from_vec(rank, (0..5).map(|_| sample::hermitian(&mut rng, rank, 1.0)).collect());
            let v = f.pack_hermitian();
            let back = MatField::unpack_hermitian(5, rank, &v);
            prop_assert!(back.sub(&f).sup_norm() < 1e-14);
            let n2: f64 = v.iter().map(|x| x * x).sum();
            let f2: f64 = f.pointwise_norm_sq().iter().sum();
            prop_assert!((n2 - f2).abs() < 1e-12 * f2.max(1.0));
        }
    }

    #[test]
    fn shape_check() {
        let f = MatField::zeros(4, 2);
        assert!(f.check_shape(4, 2).is_ok());
        assert!(matches!(f.check_shape(5, 2), Err(Error::Shape(_))));
    }
}
