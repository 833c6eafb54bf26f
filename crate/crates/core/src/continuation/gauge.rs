//! Initial gauge: replace the reference metric so that a given starting
//! metric solves the `ε = 1` equation exactly.
//!
//! With `K` the mean curvature of the starting metric `h = h₀·f_h`, the new
//! reference is `h₀' = h·e^{K}` (raw matrix `G = f_h e^{K}`). Relative to `h₀'`
//! the starting metric is `e^{-K}`, so `L₁(e^{-K}) = K − K = 0`. Everything is
//! re-expressed in a unitary frame of `h₀'` via `G^{1/2}`.

use super::operator::OperatorState;
use crate::error::Result;
use crate::fiber::{self, HermEigen, C64};
use crate::field::MatField;
use crate::pair::{connection_form_with, PairProblem};

#[derive(Clone, Debug)]
pub struct GaugedProblem {
    pub problem: PairProblem,
    /// `G^{1/2}` at the nodes; old coordinates map to new ones by `v' = G^{1/2} v`.
    pub root: MatField,
    /// Starting point `s₁ = log f₁ = −K'` of the continuation.
    pub s_start: MatField,
    /// `sup|∂̄φ'|` after the discrete transform.
    pub holomorphic_defect: f64,
    /// `sup|L₁(f₁)|` after the curvature correction.
    pub start_residual: f64,
}

impl GaugedProblem {
    /// Raw metric `G^{1/2} e^{s} G^{1/2}` relative to the original `h₀`.
    pub fn raw_metric(&self, s: &MatField) -> MatField {
        let f = s.exp();
        MatField::from_fn(f.len(), f.rank(), |i| {
            fiber::hermitian_part(&(self.root.at(i) * f.at(i) * self.root.at(i)))
        })
    }
}

pub fn initial_gauge(p: &PairProblem, f_h: &MatField) -> Result<GaugedProblem> {
    let g = &p.geom;
    let r = p.rank;
    let n = p.points();
    f_h.check_shape(n, r)?;
    let s_h = f_h.log()?;
    let st0 = OperatorState::new(p, 0.0, &s_h)?;
    let fh_half = f_h.pow(0.5)?;
    let fh_mhalf = f_h.pow(-0.5)?;
    let hat = st0.residual_hat();
    let k_sym = MatField::from_fn(n, r, |i| fiber::hermitian_part(&(fh_mhalf.at(i) * hat.at(i) * fh_mhalf.at(i))));
    let ek = k_sym.exp();
    let gm = MatField::from_fn(n, r, |i| fiber::hermitian_part(&(fh_half.at(i) * ek.at(i) * fh_half.at(i))));
    let log_g = gm.log()?;
    let root = log_g.scale(0.5).exp();
    let root_inv = log_g.scale(-0.5).exp();

    // K = f_h^{-1/2} K̃ f_h^{1/2}, K' = G^{1/2} K G^{-1/2}
    let k_new = MatField::from_fn(n, r, |i| {
        let k = fh_mhalf.at(i) * k_sym.at(i) * fh_half.at(i);
        fiber::hermitian_part(&(root.at(i) * k * root_inv.at(i)))
    });
    let s_start = k_new.scale(-1.0);

    let phi = p.phi.transform(&root);
    let theta = p.theta.as_ref().map(|th| {
        MatField::from_fn(n, r, |i| root.at(i) * th.at(i) * root_inv.at(i))
    });
    let a_old = p.connection_form(&log_g);
    let a_base = if p.has_connection() { p.a0.add(&a_old) } else { a_old };
    let t_conn = connection_form_with(g, None, &log_g.scale(-0.5));
    let lg_bar = g.to_form_grid_mat(&log_g);
    let a0 = MatField::from_fn(a_base.len(), r, |i| {
        let eig = HermEigen::new(lg_bar.at(i));
        let t_inv = eig.apply_one(|x| (0.5 * x).exp());
        let t = eig.apply_one(|x| (-0.5 * x).exp());
        &t_inv * a_base.at(i) * &t + t_conn.at(i)
    });

    let zero_curv = MatField::zeros(n, r);
    let trial = p.with_fields(zero_curv, a0.clone(), phi.clone(), theta.clone());
    let st1 = OperatorState::new(&trial, 1.0, &s_start)?;
    let hat0 = st1.residual_hat();
    let f1_eig = s_start.eigen();
    let curv = MatField::from_fn(n, r, |i| {
        // Hermitian C with f₁C + Cf₁ = −2·hat₀
        let e = &f1_eig[i];
        let x = e.to_eigenbasis(hat0.at(i));
        let c = fiber::CMat::from_fn(r, r, |a, b| {
            let mu = e.values[a].exp() + e.values[b].exp();
            x[(a, b)] * C64::new(-2.0 / mu, 0.0)
        });
        fiber::hermitian_part(&e.from_eigenbasis(&c))
    });
    let problem = p.with_fields(curv, a0, phi, theta);
    let holomorphic_defect = problem.holomorphic_defect();
    let start_residual = OperatorState::new(&problem, 1.0, &s_start)?.residual_sup();
    Ok(GaugedProblem { problem, root, s_start, holomorphic_defect, start_residual })
}

/// `sup_x |log(H_a^{-1/2} H_b H_a^{-1/2})|` for two raw metrics.
pub fn metric_distance(h_a: &MatField, h_b: &MatField) -> Result<f64> {
    super::diagnostics::cauchy_increment(h_a, h_b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{make_hopf, make_torus};
    use crate::pair::curvatures_for_degrees;

    fn rank_two(g: crate::geometry::Geometry) -> PairProblem {
        let c = curvatures_for_degrees(&g, &[0.0, 0.0]);
        let w = vec![crate::pair::weight_profile(&g, 0.02, 1), crate::pair::weight_profile(&g, -0.01, 2)];
        PairProblem::split(g, &c, Some(&w), &[C64::new(1.0, 0.0), C64::new(0.5, 0.0)], 2.0).unwrap()
    }

    #[test]
    fn scalar_example() {
        let g = make_torus(8, 1.0).unwrap();
        let p = PairProblem::split(g, &[0.0], None, &[C64::new(1.0, 0.0)], 2.0).unwrap();
        let id = MatField::identity(p.points(), 1);
        let gp = initial_gauge(&p, &id).unwrap();
        for i in 0..p.points() {
            assert!((gp.s_start.at(i)[(0, 0)].re - 0.5).abs() < 1e-14);
        }
        assert!(gp.start_residual < 1e-12);
    }

    #[test]
    fn identity_start_makes_the_start_exact() {
        for g in [make_torus(16, 1.0).unwrap(), make_hopf(64).unwrap()] {
            let p = rank_two(g);
            let id = MatField::identity(p.points(), 2);
            let gp = initial_gauge(&p, &id).unwrap();
            assert!(gp.start_residual < 1e-10, "{}", gp.start_residual);
            // h₀'·f₁ reproduces the starting metric
            let back = gp.raw_metric(&gp.s_start);
            assert!(back.sub(&id).sup_norm() < 1e-10);
        }
    }

    #[test]
    fn gauge_preserves_degree() {
        let p = rank_two(make_hopf(64).unwrap());
        let g = &p.geom;
        let id = MatField::identity(p.points(), 2);
        let gp = initial_gauge(&p, &id).unwrap();
        let d0 = g.degree(&p.curv.trace());
        let d1 = g.degree(&gp.problem.curv.trace());
        assert!((d0 - d1).abs() < 1e-8, "{d0} {d1}");
    }

    #[test]
    fn metric_distance_is_symmetric() {
        let g = make_torus(8, 1.0).unwrap();
        let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
        let a = MatField::from_fn(g.points(), 2, |_| fiber::identity(2)).map(|m| m.clone());
        let b = MatField::from_vec(2, (0..g.points()).map(|_| fiber::sample::positive(&mut rng, 2, 0.5, 2.0)).collect());
        let d1 = metric_distance(&a, &b).unwrap();
        let d2 = metric_distance(&b, &a).unwrap();
        assert!((d1 - d2).abs() < 1e-12);
    }
}
