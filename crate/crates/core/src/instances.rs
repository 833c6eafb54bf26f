//! Named problem instances used by the verification suite, the acceptance
//! tests and the example configs.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::fiber::C64;
use crate::geometry::{make_hopf, make_torus, Geometry};
use crate::pair::{curvatures_for_degrees, weight_profile, PairProblem, SplitModel};

pub const NAMES: &[&str] = &[
    "torus-trivial",
    "torus-line",
    "torus-line-unstable",
    "hopf-line",
    "hopf-line-unstable",
    "torus-split",
    "hopf-split",
];

/// Grid sizes: `(torus n, hopf n)`.
pub fn grids(quick: bool) -> (usize, usize) {
    if quick {
        (16, 128)
    } else {
        (64, 512)
    }
}

/// `4π·deg/Vol` for a line bundle.
pub fn line_threshold(g: &Geometry, degree: f64) -> f64 {
    4.0 * PI * degree / g.volume()
}

/// Degree of the Hopf line bundle with deck weight `λ`.
pub fn hopf_line_degree(g: &Geometry, deck_weight: f64) -> f64 {
    g.degree(&vec![Geometry::hopf_line_curvature(deck_weight); g.points()])
}

/// Torus line bundle of degree `deg` with a smooth metric weight.
pub fn torus_line(n: usize, deg: f64, tau: f64, weight: f64) -> Result<PairProblem> {
    let g = make_torus(n, 1.0)?;
    let c = curvatures_for_degrees(&g, &[deg]);
    let w = vec![weight_profile(&g, weight, 1)];
    PairProblem::split(g, &c, Some(&w), &[C64::new(1.0, 0.0)], tau)?.with_model(SplitModel::new(vec![deg], 0)?)
}

/// Hopf line bundle with deck weight `λ` and a smooth metric weight.
pub fn hopf_line(n: usize, deck_weight: f64, tau: f64, weight: f64) -> Result<PairProblem> {
    let g = make_hopf(n)?;
    let deg = hopf_line_degree(&g, deck_weight);
    let w = vec![weight_profile(&g, weight, 1)];
    PairProblem::split(g, &[Geometry::hopf_line_curvature(deck_weight)], Some(&w), &[C64::new(1.0, 0.0)], tau)?
        .with_model(SplitModel::new(vec![deg], 0)?)
}

/// `L_φ ⊕ L″` with `φ` in the first summand and `τ = 4π·μ(L″)/Vol`.
pub fn split_case_b(g: Geometry, deg_phi: f64, deg_other: f64, weights: (f64, f64)) -> Result<PairProblem> {
    if !(deg_phi < deg_other) {
        return Err(Error::Model(format!("need deg L_phi < deg L'', got {deg_phi} and {deg_other}")));
    }
    let tau = line_threshold(&g, deg_other);
    let c = curvatures_for_degrees(&g, &[deg_phi, deg_other]);
    let w = vec![weight_profile(&g, weights.0, 1), weight_profile(&g, weights.1, 2)];
    PairProblem::split(g, &c, Some(&w), &[C64::new(1.0, 0.0), C64::new(0.0, 0.0)], tau)?
        .with_model(SplitModel::new(vec![deg_phi, deg_other], 0)?)
}

/// The summands of [`split_case_b`] as independent rank-1 problems.
pub fn split_case_b_summands(g: Geometry, deg_phi: f64, deg_other: f64, weights: (f64, f64)) -> Result<[PairProblem; 2]> {
    let tau = line_threshold(&g, deg_other);
    let c = curvatures_for_degrees(&g, &[deg_phi, deg_other]);
    let w1 = vec![weight_profile(&g, weights.0, 1)];
    let w2 = vec![weight_profile(&g, weights.1, 2)];
    Ok([
        PairProblem::split(g.clone(), &c[..1], Some(&w1), &[C64::new(1.0, 0.0)], tau)?,
        PairProblem::split(g, &c[1..], Some(&w2), &[C64::new(0.0, 0.0)], tau)?,
    ])
}

pub fn by_name(name: &str, quick: bool) -> Result<PairProblem> {
    let (nt, nh) = grids(quick);
    match name {
        "torus-trivial" => {
            let g = make_torus(nt, 1.0)?;
            PairProblem::split(g, &[0.0], None, &[C64::new(1.0, 0.0)], 2.0)
        }
        "torus-line" => torus_line(nt, 1.0, 1.2 * 4.0 * PI, 0.3),
        "torus-line-unstable" => torus_line(nt, 1.0, 0.8 * 4.0 * PI, 0.3),
        "hopf-line" => hopf_line(nh, 2.0, 3.0, 0.3),
        "hopf-line-unstable" => hopf_line(nh, 2.0, 0.4, 0.3),
        "torus-split" => split_case_b(make_torus(nt, 1.0)?, 0.0, 1.0, (0.2, -0.1)),
        "hopf-split" => split_case_b(make_hopf(nh)?, 0.0, 1.0, (0.3, -0.2)),
        other => Err(Error::Config(format!("unknown instance {other:?}; known: {}", NAMES.join(", ")))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_names_build() {
        for n in NAMES {
            by_name(n, true).unwrap();
        }
        assert!(by_name("nope", true).is_err());
    }

    #[test]
    fn hopf_threshold_is_two_for_weight_two() {
        let g = make_hopf(64).unwrap();
        let d = hopf_line_degree(&g, 2.0);
        assert!((d - PI * 2f64.ln()).abs() < 1e-12);
        assert!((line_threshold(&g, d) - 2.0).abs() < 1e-12);
    }

    #[test]
    fn case_b_requires_ordered_degrees() {
        assert!(split_case_b(make_torus(8, 1.0).unwrap(), 1.0, 0.0, (0.0, 0.0)).is_err());
    }
}
