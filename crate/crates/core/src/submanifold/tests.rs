use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::catalog;
use crate::linalg::orthonormality_defect;

fn res() -> Resolution {
    Resolution { radial: 12, angular: 24, boundary_angular: None }
}

fn sampled(spec: &str, n: usize, k: usize) -> SampledImmersion<f64> {
    catalog::immersion::<f64>(spec, n, k, res()).unwrap().sample().unwrap()
}

fn spherical(n: usize) -> ConformalMetric<f64> {
    ConformalMetric::new(catalog::field("radial-spherical", n).unwrap(), n)
}

fn gaussian_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| StandardNormal.sample(rng))
}

/// Reparametrizes every sample by `y = A y'`; quadrature weights pick up `1/|det A|`
/// so the measure `w sqrt(det JᵀJ)` is unchanged.
fn reparametrize(imm: &SampledImmersion<f64>, a: &DMatrix<f64>) -> SampledImmersion<f64> {
    let k = imm.k;
    let det = a.determinant().abs();
    let interior = imm
        .interior
        .iter()
        .map(|s| {
            let mut chart_hessian = vec![DVector::zeros(imm.n); k * k];
            for p in 0..k {
                for q in 0..k {
                    for a_ in 0..k {
                        for b in 0..k {
                            chart_hessian[p * k + q] += &s.chart_hessian[a_ * k + b] * (a[(a_, p)] * a[(b, q)]);
                        }
                    }
                }
            }
            InteriorSample { point: s.point.clone(), jacobian: &s.jacobian * a, chart_hessian, weight: s.weight / det }
        })
        .collect();
    SampledImmersion { n: imm.n, k, interior, boundary: imm.boundary.clone() }
}

#[test]
fn frame_of_coordinate_jacobian_is_the_standard_basis() {
    let j = DMatrix::<f64>::identity(5, 2);
    let frame = AdaptedFrame::from_jacobian(&j).unwrap();
    for (i, v) in frame.all().iter().enumerate() {
        assert!((v - crate::linalg::unit::<f64>(5, i)).norm() < 1e-15);
    }
}

#[test]
fn frame_ignores_column_scale() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let j = gaussian_matrix(&mut rng, 4, 2);
    let a = AdaptedFrame::from_jacobian(&j).unwrap();
    let b = AdaptedFrame::from_jacobian(&(&j * 2.0)).unwrap();
    for (x, y) in a.all().iter().zip(b.all()) {
        assert!((x - y).norm() < 1e-14);
    }
}

#[test]
fn rank_deficient_jacobian_is_rejected() {
    let mut j = DMatrix::<f64>::zeros(3, 2);
    j[(0, 0)] = 1.0;
    j[(0, 1)] = 1.0;
    assert!(matches!(AdaptedFrame::from_jacobian(&j), Err(Error::DegenerateSample(_))));
    j[(1, 1)] = 1e-5;
    // condition number 4e10 > 1e8
    assert!(matches!(AdaptedFrame::from_jacobian(&j), Err(Error::DegenerateSample(_))));
}

#[test]
fn flat_disk_has_no_curvature() {
    let imm = sampled("equatorial-disk(4,2)", 4, 2);
    for metric in [ConformalMetric::euclidean(4), spherical(4)] {
        for f in imm.interior_forms(&metric).unwrap() {
            assert!(f.alpha_norm_squared() < 1e-28);
            assert!(f.mean.norm() < 1e-14 && f.mean_tilde.norm() < 1e-14);
            assert!(conformal_sff(&f).iter().all(|a| a.norm() < 1e-14));
        }
    }
}

#[test]
fn round_sphere_mean_curvature() {
    let r = 1.7;
    let (theta, phi) = (0.9f64, 2.3f64);
    let (st, ct, sp, cp) = (theta.sin(), theta.cos(), phi.sin(), phi.cos());
    let x = DVector::from_vec(vec![r * st * cp, r * st * sp, r * ct]);
    let jacobian = DMatrix::from_columns(&[
        DVector::from_vec(vec![r * ct * cp, r * ct * sp, -r * st]),
        DVector::from_vec(vec![-r * st * sp, r * st * cp, 0.0]),
    ]);
    let mixed = DVector::from_vec(vec![-r * ct * sp, r * ct * cp, 0.0]);
    let chart_hessian =
        vec![-x.clone(), mixed.clone(), mixed, DVector::from_vec(vec![-r * st * cp, -r * st * sp, 0.0])];
    let s = InteriorSample { point: x, jacobian, chart_hessian, weight: 1.0 };
    let f = fundamental_forms(&s, &ConformalMetric::euclidean(3)).unwrap();
    assert!((f.mean.norm() - 2.0 / r).abs() < 1e-8);
    // points to the centre
    assert!(f.mean.dot(&s.point) < 0.0);
}

#[test]
fn conformal_sff_traces_to_rescaled_mean_curvature() {
    let imm = sampled("random-graph(11,3)", 5, 2);
    let metric = ConformalMetric::new(catalog::field("linear(0.2,-0.1,0.3,0,0.1)", 5).unwrap(), 5);
    for f in imm.interior_forms(&metric).unwrap() {
        let tilde = conformal_sff(&f);
        let trace = &tilde[0] + &tilde[3];
        let expected = &f.mean_tilde * (2.0 * f.jet.value).exp();
        assert!((trace - expected).norm() < 1e-12);
    }
    for f in imm.interior_forms(&ConformalMetric::euclidean(5)).unwrap() {
        for (a, b) in conformal_sff(&f).iter().zip(&f.alpha) {
            assert!((a - b).norm() == 0.0);
        }
    }
}

#[test]
fn conformal_sff_matches_direct_recomputation() {
    let imm = sampled("random-graph(5,3)", 4, 2);
    for spec in ["radial-spherical", "polynomial(0.3:1.1.0.0; -0.2:0.0.2.1)"] {
        let metric = ConformalMetric::new(catalog::field(spec, 4).unwrap(), 4);
        for f in imm.interior_forms(&metric).unwrap() {
            for (a, b) in conformal_sff(&f).iter().zip(conformal_sff_direct(&f)) {
                assert!((a - b).norm() < 1e-8);
            }
        }
    }
}

#[test]
fn disk_volumes() {
    let imm = sampled("equatorial-disk(3,2)", 3, 2);
    let flat = ConformalMetric::euclidean(3);
    assert!((volume(&imm, &flat).unwrap() - PI).abs() < 1e-6);
    assert!((boundary_volume(&imm, &flat).unwrap() - 2.0 * PI).abs() < 1e-6);
    // hemisphere of the unit sphere
    assert!((volume(&imm, &spherical(3)).unwrap() - 2.0 * PI).abs() < 1e-6);
}

#[test]
fn minimality_checks() {
    let disk = sampled("equatorial-disk(4,2)", 4, 2);
    assert!(check_minimality(&disk, &spherical(4), 1e-8).unwrap().pass);
    let cap = sampled("paraboloid-cap(0.8)", 3, 2);
    let report = check_minimality(&cap, &ConformalMetric::euclidean(3), 1e-6).unwrap();
    assert!(!report.pass && report.max_residual > 0.1);
    assert!(check_minimality(&cap, &ConformalMetric::euclidean(3), f64::INFINITY).unwrap().pass);
}

#[test]
fn free_boundary_defects() {
    let ball = LevelSetDomain::<f64>::ball(3, 1.0).unwrap();
    let disk = sampled("equatorial-disk(3,2)", 3, 2);
    let report = check_free_boundary(&disk, &ball, 1e-9).unwrap();
    assert!(report.pass && report.max_residual < 1e-12);

    let tilted = sampled("tilted-disk(80)", 3, 2);
    let expected = 1.0 - 80f64.to_radians().sin();
    let metric = spherical(3);
    for b in &tilted.boundary {
        let d = free_boundary_defect(b, &ball).unwrap();
        assert!((d - expected).abs() < 1e-10);
        assert!((free_boundary_defect_conformal(b, &ball, &metric).unwrap() - d).abs() <= 1e-12);
    }
    assert!(!check_free_boundary(&tilted, &ball, 1e-6).unwrap().pass);

    let shrunk = LevelSetDomain::<f64>::ball(3, 0.9).unwrap();
    assert!(matches!(check_free_boundary(&disk, &shrunk, 1e-6), Err(Error::InvalidSample(_))));
}

#[test]
fn boundary_conormal_points_out_of_the_disk() {
    let disk = sampled("equatorial-disk(4,2)", 4, 2);
    for b in &disk.boundary {
        assert!((b.conormal.norm() - 1.0).abs() < 1e-12);
        assert!((&b.conormal - &b.point).norm() < 1e-12);
        assert!(b.conormal_defect() < 1e-12);
    }
}

#[test]
fn json_round_trip_is_exact() {
    let imm = sampled("random-graph(2,2)", 5, 3);
    let text = ImmersionDocument::from_immersion(&imm).to_json().unwrap();
    let back: SampledImmersion<f64> = ImmersionDocument::from_json(&text).unwrap().to_immersion().unwrap();
    assert_eq!(back, imm);
}

#[test]
fn json_rejects_wrong_schema_and_lengths() {
    let imm = sampled("equatorial-disk(3,2)", 3, 2);
    let mut doc = ImmersionDocument::from_immersion(&imm);
    doc.interior.weights.pop();
    assert!(doc.to_immersion::<f64>().is_err());
    let mut doc = ImmersionDocument::from_immersion(&imm);
    doc.schema = "something-else/1".into();
    assert!(ImmersionDocument::from_json(&doc.to_json().unwrap()).and_then(|d| d.to_immersion::<f64>()).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn frames_are_orthonormal(seed in any::<u64>(), n in 3usize..8, k in 1usize..3) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let j = gaussian_matrix(&mut rng, n, k);
        let frame = AdaptedFrame::from_jacobian(&j).unwrap();
        prop_assert!(orthonormality_defect(&frame.all()) < 1e-10);
        for v in &frame.normal {
            prop_assert!((j.transpose() * v).norm() < 1e-10 * j.norm());
        }
    }

    #[test]
    fn fundamental_forms_are_symmetric_and_frame_invariant(seed in 0u64..1000, k in 2usize..4) {
        let imm = sampled(&format!("random-graph({seed},3)"), k + 2, k);
        let metric = ConformalMetric::new(catalog::field("radial-custom(0.1,-0.3)", k + 2).unwrap(), k + 2);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
        let mut a = gaussian_matrix(&mut rng, k, k);
        while a.determinant().abs() < 0.1 {
            a = gaussian_matrix(&mut rng, k, k);
        }
        let other = reparametrize(&imm, &a);
        let f0 = imm.interior_forms(&metric).unwrap();
        let f1 = other.interior_forms(&metric).unwrap();
        for (x, y) in f0.iter().zip(&f1) {
            for i in 0..k {
                for j in 0..k {
                    prop_assert!((x.alpha(i, j) - x.alpha(j, i)).norm() < 1e-9);
                }
            }
            let scale = 1.0 + x.mean.norm();
            prop_assert!((&x.mean - &y.mean).norm() <= 1e-9 * scale);
            prop_assert!((x.alpha_norm_squared() - y.alpha_norm_squared()).abs() <= 1e-9 * (1.0 + x.alpha_norm_squared()));
        }
        let (v0, v1) = (volume(&imm, &metric).unwrap(), volume(&other, &metric).unwrap());
        prop_assert!((v0 - v1).abs() <= 1e-9 * v0);
    }
}
