use std::f64::consts::PI;

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::catalog;
use crate::conformal::ScalarField;
use crate::linalg::random_orthogonal;
use crate::submanifold::{fundamental_forms, ParametricImmersion, Resolution};

fn res() -> Resolution {
    Resolution { radial: 12, angular: 24, boundary_angular: None }
}

fn setup(
    imm: &str,
    field: &str,
    dom: &str,
    n: usize,
    k: usize,
) -> (SampledImmersion<f64>, ConformalMetric<f64>, LevelSetDomain<f64>) {
    let s = catalog::immersion::<f64>(imm, n, k, res()).unwrap().sample().unwrap();
    let metric = ConformalMetric::new(catalog::field(field, n).unwrap(), n);
    (s, metric, catalog::domain(dom, n).unwrap())
}

fn disk(n: usize, k: usize, field: &str) -> (SampledImmersion<f64>, ConformalMetric<f64>, LevelSetDomain<f64>) {
    setup(&format!("equatorial-disk({n},{k})"), field, "ball(1)", n, k)
}

fn quick_config(p: usize) -> CertificateConfig {
    CertificateConfig {
        p,
        curvature: CurvatureSampler { points: 500, planes: 4, seed: 3 },
        boundary: BoundarySampler { count: 128, seed: 0 },
        ..CertificateConfig::default()
    }
}

#[test]
fn zero_field_gives_zero_operators() {
    let (imm, metric, _) = disk(4, 2, "zero");
    let forms = imm.interior_forms(&metric).unwrap();
    let x = NormalVector::zero(4, 2);
    assert_eq!(s_euclid(&forms[3], &x).unwrap(), 0.0);
    let e = unit::<f64>(4, 3);
    let xe = projected_constant_field(&e, &forms[3]);
    assert_eq!(xe.value, e);
    assert!(xe.derivatives.iter().all(|d| d.norm() == 0.0));
    assert_eq!(s_euclid(&forms[3], &xe).unwrap(), 0.0);
    let tangent = projected_constant_field(&unit::<f64>(4, 0), &forms[3]);
    assert!(tangent.value.norm() < 1e-15);
}

/// ∇^⊥_{v_i} X from central differences of X along the chart, pushed through C = R⁻¹.
fn fd_normal_derivative(
    imm: &ParametricImmersion<f64>,
    t: &DVector<f64>,
    e: &DVector<f64>,
    forms: &FundamentalForms<f64>,
) -> Vec<DVector<f64>> {
    let h = 1e-5;
    let k = t.len();
    let field_at = |tt: &DVector<f64>| {
        let (_, jac, _) = imm.evaluate(tt);
        let frame = crate::submanifold::AdaptedFrame::from_jacobian(&jac).unwrap();
        e - frame.tangent_part(e)
    };
    let partials: Vec<DVector<f64>> = (0..k)
        .map(|a| {
            let mut tp = t.clone();
            let mut tm = t.clone();
            tp[a] += h;
            tm[a] -= h;
            forms.frame.normal_part(&((field_at(&tp) - field_at(&tm)) / (2.0 * h)))
        })
        .collect();
    let c = &forms.frame.chart_to_frame;
    (0..k).map(|i| (0..k).fold(DVector::zeros(e.len()), |acc, a| acc + &partials[a] * c[(a, i)])).collect()
}

#[test]
fn projected_field_derivatives_match_finite_differences_on_paraboloid() {
    let imm = catalog::immersion::<f64>("paraboloid-cap(1.3)", 3, 2, res()).unwrap();
    let metric = ConformalMetric::euclidean(3);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for &(r, th) in &[(0.1, 0.3), (0.37, 2.0), (0.45, 4.4)] {
        let t = DVector::from_vec(vec![r, th]);
        let (point, jacobian, chart_hessian) = imm.evaluate(&t);
        let s = crate::submanifold::InteriorSample { point, jacobian, chart_hessian, weight: 1.0 };
        let forms = fundamental_forms(&s, &metric).unwrap();
        let e: DVector<f64> = random_unit(3, &mut rng);
        let x = projected_constant_field(&e, &forms);
        let fd = fd_normal_derivative(&imm, &t, &e, &forms);
        for i in 0..2 {
            assert!((&x.derivatives[i] - &fd[i]).norm() < 1e-8, "derivative {i} at r = {r}");
        }
        // S_g from the oracle's derivatives
        let oracle = fd.iter().map(|d| d.norm_squared()).sum::<f64>()
            - forms.alpha.iter().map(|a| a.dot(&x.value).powi(2)).sum::<f64>();
        assert!((s_euclid(&forms, &x).unwrap() - oracle).abs() < 1e-8);
    }
}

#[test]
fn lemma_reduces_to_flat_operator_without_field() {
    let (imm, metric, _) = setup("random-graph(5,3)", "zero", "ball(2)", 5, 2);
    let forms = imm.interior_forms(&metric).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for f in forms.iter().step_by(17) {
        let x = projected_constant_field(&random_unit(5, &mut rng), f);
        let s = s_euclid(f, &x).unwrap();
        assert!((s_tilde_lemma(f, &x).unwrap() - s).abs() < 1e-12);
        assert!((s_tilde_lemma_rescaled(f, &x).unwrap() - s).abs() < 1e-12);
        assert!((s_direct(f, &f.jet, &x).unwrap() - s).abs() < 1e-10);
    }
}

#[test]
fn lemma_matches_direct_assembly_on_minimal_disk() {
    for field in ["radial-spherical", "radial-custom(0,0.5,-0.2)"] {
        let (imm, metric, _) = disk(4, 2, field);
        let forms = imm.interior_forms(&metric).unwrap();
        for f in &forms {
            for l in 0..4 {
                let x = projected_constant_field(&unit(4, l), f);
                let lemma = s_tilde_lemma(f, &x).unwrap();
                let direct = s_direct(f, &f.jet, &x).unwrap();
                assert!((lemma - direct).abs() < 1e-7, "{field}: {lemma} vs {direct}");
                let rescaled = s_tilde_lemma_rescaled(f, &x).unwrap();
                let direct_rescaled = (2.0 * f.jet.value).exp() * s_direct(f, &f.jet, &x.rescaled(f)).unwrap();
                assert!((rescaled - direct_rescaled).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn lemma_defect_off_minimality_is_the_mean_curvature_term() {
    // without minimality the two assemblies differ by 2 X(u) <H − k∇^⊥u, X>
    let (imm, _, _) = setup("random-graph(9,2)", "zero", "ball(2)", 4, 2);
    let u = crate::catalog::field::<f64>("polynomial(0.3:1.0.0.0;-0.2:0.1.1.0;0.1:0.0.0.2)", 4).unwrap();
    let metric = ConformalMetric::new(u, 4);
    let forms = imm.interior_forms(&metric).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for f in forms.iter().step_by(7) {
        let x = projected_constant_field(&random_unit(4, &mut rng), f);
        let xu = f.jet.d(&x.value);
        let defect = 2.0 * xu * (&f.mean - f.grad_u_normal() * 2.0).dot(&x.value);
        let lhs = s_direct(f, &f.jet, &x).unwrap() - s_tilde_lemma(f, &x).unwrap();
        assert!((lhs - defect).abs() < 1e-9, "{lhs} vs {defect}");
    }
}

#[test]
fn operators_are_quadratic() {
    let (imm, metric, dom) = disk(4, 2, "radial-spherical");
    let forms = imm.interior_forms(&metric).unwrap();
    let geoms = imm.boundary_geometries(&metric).unwrap();
    let f = &forms[5];
    let x = projected_constant_field(&DVector::from_vec(vec![0.3, -0.2, 0.7, 0.5]), f);
    let c = -2.5;
    for op in [s_euclid::<f64>, s_tilde_lemma::<f64>, s_tilde_lemma_rescaled::<f64>] {
        let (a, b) = (op(f, &x).unwrap(), op(f, &x.scaled(c)).unwrap());
        assert!((b - c * c * a).abs() < 1e-12 * (1.0 + b.abs()));
    }
    let xb = projected_constant_boundary(&unit(4, 2), &geoms[0]);
    let t1 = t_tilde_lemma(&imm.boundary[0], &xb, &geoms[0].jet, &dom).unwrap();
    let t2 = t_tilde_lemma(&imm.boundary[0], &(&xb * 2f64.sqrt()), &geoms[0].jet, &dom).unwrap();
    assert!((t2 - 2.0 * t1).abs() < 1e-12);
}

#[test]
fn boundary_operator_on_unit_ball() {
    let (imm, metric, dom) = disk(4, 2, "zero");
    let geoms = imm.boundary_geometries(&metric).unwrap();
    for (b, g) in imm.boundary.iter().zip(&geoms) {
        for l in 2..4 {
            let x = projected_constant_boundary(&unit(4, l), g);
            assert!((t_euclid(b, &x, &dom).unwrap() + 1.0).abs() < 1e-12);
            assert!((t_tilde_lemma(b, &x, &g.jet, &dom).unwrap() + 1.0).abs() < 1e-12);
        }
        assert_eq!(t_euclid(b, &DVector::zeros(4), &dom).unwrap(), 0.0);
        assert!((trace_t_euclid(b, g, &dom).unwrap() + 2.0).abs() < 1e-12);
    }
    // a vector with a component along η is rejected
    let b = &imm.boundary[0];
    assert!(matches!(t_euclid(b, &b.point, &dom), Err(Error::Precondition(_))));
}

#[test]
fn boundary_operator_on_ellipsoid_axis() {
    // at (a,0,0) on x²/a² + y²/b² + z²/c² = 1 the principal curvatures are a/b², a/c²
    let dom = LevelSetDomain::<f64>::ellipsoid(&[2.0, 1.0, 1.5]).unwrap();
    let point = DVector::from_vec(vec![2.0, 0.0, 0.0]);
    let jacobian = nalgebra::DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.0, 0.0, 0.0, 1.0]);
    let b = BoundarySample::from_chart(point, jacobian, 1.0, 0, 1.0).unwrap();
    let x = DVector::from_vec(vec![0.0, 0.7, 0.0]);
    assert!((t_euclid(&b, &x, &dom).unwrap() + 2.0 / 1.0 * 0.49).abs() < 1e-12);
    let x = DVector::from_vec(vec![0.0, 0.0, 0.7]);
    let metric = ConformalMetric::euclidean(3);
    assert!((t_euclid(&b, &x, &dom).unwrap() + 2.0 / 2.25 * 0.49).abs() < 1e-12);
    let jet = metric.jet(&b.point).unwrap();
    assert!((t_direct(&b, &x, &jet, &dom).unwrap() - t_euclid(&b, &x, &dom).unwrap()).abs() < 1e-12);
}

#[test]
fn boundary_lemma_matches_direct_assembly() {
    for field in ["radial-spherical", "radial-custom(0,0.5)", "radial-custom(0.2,-0.3,0.1)"] {
        let (imm, metric, dom) = disk(5, 2, field);
        let geoms = imm.boundary_geometries(&metric).unwrap();
        for (b, g) in imm.boundary.iter().zip(&geoms) {
            for l in 0..5 {
                let x = projected_constant_boundary(&unit(5, l), g);
                let lemma = t_tilde_lemma(b, &x, &g.jet, &dom).unwrap();
                let direct = t_direct(b, &x, &g.jet, &dom).unwrap();
                assert!((lemma - direct).abs() < 1e-7);
            }
        }
    }
}

#[test]
fn spherical_boundary_term_vanishes() {
    // u'(1) = −1 for the spherical factor, so e^{−u}(−1 − (−1)) = 0
    let (imm, metric, dom) = disk(4, 2, "radial-spherical");
    let geoms = imm.boundary_geometries(&metric).unwrap();
    let du = -2.0 * 1.0 / (1.0 + 1.0);
    for (b, g) in imm.boundary.iter().zip(&geoms) {
        assert!((g.jet.d(&b.conormal) - du).abs() < 1e-12);
        let x = projected_constant_boundary(&unit(4, 3), g);
        assert!(t_tilde_lemma(b, &x, &g.jet, &dom).unwrap().abs() < 1e-12);
    }
}

#[test]
fn projector_trace_is_codimension() {
    let (imm, metric, _) = setup("random-graph(3,3)", "zero", "ball(2)", 6, 3);
    let forms = imm.interior_forms(&metric).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let q = random_orthogonal::<f64, _>(6, &mut rng);
    for f in forms.iter().step_by(11) {
        let total: f64 =
            (0..6).map(|l| projected_constant_field(&q.column(l).into_owned(), f).value.norm_squared()).sum();
        assert!((total - 3.0).abs() < 1e-12);
    }
}

#[test]
fn flat_trace_vanishes_on_random_graphs() {
    for (seed, n, k) in [(1, 4, 2), (2, 5, 3), (3, 6, 3), (4, 6, 2)] {
        let (imm, metric, _) = setup(&format!("random-graph({seed},3)"), "zero", "ball(2)", n, k);
        let forms = imm.interior_forms(&metric).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let q = random_orthogonal::<f64, _>(n, &mut rng);
        let basis: Vec<DVector<f64>> = (0..n).map(|l| q.column(l).into_owned()).collect();
        for f in &forms {
            let canonical = trace_s_euclid(f).unwrap();
            assert!(canonical.abs() < 1e-9, "trace {canonical}");
            assert!((trace_s_euclid_in(f, &basis).unwrap() - canonical).abs() < 1e-12 * (1.0 + f.alpha_norm_squared()));
        }
    }
}

#[test]
fn flat_boundary_trace_on_unit_ball() {
    for (n, k) in [(4, 2), (5, 2), (5, 3), (6, 3)] {
        let (imm, metric, dom) = disk(n, k, "zero");
        let geoms = imm.boundary_geometries(&metric).unwrap();
        for (b, g) in imm.boundary.iter().zip(&geoms) {
            assert!((trace_t_euclid(b, g, &dom).unwrap() + (n - k) as f64).abs() < 1e-12);
        }
    }
}

#[test]
fn conformal_interior_trace() {
    let (imm, metric, _) = disk(4, 2, "zero");
    for f in imm.interior_forms(&metric).unwrap() {
        let t = trace_s_tilde(&f).unwrap();
        assert!(t.value.abs() < 1e-12 && t.identity_residual < 1e-9);
    }
    // K̃ ≡ 1 and ∇^⊥u = 0 on the disk: the trace is −k(n−k) at every sample
    let (imm, metric, _) = disk(4, 2, "radial-spherical");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let q = random_orthogonal::<f64, _>(4, &mut rng);
    let basis: Vec<DVector<f64>> = (0..4).map(|l| q.column(l).into_owned()).collect();
    for f in imm.interior_forms(&metric).unwrap() {
        let t = trace_s_tilde(&f).unwrap();
        assert!((t.value + 4.0).abs() < 1e-10, "{}", t.value);
        assert!(t.identity_residual < 1e-7);
        let r = trace_s_tilde_in(&f, &basis).unwrap();
        assert!((r.value - t.value).abs() < 1e-10);
        assert!((r.identity_residual - t.identity_residual).abs() < 1e-9);
    }
}

#[test]
fn conformal_boundary_traces() {
    let cases = [("zero", 0.0f64, -1.0), ("radial-spherical", 0.0, 0.0), ("radial-custom(0,0.5)", 0.5, -2.0)];
    for (field, u1, factor) in cases {
        for (n, k) in [(4, 2), (5, 3)] {
            let (imm, metric, dom) = disk(n, k, field);
            let geoms = imm.boundary_geometries(&metric).unwrap();
            let expected = (-u1).exp() * factor * (n - k) as f64;
            for (b, g) in imm.boundary.iter().zip(&geoms) {
                let t = trace_t_tilde(b, g, &dom).unwrap();
                assert!((t.value - expected).abs() < 1e-10, "{field}: {} vs {expected}", t.value);
                assert!(t.identity_residual < 1e-12);
            }
        }
    }
}

#[test]
fn interior_bound_values() {
    let (imm, metric, _) = disk(4, 2, "zero");
    let b = interior_bound(&imm, &metric).unwrap();
    assert!(b.lhs.abs() < 1e-10 && b.rhs.abs() < 1e-12 && b.slack.abs() < 1e-10);
    // hemisphere area 2π; ν(u) = −1 and u = 0 on the unit circle
    let (imm, metric, _) = disk(4, 2, "radial-spherical");
    let b = interior_bound(&imm, &metric).unwrap();
    assert!((b.lhs + 8.0 * PI).abs() < 1e-9, "{}", b.lhs);
    assert!((b.rhs + 4.0 * PI).abs() < 1e-12, "{}", b.rhs);
    assert!((b.slack - 4.0 * PI).abs() < 1e-9);
    for (n, k) in [(4, 1), (4, 3)] {
        let (imm, metric, _) =
            if k == 1 { setup("equatorial-disk(4,1)", "zero", "ball(1)", n, k) } else { disk(n, k, "zero") };
        assert!(matches!(interior_bound(&imm, &metric), Err(Error::Dimension(_))));
    }
}

#[test]
fn second_variation_of_coordinate_field() {
    // −k·vol_k(B^k): −2π for k = 2, −4π for k = 3
    for (n, k, expected) in [(4, 2, -2.0 * PI), (5, 3, -4.0 * PI)] {
        let (imm, metric, dom) = disk(n, k, "zero");
        let forms = imm.interior_forms(&metric).unwrap();
        let geoms = imm.boundary_geometries(&metric).unwrap();
        let x = NormalField::projected_constant(&unit(n, k), &forms, &geoms);
        let q = second_variation(&imm, &metric, &dom, &x, ResidualTolerances::default()).unwrap();
        assert!((q.value - expected).abs() < 1e-9, "{}", q.value);
        assert_eq!(q.label, VariationLabel::Stability);
        let zero =
            second_variation(&imm, &metric, &dom, &NormalField::zero(&imm), ResidualTolerances::default()).unwrap();
        assert_eq!(zero.value, 0.0);
    }
}

#[test]
fn second_variation_sums_to_ball_identity() {
    let (imm, metric, dom) = disk(4, 2, "zero");
    let forms = imm.interior_forms(&metric).unwrap();
    let geoms = imm.boundary_geometries(&metric).unwrap();
    let total: f64 = (0..4)
        .map(|l| {
            let x = NormalField::projected_constant(&unit(4, l), &forms, &geoms);
            second_variation(&imm, &metric, &dom, &x, ResidualTolerances::default()).unwrap().value
        })
        .sum();
    assert!((total + 4.0 * PI).abs() < 1e-9);
}

#[test]
fn second_variation_in_conformal_metric_matches_trace() {
    let (imm, metric, dom) = disk(4, 2, "radial-spherical");
    let forms = imm.interior_forms(&metric).unwrap();
    let geoms = imm.boundary_geometries(&metric).unwrap();
    let mut total = 0.0;
    for l in 0..4 {
        let mut x = NormalField::projected_constant(&unit(4, l), &forms, &geoms);
        x.interior = x.interior.iter().zip(&forms).map(|(v, f)| v.rescaled(f)).collect();
        x.boundary = x.boundary.iter().zip(&geoms).map(|(v, g)| v * (-g.jet.value).exp()).collect();
        total += second_variation(&imm, &metric, &dom, &x, ResidualTolerances::default()).unwrap().value;
    }
    assert!((total + 8.0 * PI).abs() < 1e-8, "{total}");
}

#[test]
fn non_minimal_immersion_is_labelled() {
    for spec in ["tilted-disk(80)", "paraboloid-cap(1,0.5)"] {
        let (imm, metric, dom) = setup(spec, "zero", "ball(1)", 3, 2);
        let forms = imm.interior_forms(&metric).unwrap();
        let geoms = imm.boundary_geometries(&metric).unwrap();
        let x = NormalField::projected_constant(&unit(3, 2), &forms, &geoms);
        let q = second_variation(&imm, &metric, &dom, &x, ResidualTolerances::default()).unwrap();
        assert_eq!(q.label, VariationLabel::QFormOnly, "{spec}");
        assert!(q.value.is_finite());
    }
}

#[test]
fn certificate_on_spherical_cap_disk() {
    let (imm, metric, dom) = disk(4, 2, "radial-spherical");
    let report = instability_certificate(&imm, &metric, &dom, &quick_config(2)).unwrap();
    assert!((report.traced_total + 8.0 * PI).abs() < 1e-4);
    assert_eq!(report.traced_total, report.traced_interior + report.traced_boundary);
    assert_eq!(report.verdict, Verdict::UnstableCertified);
    assert!(report.hypotheses.iter().all(|h| h.pass));
    assert!(report.boundary_trace.max.abs() < 1e-12);
    assert!(report.strict_alternatives.iter().any(|s| s.contains("curvature")));
    assert!(report.traced_total <= report.boundary_bound + 1e-9);
    assert!(report.boundary_bound <= report.convexity_bound + 1e-9 || report.convexity_bound <= 0.0);
}

#[test]
fn certificate_on_flat_ball() {
    let (imm, metric, dom) = disk(4, 2, "zero");
    let report = instability_certificate(&imm, &metric, &dom, &quick_config(2)).unwrap();
    assert!((report.traced_total + 4.0 * PI).abs() < 1e-9);
    assert_eq!(report.verdict, Verdict::UnstableCertified);
}

#[test]
fn certificate_gated_by_curvature() {
    let (imm, metric, dom) = setup("equatorial-disk(4,2,0.5)", "radial-hyperbolic", "ball(0.5)", 4, 2);
    let report = instability_certificate(&imm, &metric, &dom, &quick_config(2)).unwrap();
    assert_eq!(report.verdict, Verdict::Inconclusive);
    let curv = report.hypotheses.iter().find(|h| h.name.contains("curvature")).unwrap();
    assert!(!curv.pass);
    assert!((curv.value + 1.0).abs() < 1e-8);
}

#[test]
fn certificate_dimension_gate() {
    let (imm, metric, dom) = disk(4, 3, "zero");
    assert!(matches!(instability_certificate(&imm, &metric, &dom, &quick_config(1)), Err(Error::Dimension(_))));
    let (imm, metric, dom) = disk(5, 3, "zero");
    assert!(matches!(instability_certificate(&imm, &metric, &dom, &quick_config(3)), Err(Error::Dimension(_))));
    assert!(instability_certificate(&imm, &metric, &dom, &quick_config(2)).is_ok());
}

#[test]
fn curvature_sampler_is_reproducible() {
    let dom = LevelSetDomain::<f64>::ball(3, 1.0).unwrap();
    let metric = ConformalMetric::new(ScalarField::new(crate::conformal::FieldKind::RadialSpherical), 3);
    let s = CurvatureSampler { points: 200, planes: 3, seed: 9 };
    let a = sample_sectional_curvature(&dom, &metric, &s).unwrap();
    let b = sample_sectional_curvature(&dom, &metric, &s).unwrap();
    assert_eq!(a, b);
    assert!((a.min - 1.0).abs() < 1e-9 && (a.max - 1.0).abs() < 1e-9);
}
