//! Quadratic operators S, T, Q in the flat and conformal metrics, traces over
//! projected constant fields, and the instability certificate.
//!
//! Throughout, `X̃ = e^{−u}X` denotes the g̃-rescaling of a normal field and
//! `Ẽ_ℓ = e^{−u}E_ℓ` the rescaled constant fields.

use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{ConformalMetric, FieldJet};
use crate::domain::{p_convexity_margin, BoundarySampler, LevelSetDomain};
use crate::error::{Error, Result};
use crate::linalg::{random_unit, unit};
use crate::quadrature::ordered_sum;
use crate::scalar::Real;
use crate::submanifold::{
    check_free_boundary, check_minimality, BoundaryGeometry, BoundarySample, FundamentalForms, ResidualReport,
    SampledImmersion,
};

/// Tangency to ∂Ω required of the boundary values of a normal field.
pub const TANGENCY_TOL: f64 = 1e-8;

/// A normal vector at an interior sample with its normal covariant derivatives
/// `∇^⊥_{v_i} X` (as n-vectors in N_xΣ) along the tangent frame.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalVector<T: Real> {
    pub value: DVector<T>,
    pub derivatives: Vec<DVector<T>>,
}

impl<T: Real> NormalVector<T> {
    pub fn zero(n: usize, k: usize) -> Self {
        Self { value: DVector::zeros(n), derivatives: vec![DVector::zeros(n); k] }
    }

    pub fn scaled(&self, c: T) -> Self {
        Self { value: &self.value * c, derivatives: self.derivatives.iter().map(|d| d * c).collect() }
    }

    /// `e^{−u} X`, with `∇^⊥_v(e^{−u}X) = e^{−u}(∇^⊥_v X − v(u) X)`.
    pub fn rescaled(&self, forms: &FundamentalForms<T>) -> Self {
        let s = (-forms.jet.value).exp();
        let derivatives = self
            .derivatives
            .iter()
            .zip(&forms.frame.tangent)
            .map(|(d, v)| (d - &self.value * forms.jet.d(v)) * s)
            .collect();
        Self { value: &self.value * s, derivatives }
    }

    /// Largest tangential component of the value.
    pub fn normality_defect(&self, forms: &FundamentalForms<T>) -> T {
        forms.frame.tangent.iter().fold(T::zero(), |m, v| m.max(v.dot(&self.value).abs()))
    }
}

/// Values of a normal field on every sample of an immersion.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalField<T: Real> {
    pub interior: Vec<NormalVector<T>>,
    pub boundary: Vec<DVector<T>>,
}

/// `E^⊥ = E − Σ<E, v_i> v_i` with `∇^⊥_{v_i} E^⊥ = −α(v_i, E^⊤)`.
pub fn projected_constant_field<T: Real>(e: &DVector<T>, forms: &FundamentalForms<T>) -> NormalVector<T> {
    let tangent = forms.frame.tangent_part(e);
    let value = e - &tangent;
    let derivatives = (0..forms.k()).map(|i| -forms.alpha_with(i, &tangent)).collect();
    NormalVector { value, derivatives }
}

/// Boundary value of `E^⊥`.
pub fn projected_constant_boundary<T: Real>(e: &DVector<T>, geom: &BoundaryGeometry<T>) -> DVector<T> {
    geom.frame.perp(e)
}

impl<T: Real> NormalField<T> {
    /// The field `E^⊥` on every sample.
    pub fn projected_constant(e: &DVector<T>, forms: &[FundamentalForms<T>], boundary: &[BoundaryGeometry<T>]) -> Self {
        Self {
            interior: forms.iter().map(|f| projected_constant_field(e, f)).collect(),
            boundary: boundary.iter().map(|g| projected_constant_boundary(e, g)).collect(),
        }
    }

    pub fn zero(imm: &SampledImmersion<T>) -> Self {
        Self {
            interior: vec![NormalVector::zero(imm.n, imm.k); imm.interior.len()],
            boundary: vec![DVector::zeros(imm.n); imm.boundary.len()],
        }
    }
}

pub fn canonical_basis<T: Real>(n: usize) -> Vec<DVector<T>> {
    (0..n).map(|l| unit(n, l)).collect()
}

fn alpha_pairing_squared<T: Real>(forms: &FundamentalForms<T>, x: &DVector<T>) -> T {
    forms.alpha.iter().fold(T::zero(), |acc, a| {
        let p = a.dot(x);
        acc + p * p
    })
}

fn derivative_norm_squared<T: Real>(x: &NormalVector<T>) -> T {
    x.derivatives.iter().fold(T::zero(), |acc, d| acc + d.norm_squared())
}

/// `S_g(X,X) = |∇^⊥X|² − Σ_ij <α(v_i,v_j), X>²` (flat ambient curvature).
pub fn s_euclid<T: Real>(forms: &FundamentalForms<T>, x: &NormalVector<T>) -> Result<T> {
    if x.derivatives.len() != forms.k() {
        return Err(Error::InvalidSample(format!(
            "normal field carries {} derivatives, expected {}",
            x.derivatives.len(),
            forms.k()
        )));
    }
    Ok(derivative_norm_squared(x) - alpha_pairing_squared(forms, &x.value))
}

/// `div_Σ ∇u = Σ_i ∇²u(v_i, v_i)`.
pub fn tangential_divergence<T: Real>(forms: &FundamentalForms<T>) -> T {
    forms.frame.tangent.iter().fold(T::zero(), |acc, v| acc + forms.jet.hess_form(v, v))
}

/// `(∇^⊤u)(|X|²) = 2 Σ_i v_i(u) <∇^⊥_{v_i} X, X>`.
fn tangential_derivative_of_norm<T: Real>(forms: &FundamentalForms<T>, x: &NormalVector<T>) -> T {
    forms
        .frame
        .tangent
        .iter()
        .zip(&x.derivatives)
        .fold(T::zero(), |acc, (v, d)| acc + T::lit(2.0) * forms.jet.d(v) * d.dot(&x.value))
}

fn conformal_terms<T: Real>(forms: &FundamentalForms<T>, x: &NormalVector<T>) -> T {
    let k = T::lit(forms.k() as f64);
    let x2 = x.value.norm_squared();
    x2 * tangential_divergence(forms)
        + k * x2 * forms.jet.grad.norm_squared()
        + k * forms.jet.hess_form(&x.value, &x.value)
}

/// `S_g̃(X, X)` for a g̃-minimal Σ:
/// `S_g + (∇^⊤u)(|X|²) + |X|² div_Σ∇u + k|X|²|∇u|² + k∇²u(X,X)`.
pub fn s_tilde_lemma<T: Real>(forms: &FundamentalForms<T>, x: &NormalVector<T>) -> Result<T> {
    Ok(s_euclid(forms, x)? + tangential_derivative_of_norm(forms, x) + conformal_terms(forms, x))
}

/// `e^{2u} S_g̃(X̃, X̃)` for `X̃ = e^{−u}X`, Σ g̃-minimal:
/// `S_g − |X|²|∇^⊤u|² + |X|² div_Σ∇u + k|X|²|∇u|² + k∇²u(X,X)`.
pub fn s_tilde_lemma_rescaled<T: Real>(forms: &FundamentalForms<T>, x: &NormalVector<T>) -> Result<T> {
    let grad_t = forms.grad_u_tangent();
    Ok(s_euclid(forms, x)? - x.value.norm_squared() * grad_t.norm_squared() + conformal_terms(forms, x))
}

/// `S_g̃(X, X)` assembled directly from g̃ data: the normal connection
/// `∇̃^⊥_{ṽ}X = e^{−u}(∇^⊥_v X + v(u)X)`, the curvature operator of g̃ and
/// `α̃ = α + (connection correction)^⊥`, all against g̃-orthonormal `ṽ_i = e^{−u}v_i`.
/// Valid without minimality.
pub fn s_direct<T: Real>(forms: &FundamentalForms<T>, metric_jet: &FieldJet<T>, x: &NormalVector<T>) -> Result<T> {
    let k = forms.k();
    if x.derivatives.len() != k {
        return Err(Error::InvalidSample("normal field derivative count mismatch".into()));
    }
    let u = metric_jet.value;
    let e_mu = (-u).exp();
    let g = |a: &DVector<T>, b: &DVector<T>| (T::lit(2.0) * u).exp() * a.dot(b);
    let tilde: Vec<DVector<T>> = forms.frame.tangent.iter().map(|v| v * e_mu).collect();
    let mut conn = T::zero();
    let mut curv = T::zero();
    for i in 0..k {
        let v = &forms.frame.tangent[i];
        let d = (&x.derivatives[i] + &x.value * metric_jet.d(v)) * e_mu;
        conn += g(&d, &d);
        curv += g(&metric_jet.riemann(&x.value, &tilde[i], &x.value), &tilde[i]);
    }
    let mut second = T::zero();
    for i in 0..k {
        for j in 0..k {
            let (a, b) = (&forms.frame.tangent[i], &forms.frame.tangent[j]);
            let corr = forms.frame.normal_part(&metric_jet.connection_correction(a, b));
            // α̃(ṽ_i, ṽ_j) = e^{−2u} α̃(v_i, v_j)
            let at = (forms.alpha(i, j) + corr) * (e_mu * e_mu);
            let p = g(&at, &x.value);
            second += p * p;
        }
    }
    Ok(conn - curv - second)
}

fn check_tangent_to_boundary<T: Real>(
    b: &BoundarySample<T>,
    x: &DVector<T>,
    domain: &LevelSetDomain<T>,
) -> Result<DVector<T>> {
    let eta = domain.inward_normal(&b.point)?;
    let off = x.dot(&eta).abs();
    if off > T::lit(TANGENCY_TOL) * (T::one() + x.norm()) {
        return Err(Error::Precondition(format!(
            "normal field not tangent to ∂Ω at boundary sample: |<X, η>| = {off}"
        )));
    }
    Ok(eta)
}

/// `T_g(X,X) = <α_∂Ω(X,X), ν>` for X tangent to ∂Ω.
pub fn t_euclid<T: Real>(b: &BoundarySample<T>, x: &DVector<T>, domain: &LevelSetDomain<T>) -> Result<T> {
    let eta = check_tangent_to_boundary(b, x, domain)?;
    Ok(domain.second_fundamental_pairing(&b.point, x, x)? * eta.dot(&b.conormal))
}

/// `T_g` evaluated on the T∂Ω-component of X; used when tangency fails.
pub fn t_euclid_projected<T: Real>(b: &BoundarySample<T>, x: &DVector<T>, domain: &LevelSetDomain<T>) -> Result<T> {
    let eta = domain.inward_normal(&b.point)?;
    let xt = x - &eta * eta.dot(x);
    Ok(domain.second_fundamental_pairing(&b.point, &xt, &xt)? * eta.dot(&b.conormal))
}

/// `T_g̃(X̃, X̃) = e^{−u}(T_g(X,X) − |X|² ν(u))` for `X̃ = e^{−u}X`.
pub fn t_tilde_lemma<T: Real>(
    b: &BoundarySample<T>,
    x: &DVector<T>,
    jet: &FieldJet<T>,
    domain: &LevelSetDomain<T>,
) -> Result<T> {
    let tg = t_euclid(b, x, domain)?;
    Ok((-jet.value).exp() * (tg - x.norm_squared() * jet.d(&b.conormal)))
}

/// `g̃(∇̃_{X̃} X̃, ν̃)` with `∇̃ = ∇ + (connection correction)` and `ν̃ = e^{−u}ν`.
pub fn t_direct<T: Real>(
    b: &BoundarySample<T>,
    x: &DVector<T>,
    jet: &FieldJet<T>,
    domain: &LevelSetDomain<T>,
) -> Result<T> {
    check_tangent_to_boundary(b, x, domain)?;
    t_direct_unchecked(b, x, jet, domain)
}

fn t_direct_unchecked<T: Real>(
    b: &BoundarySample<T>,
    x: &DVector<T>,
    jet: &FieldJet<T>,
    domain: &LevelSetDomain<T>,
) -> Result<T> {
    let e_mu = (-jet.value).exp();
    let xt = x * e_mu;
    // the derivative of the scale factor is along X̃ and drops against ν
    let flat = domain.second_fundamental_form(&b.point, &xt, &xt)?;
    let accel = flat + jet.connection_correction(&xt, &xt);
    Ok((T::lit(2.0) * jet.value).exp() * accel.dot(&(&b.conormal * e_mu)))
}

/// `Σ_ℓ S_g(E_ℓ^⊥, E_ℓ^⊥)` over the given orthonormal basis.
pub fn trace_s_euclid_in<T: Real>(forms: &FundamentalForms<T>, basis: &[DVector<T>]) -> Result<T> {
    let vals: Vec<T> =
        basis.iter().map(|e| s_euclid(forms, &projected_constant_field(e, forms))).collect::<Result<_>>()?;
    Ok(ordered_sum(&vals))
}

pub fn trace_s_euclid<T: Real>(forms: &FundamentalForms<T>) -> Result<T> {
    trace_s_euclid_in(forms, &canonical_basis(forms.frame.n()))
}

pub fn trace_t_euclid_in<T: Real>(
    b: &BoundarySample<T>,
    geom: &BoundaryGeometry<T>,
    domain: &LevelSetDomain<T>,
    basis: &[DVector<T>],
) -> Result<T> {
    let vals: Vec<T> =
        basis.iter().map(|e| t_euclid(b, &projected_constant_boundary(e, geom), domain)).collect::<Result<_>>()?;
    Ok(ordered_sum(&vals))
}

pub fn trace_t_euclid<T: Real>(
    b: &BoundarySample<T>,
    geom: &BoundaryGeometry<T>,
    domain: &LevelSetDomain<T>,
) -> Result<T> {
    trace_t_euclid_in(b, geom, domain, &canonical_basis(geom.frame.n()))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceValue<T> {
    pub value: T,
    pub identity_residual: T,
}

/// `K̃(TΣ, NΣ) = Σ_{i,r} K̃(v_i, n_r)`.
pub fn mixed_curvature<T: Real>(forms: &FundamentalForms<T>) -> T {
    let mut acc = T::zero();
    for v in &forms.frame.tangent {
        for nr in &forms.frame.normal {
            acc += forms.jet.sectional_curvature(v, nr);
        }
    }
    acc
}

/// `Σ_ℓ S_g̃(Ẽ_ℓ^⊥, Ẽ_ℓ^⊥)` and the residual of
/// `e^{2u}·value = k|∇^⊥u|² − e^{2u} K̃(TΣ, NΣ)`.
pub fn trace_s_tilde_in<T: Real>(forms: &FundamentalForms<T>, basis: &[DVector<T>]) -> Result<TraceValue<T>> {
    let vals: Vec<T> = basis
        .iter()
        .map(|e| s_tilde_lemma_rescaled(forms, &projected_constant_field(e, forms)))
        .collect::<Result<_>>()?;
    let e2u = (T::lit(2.0) * forms.jet.value).exp();
    let scaled = ordered_sum(&vals);
    let k = T::lit(forms.k() as f64);
    let expected = k * forms.grad_u_normal().norm_squared() - e2u * mixed_curvature(forms);
    Ok(TraceValue { value: scaled / e2u, identity_residual: (scaled - expected).abs() })
}

pub fn trace_s_tilde<T: Real>(forms: &FundamentalForms<T>) -> Result<TraceValue<T>> {
    trace_s_tilde_in(forms, &canonical_basis(forms.frame.n()))
}

/// `Σ_ℓ T_g̃(Ẽ_ℓ^⊥, Ẽ_ℓ^⊥)` and the residual of
/// `e^u·value = Σ_ℓ <α_∂Ω(E_ℓ^⊥, E_ℓ^⊥), ν> − (n−k) ν(u)`.
pub fn trace_t_tilde_in<T: Real>(
    b: &BoundarySample<T>,
    geom: &BoundaryGeometry<T>,
    domain: &LevelSetDomain<T>,
    basis: &[DVector<T>],
) -> Result<TraceValue<T>> {
    let vals: Vec<T> = basis
        .iter()
        .map(|e| t_tilde_lemma(b, &projected_constant_boundary(e, geom), &geom.jet, domain))
        .collect::<Result<_>>()?;
    let value = ordered_sum(&vals);
    let n_minus_k = T::lit((geom.frame.n() - geom.frame.k()) as f64);
    let expected = trace_t_euclid_in(b, geom, domain, basis)? - n_minus_k * geom.jet.d(&b.conormal);
    Ok(TraceValue { value, identity_residual: (geom.jet.value.exp() * value - expected).abs() })
}

pub fn trace_t_tilde<T: Real>(
    b: &BoundarySample<T>,
    geom: &BoundaryGeometry<T>,
    domain: &LevelSetDomain<T>,
) -> Result<TraceValue<T>> {
    trace_t_tilde_in(b, geom, domain, &canonical_basis(geom.frame.n()))
}

/// Interior and boundary measures of g̃ at each sample.
fn interior_measure<T: Real>(imm: &SampledImmersion<T>, forms: &[FundamentalForms<T>]) -> Vec<T> {
    let k = T::lit(imm.k as f64);
    imm.interior.iter().zip(forms).map(|(s, f)| s.weight * f.jacobian_factor * (k * f.jet.value).exp()).collect()
}

fn boundary_measure<T: Real>(imm: &SampledImmersion<T>, geoms: &[BoundaryGeometry<T>]) -> Vec<T> {
    let k1 = T::lit(imm.k as f64 - 1.0);
    imm.boundary.iter().zip(geoms).map(|(b, g)| b.weight * (k1 * g.jet.value).exp()).collect()
}

fn weighted_sum<T: Real>(values: &[T], weights: &[T]) -> T {
    let terms: Vec<T> = values.iter().zip(weights).map(|(v, w)| *v * *w).collect();
    ordered_sum(&terms)
}

/// Both sides of the integrated bound `Σ_ℓ ∫ S̃ dμ̃ ≤ 2 ∫_∂Σ ν̃(u) dã`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InteriorBound {
    pub lhs: f64,
    pub rhs: f64,
    pub slack: f64,
}

pub fn check_bound_dimensions(n: usize, k: usize) -> Result<()> {
    if k < 2 || k + 2 > n {
        return Err(Error::Dimension(format!(
            "the traced bound needs 2 <= k <= n-2 (it divides by n-k-1); got n = {n}, k = {k}"
        )));
    }
    Ok(())
}

pub fn interior_bound<T: Real>(imm: &SampledImmersion<T>, metric: &ConformalMetric<T>) -> Result<InteriorBound> {
    check_bound_dimensions(imm.n, imm.k)?;
    let forms = imm.interior_forms(metric)?;
    let geoms = imm.boundary_geometries(metric)?;
    interior_bound_from(imm, &forms, &geoms)
}

fn interior_bound_from<T: Real>(
    imm: &SampledImmersion<T>,
    forms: &[FundamentalForms<T>],
    geoms: &[BoundaryGeometry<T>],
) -> Result<InteriorBound> {
    let traces: Vec<T> = forms.par_iter().map(|f| trace_s_tilde(f).map(|t| t.value)).collect::<Result<_>>()?;
    let lhs = weighted_sum(&traces, &interior_measure(imm, forms));
    let nu_tilde: Vec<T> =
        imm.boundary.iter().zip(geoms).map(|(b, g)| (-g.jet.value).exp() * g.jet.d(&b.conormal)).collect();
    let rhs = T::lit(2.0) * weighted_sum(&nu_tilde, &boundary_measure(imm, geoms));
    Ok(InteriorBound { lhs: lhs.as_f64(), rhs: rhs.as_f64(), slack: (rhs - lhs).as_f64() })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VariationLabel {
    /// Σ passed the minimality and free-boundary checks: the value is a second variation.
    Stability,
    /// Only the quadratic form Q is meaningful.
    QFormOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecondVariation {
    pub value: f64,
    pub interior: f64,
    pub boundary: f64,
    pub label: VariationLabel,
}

/// Residual tolerances used to label a quadratic form value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResidualTolerances {
    pub minimality: f64,
    pub free_boundary: f64,
}

impl Default for ResidualTolerances {
    fn default() -> Self {
        Self { minimality: 1e-6, free_boundary: 1e-6 }
    }
}

/// `Q̃(X, X) = ∫ S̃(X,X) dμ̃ + ∫ T̃(X,X) dã` in the metric g̃; the interior
/// term uses the direct g̃ assembly so it is valid without minimality. Where X
/// is not tangent to ∂Ω the boundary term uses its T∂Ω-component and the
/// result is labelled [`VariationLabel::QFormOnly`].
pub fn second_variation<T: Real>(
    imm: &SampledImmersion<T>,
    metric: &ConformalMetric<T>,
    domain: &LevelSetDomain<T>,
    x: &NormalField<T>,
    tol: ResidualTolerances,
) -> Result<SecondVariation> {
    let forms = imm.interior_forms(metric)?;
    let geoms = imm.boundary_geometries(metric)?;
    if x.interior.len() != forms.len() || x.boundary.len() != geoms.len() {
        return Err(Error::InvalidSample("normal field does not match the immersion's samples".into()));
    }
    let s_vals: Vec<T> =
        forms.par_iter().zip(&x.interior).map(|(f, xv)| s_direct(f, &f.jet, xv)).collect::<Result<_>>()?;
    let mut tangent = true;
    let t_vals: Vec<T> = imm
        .boundary
        .iter()
        .zip(geoms.iter().zip(&x.boundary))
        .map(|(b, (g, xv))| {
            // T̃(X, X) = e^{2u} T̃(X̃, X̃)
            let scaled = xv * g.jet.value.exp();
            let t = match check_tangent_to_boundary(b, &scaled, domain) {
                Ok(_) => t_direct_unchecked(b, &scaled, &g.jet, domain)?,
                Err(Error::Precondition(_)) => {
                    tangent = false;
                    let eta = domain.inward_normal(&b.point)?;
                    let proj = &scaled - &eta * eta.dot(&scaled);
                    t_direct_unchecked(b, &proj, &g.jet, domain)?
                }
                Err(e) => return Err(e),
            };
            Ok(t * (T::lit(2.0) * g.jet.value).exp())
        })
        .collect::<Result<_>>()?;
    let interior = weighted_sum(&s_vals, &interior_measure(imm, &forms));
    let boundary = weighted_sum(&t_vals, &boundary_measure(imm, &geoms));
    let minimal = check_minimality(imm, metric, tol.minimality)?.pass;
    let free = check_free_boundary(imm, domain, tol.free_boundary).map(|r| r.pass).unwrap_or(false);
    Ok(SecondVariation {
        value: (interior + boundary).as_f64(),
        interior: interior.as_f64(),
        boundary: boundary.as_f64(),
        label: if minimal && free && tangent { VariationLabel::Stability } else { VariationLabel::QFormOnly },
    })
}

/// Sampling plan for the sectional-curvature sign hypothesis.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CurvatureSampler {
    pub points: usize,
    pub planes: usize,
    pub seed: u64,
}

impl Default for CurvatureSampler {
    fn default() -> Self {
        Self { points: 10_000, planes: 10, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CurvatureSample {
    pub evaluations: usize,
    pub min: f64,
    pub max: f64,
    pub worst_point: Vec<f64>,
}

/// Sectional curvature of g̃ at Sobol points of Ω (bounding box, rejected
/// outside Ω or the field's domain) on random planes.
pub fn sample_sectional_curvature<T: Real>(
    domain: &LevelSetDomain<T>,
    metric: &ConformalMetric<T>,
    sampler: &CurvatureSampler,
) -> Result<CurvatureSample> {
    let n = domain.dim;
    if n < 2 {
        return Err(Error::Dimension("sectional curvature needs n >= 2".into()));
    }
    let r = domain.bounding_radius;
    let mut points = Vec::with_capacity(sampler.points);
    let mut index = 0u32;
    let budget = sampler.points.saturating_mul(64).max(1024) as u32;
    while points.len() < sampler.points && index < budget {
        let x = DVector::from_fn(n, |j, _| {
            r * T::lit(2.0 * crate::quadrature::sobol(index, j as u32, sampler.seed as u32) - 1.0)
        });
        index += 1;
        if domain.contains(&x) && metric.field.contains(&x) {
            points.push(x);
        }
    }
    if points.is_empty() {
        return Err(Error::Empty);
    }
    let per_point: Vec<(T, T)> = points
        .par_iter()
        .enumerate()
        .map(|(i, x)| {
            let mut rng = ChaCha8Rng::seed_from_u64(sampler.seed);
            rng.set_stream(i as u64);
            let jet = metric.jet(x)?;
            let mut lo = T::lit(f64::INFINITY);
            let mut hi = T::lit(f64::NEG_INFINITY);
            for _ in 0..sampler.planes.max(1) {
                let a: DVector<T> = random_unit(n, &mut rng);
                let mut b: DVector<T> = random_unit(n, &mut rng);
                b -= &a * a.dot(&b);
                let nb = b.norm();
                if nb < T::lit(1e-6) {
                    continue;
                }
                let kappa = jet.sectional_curvature(&a, &(b / nb));
                lo = lo.min(kappa);
                hi = hi.max(kappa);
            }
            Ok((lo, hi))
        })
        .collect::<Result<_>>()?;
    let mut worst = 0;
    for (i, (lo, _)) in per_point.iter().enumerate() {
        if *lo < per_point[worst].0 {
            worst = i;
        }
    }
    let max = per_point.iter().fold(f64::NEG_INFINITY, |m, (_, hi)| m.max(hi.as_f64()));
    Ok(CurvatureSample {
        evaluations: points.len() * sampler.planes.max(1),
        min: per_point[worst].0.as_f64(),
        max,
        worst_point: points[worst].iter().map(|v| v.as_f64()).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CertificateConfig {
    pub p: usize,
    /// `traced_total` must be below `−tol` for a certified verdict.
    pub tol: f64,
    pub residuals: ResidualTolerances,
    /// Slack allowed on the sign hypotheses (curvature and convexity).
    pub sign_tol: f64,
    pub curvature: CurvatureSampler,
    pub boundary: BoundarySampler,
}

impl Default for CertificateConfig {
    fn default() -> Self {
        Self {
            p: 2,
            tol: 1e-6,
            residuals: ResidualTolerances::default(),
            sign_tol: 1e-9,
            curvature: CurvatureSampler::default(),
            boundary: BoundarySampler::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    UnstableCertified,
    Inconclusive,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HypothesisCheck {
    pub name: String,
    pub pass: bool,
    pub value: f64,
    pub threshold: f64,
    pub detail: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub min: f64,
    pub max: f64,
    pub mean: f64,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        if values.is_empty() {
            return Self { count: 0, min: 0.0, max: 0.0, mean: 0.0 };
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Self { count: values.len(), min, max, mean: ordered_sum(values) / values.len() as f64 }
    }
}

/// Per-sample values behind a report, kept out of the JSON form.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SampleTraces {
    pub interior_points: Vec<Vec<f64>>,
    pub trace_s_euclid: Vec<f64>,
    pub trace_s_tilde: Vec<f64>,
    pub trace_s_tilde_residual: Vec<f64>,
    pub minimality: Vec<f64>,
    pub boundary_points: Vec<Vec<f64>>,
    pub trace_t_euclid: Vec<f64>,
    pub trace_t_tilde: Vec<f64>,
    pub trace_t_tilde_residual: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StabilityReport {
    pub n: usize,
    pub k: usize,
    pub p: usize,
    /// `Σ_ℓ ∫ S̃(Ẽ_ℓ^⊥, Ẽ_ℓ^⊥) dμ̃`.
    pub traced_interior: f64,
    /// `Σ_ℓ ∫ T̃(Ẽ_ℓ^⊥, Ẽ_ℓ^⊥) dã`.
    pub traced_boundary: f64,
    pub traced_total: f64,
    pub bound: Option<InteriorBound>,
    /// `−(n−k−2)∫ν̃(u)dã + Σ_ℓ∫e^{−u}<α_∂Ω(E_ℓ^⊥,E_ℓ^⊥),ν>dã`, an upper bound for `traced_total`.
    pub boundary_bound: f64,
    /// `2/(n−k) · Σ_ℓ∫e^{−u}<α_∂Ω(E_ℓ^⊥,E_ℓ^⊥),ν>dã`, nonpositive under the convexity hypothesis.
    pub convexity_bound: f64,
    /// Pointwise boundary traces `Σ_ℓ T̃(Ẽ_ℓ^⊥, Ẽ_ℓ^⊥)`, expected `<= 0`.
    pub boundary_trace: Summary,
    pub boundary_trace_residual: Summary,
    pub lemma_residual: Summary,
    pub minimality: ResidualReport,
    pub free_boundary: Option<ResidualReport>,
    pub curvature: CurvatureSample,
    pub margin_g: f64,
    pub margin_g_tilde: f64,
    pub hypotheses: Vec<HypothesisCheck>,
    /// Which strictness alternative holds: positive curvature, strict convexity in g, or in g̃.
    pub strict_alternatives: Vec<String>,
    pub verdict: Verdict,
    pub warnings: Vec<String>,
    #[serde(skip)]
    pub samples: SampleTraces,
}

pub fn check_certificate_dimensions(n: usize, k: usize, p: usize) -> Result<()> {
    let upper = (n as isize - 2).min(n as isize - p as isize);
    if k < 2 || k as isize > upper {
        return Err(Error::Dimension(format!(
            "certificates need 2 <= k <= min(n-2, n-p); got n = {n}, k = {k}, p = {p}"
        )));
    }
    Ok(())
}

/// One sample's trace values; the meaning of each slot depends on the region.
type SampleRow<T> = (T, T, T, T);

/// Per interior sample: (trace S̃, its identity residual, trace S_g, e^u|H̃|).
fn interior_traces<T: Real>(forms: &[FundamentalForms<T>]) -> Result<Vec<SampleRow<T>>> {
    forms
        .par_iter()
        .map(|f| {
            let t = trace_s_tilde(f)?;
            Ok((t.value, t.identity_residual, trace_s_euclid(f)?, f.jet.value.exp() * f.mean_tilde.norm()))
        })
        .collect()
}

/// Per boundary sample: (trace T̃, its identity residual, trace T_g, ν(u)), and whether
/// some E_ℓ^⊥ left T∂Ω so that the T∂Ω projection was used (residual reported as 0).
fn boundary_traces<T: Real>(
    imm: &SampledImmersion<T>,
    geoms: &[BoundaryGeometry<T>],
    domain: &LevelSetDomain<T>,
) -> Result<(Vec<SampleRow<T>>, bool)> {
    let (n, k) = (imm.n, imm.k);
    let basis = canonical_basis::<T>(n);
    let mut tangency_failed = false;
    let boundary = imm
        .boundary
        .iter()
        .zip(geoms)
        .map(|(b, g)| {
            let nu_u = g.jet.d(&b.conormal);
            let n_minus_k = T::lit((n - k) as f64);
            match trace_t_tilde_in(b, g, domain, &basis) {
                Ok(t) => Ok((t.value, t.identity_residual, trace_t_euclid_in(b, g, domain, &basis)?, nu_u)),
                Err(Error::Precondition(_)) => {
                    tangency_failed = true;
                    let flat: Vec<T> = basis
                        .iter()
                        .map(|e| t_euclid_projected(b, &projected_constant_boundary(e, g), domain))
                        .collect::<Result<_>>()?;
                    let tg = ordered_sum(&flat);
                    Ok(((-g.jet.value).exp() * (tg - n_minus_k * nu_u), T::zero(), tg, nu_u))
                }
                Err(e) => Err(e),
            }
        })
        .collect::<Result<_>>()?;
    Ok((boundary, tangency_failed))
}

fn collect_samples<T: Real>(
    imm: &SampledImmersion<T>,
    interior: &[SampleRow<T>],
    boundary: &[SampleRow<T>],
) -> SampleTraces {
    let f = |v: &[SampleRow<T>], pick: fn(&SampleRow<T>) -> T| v.iter().map(|t| pick(t).as_f64()).collect::<Vec<_>>();
    SampleTraces {
        interior_points: imm.interior.iter().map(|s| s.point.iter().map(|v| v.as_f64()).collect()).collect(),
        trace_s_tilde: f(interior, |t| t.0),
        trace_s_tilde_residual: f(interior, |t| t.1),
        trace_s_euclid: f(interior, |t| t.2),
        minimality: f(interior, |t| t.3),
        boundary_points: if boundary.is_empty() {
            Vec::new()
        } else {
            imm.boundary.iter().map(|b| b.point.iter().map(|v| v.as_f64()).collect()).collect()
        },
        trace_t_tilde: f(boundary, |t| t.0),
        trace_t_tilde_residual: f(boundary, |t| t.1),
        trace_t_euclid: f(boundary, |t| t.2),
    }
}

/// Per-sample traces without the certificate's hypotheses; boundary columns
/// are left empty without a domain.
pub fn sample_traces<T: Real>(
    imm: &SampledImmersion<T>,
    metric: &ConformalMetric<T>,
    domain: Option<&LevelSetDomain<T>>,
) -> Result<SampleTraces> {
    let interior = interior_traces(&imm.interior_forms(metric)?)?;
    let boundary = match domain {
        Some(d) => boundary_traces(imm, &imm.boundary_geometries(metric)?, d)?.0,
        None => Vec::new(),
    };
    Ok(collect_samples(imm, &interior, &boundary))
}

/// Traced second variation over `Ẽ_ℓ = e^{−u}E_ℓ` together with every
/// hypothesis needed to turn a negative trace into an instability statement.
pub fn instability_certificate<T: Real>(
    imm: &SampledImmersion<T>,
    metric: &ConformalMetric<T>,
    domain: &LevelSetDomain<T>,
    config: &CertificateConfig,
) -> Result<StabilityReport> {
    let (n, k, p) = (imm.n, imm.k, config.p);
    check_certificate_dimensions(n, k, p)?;
    imm.validate()?;
    if imm.boundary.is_empty() {
        return Err(Error::Precondition("certificates need a non-empty boundary".into()));
    }
    let forms = imm.interior_forms(metric)?;
    let geoms = imm.boundary_geometries(metric)?;
    let mut warnings = Vec::new();
    let mut hypotheses = Vec::new();

    let minimality = check_minimality(imm, metric, config.residuals.minimality)?;
    if !minimality.pass {
        warnings.push(format!(
            "Σ is not minimal in g̃ (max e^u|H̃| = {:e}); interior traces use identities that assume minimality",
            minimality.max_residual
        ));
    }
    hypotheses.push(HypothesisCheck {
        name: "minimal in g̃".into(),
        pass: minimality.pass,
        value: minimality.max_residual,
        threshold: config.residuals.minimality,
        detail: format!("worst interior sample {:?}", minimality.worst_sample),
    });
    let free_boundary = match check_free_boundary(imm, domain, config.residuals.free_boundary) {
        Ok(r) => {
            hypotheses.push(HypothesisCheck {
                name: "free boundary".into(),
                pass: r.pass,
                value: r.max_residual,
                threshold: config.residuals.free_boundary,
                detail: format!("worst boundary sample {:?}", r.worst_sample),
            });
            Some(r)
        }
        Err(e) => {
            hypotheses.push(HypothesisCheck {
                name: "free boundary".into(),
                pass: false,
                value: f64::INFINITY,
                threshold: config.residuals.free_boundary,
                detail: e.to_string(),
            });
            None
        }
    };

    let curvature = sample_sectional_curvature(domain, metric, &config.curvature)?;
    hypotheses.push(HypothesisCheck {
        name: "sectional curvature of g̃ >= 0".into(),
        pass: curvature.min >= -config.sign_tol,
        value: curvature.min,
        threshold: -config.sign_tol,
        detail: format!("{} sampled planes, worst at {:?}", curvature.evaluations, curvature.worst_point),
    });
    let convexity = p_convexity_margin(domain, metric, p, &config.boundary)?;
    hypotheses.push(HypothesisCheck {
        name: format!("{p}-convex in g"),
        pass: convexity.margin_g >= -config.sign_tol,
        value: convexity.margin_g,
        threshold: -config.sign_tol,
        detail: format!("worst at {:?}", convexity.worst_point),
    });
    hypotheses.push(HypothesisCheck {
        name: format!("{p}-convex in g̃"),
        pass: convexity.margin_g_tilde >= -config.sign_tol,
        value: convexity.margin_g_tilde,
        threshold: -config.sign_tol,
        detail: format!("worst at {:?}", convexity.worst_point_tilde),
    });
    let mut strict_alternatives = Vec::new();
    if curvature.min > config.sign_tol {
        strict_alternatives.push("positive sectional curvature of g̃".to_string());
    }
    if convexity.margin_g > config.sign_tol {
        strict_alternatives.push(format!("strictly {p}-convex in g"));
    }
    if convexity.margin_g_tilde > config.sign_tol {
        strict_alternatives.push(format!("strictly {p}-convex in g̃"));
    }

    let interior = interior_traces(&forms)?;
    let (boundary, tangency_failed) = boundary_traces(imm, &geoms, domain)?;
    if tangency_failed {
        warnings.push("E_ℓ^⊥ not tangent to ∂Ω at some boundary samples; T used the tangential projection".into());
    }

    let mu = interior_measure(imm, &forms);
    let da = boundary_measure(imm, &geoms);
    let s_tilde: Vec<T> = interior.iter().map(|t| t.0).collect();
    let t_tilde: Vec<T> = boundary.iter().map(|t| t.0).collect();
    let traced_interior = weighted_sum(&s_tilde, &mu);
    let traced_boundary = weighted_sum(&t_tilde, &da);
    let traced_total = traced_interior + traced_boundary;

    let nu_tilde: Vec<T> = boundary.iter().zip(&geoms).map(|(t, g)| (-g.jet.value).exp() * t.3).collect();
    let nu_int = weighted_sum(&nu_tilde, &da);
    let alpha_term: Vec<T> = boundary.iter().zip(&geoms).map(|(t, g)| (-g.jet.value).exp() * t.2).collect();
    let alpha_int = weighted_sum(&alpha_term, &da);
    let boundary_bound = -T::lit(n as f64 - k as f64 - 2.0) * nu_int + alpha_int;
    let convexity_bound = T::lit(2.0 / (n - k) as f64) * alpha_int;
    let bound = if k + 2 <= n {
        let lhs = traced_interior;
        let rhs = T::lit(2.0) * nu_int;
        Some(InteriorBound { lhs: lhs.as_f64(), rhs: rhs.as_f64(), slack: (rhs - lhs).as_f64() })
    } else {
        None
    };
    if curvature.min < -config.sign_tol {
        warnings.push("curvature hypothesis unverified: the traced bound need not hold".into());
    }

    let hyp_ok = hypotheses.iter().all(|h| h.pass);
    let verdict =
        if traced_total.as_f64() < -config.tol && hyp_ok { Verdict::UnstableCertified } else { Verdict::Inconclusive };
    let samples = collect_samples(imm, &interior, &boundary);
    Ok(StabilityReport {
        n,
        k,
        p,
        traced_interior: traced_interior.as_f64(),
        traced_boundary: traced_boundary.as_f64(),
        traced_total: traced_total.as_f64(),
        bound,
        boundary_bound: boundary_bound.as_f64(),
        convexity_bound: convexity_bound.as_f64(),
        boundary_trace: Summary::of(&samples.trace_t_tilde),
        boundary_trace_residual: Summary::of(&samples.trace_t_tilde_residual),
        lemma_residual: Summary::of(&samples.trace_s_tilde_residual),
        minimality,
        free_boundary,
        curvature,
        margin_g: convexity.margin_g,
        margin_g_tilde: convexity.margin_g_tilde,
        hypotheses,
        strict_alternatives,
        verdict,
        warnings,
        samples,
    })
}

#[cfg(test)]
mod tests;
