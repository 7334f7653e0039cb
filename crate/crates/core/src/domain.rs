//! Level-set domains `Ω = {φ < 0}`: boundary projection, normals, shape
//! operators in the flat and conformal metrics, and p-convexity margins.
//!
//! Sign convention: principal curvatures are taken with respect to the inward
//! normal `η = −∇φ/|∇φ|`, so the unit sphere has every principal curvature `+1`.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::conformal::{ConformalMetric, FieldKind, ScalarField};
use crate::error::{Error, Result};
use crate::linalg::{complete_basis, symmetric_eigenvalues};
use crate::poly::{Monomial, Polynomial};
use crate::scalar::Real;

pub const MIN_GRADIENT: f64 = 1e-6;
pub const PROJECTION_MAX_ITER: usize = 50;
pub const PROJECTION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelSetDomain<T> {
    pub phi: ScalarField<T>,
    pub dim: usize,
    pub bounding_radius: T,
    pub label: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MetricKind {
    Euclidean,
    Conformal,
}

/// Shape operator of ∂Ω at a point, in an orthonormal basis of T∂Ω
/// (orthonormal for the metric it was computed in, Euclid-orthonormal `basis`).
#[derive(Debug, Clone)]
pub struct ShapeOperator<T: Real> {
    pub basis: Vec<DVector<T>>,
    pub matrix: DMatrix<T>,
    pub metric: MetricKind,
}

impl<T: Real> ShapeOperator<T> {
    pub fn principal_curvatures(&self) -> Vec<T> {
        symmetric_eigenvalues(&self.matrix)
    }

    /// Sum of the `p` smallest principal curvatures.
    pub fn lowest_sum(&self, p: usize) -> T {
        self.principal_curvatures().into_iter().take(p).fold(T::zero(), |a, b| a + b)
    }
}

fn power_sum<T: Real>(dim: usize, coefs: &[T], exponent: u32, offset: T) -> Polynomial<T> {
    let mut terms: Vec<Monomial<T>> = (0..dim)
        .map(|i| {
            let mut powers = vec![0; dim];
            powers[i] = exponent;
            Monomial { coef: coefs[i], powers }
        })
        .collect();
    terms.push(Monomial { coef: offset, powers: vec![0; dim] });
    Polynomial::new(terms)
}

impl<T: Real> LevelSetDomain<T> {
    pub fn from_polynomial(
        phi: Polynomial<T>,
        dim: usize,
        bounding_radius: T,
        label: impl Into<String>,
    ) -> Result<Self> {
        phi.check_arity(dim)?;
        Ok(Self { phi: ScalarField::new(FieldKind::Polynomial(phi)), dim, bounding_radius, label: label.into() })
    }

    /// `|x|² − r² < 0`.
    pub fn ball(dim: usize, radius: T) -> Result<Self> {
        if radius <= T::zero() {
            return Err(Error::Config("ball radius must be positive".into()));
        }
        let phi = power_sum(dim, &vec![T::one(); dim], 2, -radius * radius);
        Self::from_polynomial(phi, dim, radius, format!("ball({radius})"))
    }

    /// `Σ x_i²/a_i² − 1 < 0`.
    pub fn ellipsoid(axes: &[T]) -> Result<Self> {
        if axes.iter().any(|a| *a <= T::zero()) || axes.len() < 2 {
            return Err(Error::Config("ellipsoid needs at least two positive semi-axes".into()));
        }
        let coefs: Vec<T> = axes.iter().map(|a| T::one() / (*a * *a)).collect();
        let phi = power_sum(axes.len(), &coefs, 2, -T::one());
        let r = axes.iter().copied().fold(T::zero(), |a, b| if b > a { b } else { a });
        let label = format!("ellipsoid({})", axes.iter().map(|a| a.to_string()).collect::<Vec<_>>().join(","));
        Self::from_polynomial(phi, axes.len(), r, label)
    }

    /// `Σ x_i^m − 1 < 0` for an even integer exponent `m >= 2`.
    pub fn superellipsoid(dim: usize, exponent: u32) -> Result<Self> {
        if exponent < 2 || !exponent.is_multiple_of(2) {
            return Err(Error::Config(format!("superellipsoid exponent must be an even integer >= 2, got {exponent}")));
        }
        let phi = power_sum(dim, &vec![T::one(); dim], exponent, -T::one());
        // max |x| on the surface is attained on the diagonal
        let r = T::lit((dim as f64).powf(0.5 - 1.0 / exponent as f64));
        Self::from_polynomial(phi, dim, r, format!("superellipsoid({exponent})"))
    }

    pub fn level(&self, x: &DVector<T>) -> T {
        self.phi.value(x)
    }

    pub fn contains(&self, x: &DVector<T>) -> bool {
        self.level(x) < T::zero()
    }

    /// Newton iteration along ∇φ until `|φ| <= 1e-12`.
    pub fn project_to_boundary(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let tol = T::tol(PROJECTION_TOL, 16.0);
        let mut y = x.clone();
        for _ in 0..=PROJECTION_MAX_ITER {
            let f = self.level(&y);
            if f.abs() <= tol {
                return Ok(y);
            }
            let g = self.phi.gradient(&y);
            let g2 = g.norm_squared();
            if g2 < T::lit(MIN_GRADIENT * MIN_GRADIENT) {
                break;
            }
            y.axpy(-f / g2, &g, T::one());
        }
        Err(Error::Projection { iterations: PROJECTION_MAX_ITER, residual: self.level(&y).abs().as_f64() })
    }

    /// `η = −∇φ/|∇φ|`.
    pub fn inward_normal(&self, x: &DVector<T>) -> Result<DVector<T>> {
        let g = self.phi.gradient(x);
        let norm = g.norm();
        if norm < T::lit(MIN_GRADIENT) {
            return Err(Error::Precondition(format!("|∇φ| = {norm} below {MIN_GRADIENT}")));
        }
        Ok(-g / norm)
    }

    /// Euclid-orthonormal basis of T_x∂Ω.
    pub fn tangent_basis(&self, x: &DVector<T>) -> Result<Vec<DVector<T>>> {
        let eta = self.inward_normal(x)?;
        Ok(complete_basis(&[eta], self.dim))
    }

    /// `<α_∂Ω(X,Y), η> = ∇²φ(X,Y)/|∇φ|` (flat metric).
    pub fn second_fundamental_pairing(&self, x: &DVector<T>, a: &DVector<T>, b: &DVector<T>) -> Result<T> {
        let g = self.phi.gradient(x);
        let norm = g.norm();
        if norm < T::lit(MIN_GRADIENT) {
            return Err(Error::Precondition(format!("|∇φ| = {norm} below {MIN_GRADIENT}")));
        }
        Ok((self.phi.hessian(x) * b).dot(a) / norm)
    }

    /// The vector `α_∂Ω(X,Y)` (flat metric), a multiple of η.
    pub fn second_fundamental_form(&self, x: &DVector<T>, a: &DVector<T>, b: &DVector<T>) -> Result<DVector<T>> {
        Ok(self.inward_normal(x)? * self.second_fundamental_pairing(x, a, b)?)
    }

    /// Shape operator in the flat metric or in `g̃ = e^{2u} g`.
    ///
    /// In `g̃` the second fundamental form becomes `α − <·,·>∇^⊥u` and the unit
    /// normal `e^{−u}η`, so in a g̃-orthonormal basis the matrix is
    /// `e^{−u}(A − η(u) I)`.
    pub fn shape_operator(
        &self,
        x: &DVector<T>,
        metric: &ConformalMetric<T>,
        kind: MetricKind,
    ) -> Result<ShapeOperator<T>> {
        let basis = self.tangent_basis(x)?;
        let m = basis.len();
        let hess = self.phi.hessian(x);
        let gnorm = self.phi.gradient(x).norm();
        let mut matrix = DMatrix::from_fn(m, m, |i, j| (&hess * &basis[j]).dot(&basis[i]) / gnorm);
        matrix = (&matrix + matrix.transpose()) * T::lit(0.5);
        if kind == MetricKind::Conformal {
            let jet = metric.jet(x)?;
            let eta = self.inward_normal(x)?;
            let eta_u = jet.d(&eta);
            for i in 0..m {
                matrix[(i, i)] -= eta_u;
            }
            matrix *= (-jet.value).exp();
        }
        Ok(ShapeOperator { basis, matrix, metric: kind })
    }

    /// Finds the boundary point on the ray from the origin in direction `d`.
    fn radial_boundary_point(&self, d: &DVector<T>) -> Result<DVector<T>> {
        let origin = DVector::zeros(self.dim);
        if self.level(&origin) >= T::zero() {
            return Err(Error::Precondition("radial sampling needs the origin inside the domain".into()));
        }
        let mut hi = self.bounding_radius * T::lit(1.01);
        let mut grow = 0;
        while self.level(&(d * hi)) <= T::zero() {
            hi *= T::lit(2.0);
            grow += 1;
            if grow > 60 {
                return Err(Error::Config("domain is not bounded along a sample ray".into()));
            }
        }
        let mut lo = T::zero();
        for _ in 0..80 {
            let mid = (lo + hi) * T::lit(0.5);
            if self.level(&(d * mid)) < T::zero() {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        self.project_to_boundary(&(d * ((lo + hi) * T::lit(0.5))))
    }

    /// Quasi-random boundary points: Sobol directions mapped radially onto ∂Ω,
    /// then polished by `project_to_boundary`.
    pub fn sample_boundary(&self, sampler: &BoundarySampler) -> Result<Vec<DVector<T>>> {
        let mut out = Vec::with_capacity(sampler.count);
        let mut index = 0u32;
        while out.len() < sampler.count {
            let d = DVector::from_fn(self.dim, |j, _| {
                T::lit(2.0 * crate::quadrature::sobol(index, j as u32, sampler.seed) - 1.0)
            });
            index += 1;
            let norm = d.norm();
            if norm < T::lit(1e-3) {
                continue;
            }
            out.push(self.radial_boundary_point(&(d / norm))?);
        }
        Ok(out)
    }

    /// Checks `|∇φ| >= 1e-6` on sampled boundary points and on both sides of
    /// ∂Ω inside the tube `|φ| <= 1e-2`. Returns the smallest gradient norm seen.
    pub fn check_regularity(&self, sampler: &BoundarySampler) -> Result<T> {
        let mut worst: Option<T> = None;
        for x in self.sample_boundary(sampler)? {
            let g = self.phi.gradient(&x).norm();
            let step = T::lit(5e-3) / g;
            for s in [-T::one(), T::zero(), T::one()] {
                let y = &x + self.phi.gradient(&x) * (s * step / g);
                let gy = self.phi.gradient(&y).norm();
                worst = Some(worst.map_or(gy, |w| if gy < w { gy } else { w }));
            }
        }
        let worst = worst.ok_or(Error::Empty)?;
        if worst < T::lit(MIN_GRADIENT) {
            return Err(Error::Precondition(format!("|∇φ| = {worst} near the boundary")));
        }
        Ok(worst)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundarySampler {
    pub count: usize,
    pub seed: u32,
}

impl Default for BoundarySampler {
    fn default() -> Self {
        Self { count: 1024, seed: 0 }
    }
}

/// Result of a sampled p-convexity sweep. Sampling only bounds the true
/// minimum from above; `margin_*` are the minima over the samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexityReport {
    pub p: usize,
    pub samples: usize,
    pub margin_g: f64,
    pub margin_g_tilde: f64,
    pub worst_point: Vec<f64>,
    pub worst_point_tilde: Vec<f64>,
    /// Range of `ν(u) = <∇u, −η>` (derivative of u in the exterior direction).
    pub nu_u_range: (f64, f64),
    pub strict_g: bool,
    pub strict_g_tilde: bool,
}

/// Sum of the `p` lowest principal curvatures, minimised over sampled boundary points.
pub fn p_convexity_margin<T: Real>(
    domain: &LevelSetDomain<T>,
    metric: &ConformalMetric<T>,
    p: usize,
    sampler: &BoundarySampler,
) -> Result<ConvexityReport> {
    if p == 0 || p + 1 > domain.dim {
        return Err(Error::Dimension(format!("p = {p} outside [1, {}]", domain.dim - 1)));
    }
    let points = domain.sample_boundary(sampler)?;
    let mut margin_g: Option<(T, &DVector<T>)> = None;
    let mut margin_t: Option<(T, &DVector<T>)> = None;
    let mut nu_min = f64::INFINITY;
    let mut nu_max = f64::NEG_INFINITY;
    for x in &points {
        let sg = domain.shape_operator(x, metric, MetricKind::Euclidean)?.lowest_sum(p);
        let st = domain.shape_operator(x, metric, MetricKind::Conformal)?.lowest_sum(p);
        if margin_g.is_none_or(|(m, _)| sg < m) {
            margin_g = Some((sg, x));
        }
        if margin_t.is_none_or(|(m, _)| st < m) {
            margin_t = Some((st, x));
        }
        let eta = domain.inward_normal(x)?;
        let nu = -metric.jet(x)?.d(&eta).as_f64();
        nu_min = nu_min.min(nu);
        nu_max = nu_max.max(nu);
    }
    let (mg, pg) = margin_g.ok_or(Error::Empty)?;
    let (mt, pt) = margin_t.ok_or(Error::Empty)?;
    Ok(ConvexityReport {
        p,
        samples: points.len(),
        margin_g: mg.as_f64(),
        margin_g_tilde: mt.as_f64(),
        worst_point: pg.iter().map(|v| v.as_f64()).collect(),
        worst_point_tilde: pt.iter().map(|v| v.as_f64()).collect(),
        nu_u_range: (nu_min, nu_max),
        strict_g: mg > T::zero(),
        strict_g_tilde: mt > T::zero(),
    })
}

/// Which sufficient condition for strict convexity transfer holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConvexityTransfer {
    /// ∂Ω p-convex in g and u strictly increasing outward.
    GrowingFactor,
    /// ∂Ω p-convex in g̃ and u strictly decreasing outward.
    ShrinkingFactor,
    None,
}

/// Classifies a domain/field pair; `tol` is the slack allowed on "margin >= 0".
pub fn convexity_transfer(report: &ConvexityReport, tol: f64) -> ConvexityTransfer {
    let (nu_min, nu_max) = report.nu_u_range;
    if report.margin_g >= -tol && nu_min > 0.0 {
        ConvexityTransfer::GrowingFactor
    } else if report.margin_g_tilde >= -tol && nu_max < 0.0 {
        ConvexityTransfer::ShrinkingFactor
    } else {
        ConvexityTransfer::None
    }
}
