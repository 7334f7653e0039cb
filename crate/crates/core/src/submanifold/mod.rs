//! Sampled parametric k-submanifolds of R^n and their extrinsic geometry.
//!
//! An immersion is carried as quadrature samples: each interior sample knows
//! its point, chart Jacobian, chart second derivatives and a chart-parameter
//! weight; each boundary sample knows its point, Jacobian, the Euclidean
//! (k−1)-measure weight and the outward unit conormal.

mod chart;
mod io;

pub use chart::{MapTerm, ParametricImmersion, PolynomialMap, ReferenceChart, Resolution};
pub use io::{ImmersionDocument, IMMERSION_SCHEMA};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::{ConformalMetric, FieldJet};
use crate::domain::LevelSetDomain;
use crate::error::{Error, Result};
use crate::linalg::{complete_basis, gram_schmidt, project_onto, project_out, symmetric_eigenvalues};
use crate::quadrature::{ordered_max, ordered_sum};
use crate::scalar::Real;

/// Samples whose `JᵀJ` is worse conditioned than this are rejected.
pub const MAX_CONDITION: f64 = 1e8;
/// Boundary samples further than this from ∂Ω are invalid for the free-boundary check.
pub const BOUNDARY_OFFSET_TOL: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct InteriorSample<T: Real> {
    pub point: DVector<T>,
    /// n×k, columns are the chart partial derivatives.
    pub jacobian: DMatrix<T>,
    /// `∂²f/∂t_a∂t_b` at index `a * k + b`.
    pub chart_hessian: Vec<DVector<T>>,
    /// Chart-parameter quadrature weight (the Jacobian factor is applied separately).
    pub weight: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoundarySample<T: Real> {
    pub point: DVector<T>,
    pub jacobian: DMatrix<T>,
    /// Quadrature weight for the Euclidean (k−1)-measure of ∂Σ.
    pub weight: T,
    pub conormal: DVector<T>,
    /// Chart parameter axis transverse to ∂Σ; the remaining columns of the
    /// Jacobian span T∂Σ.
    pub axis: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SampledImmersion<T: Real> {
    pub n: usize,
    pub k: usize,
    pub interior: Vec<InteriorSample<T>>,
    pub boundary: Vec<BoundarySample<T>>,
}

/// Euclid-orthonormal frame adapted to T_xΣ ⊕ N_xΣ.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedFrame<T: Real> {
    pub tangent: Vec<DVector<T>>,
    pub normal: Vec<DVector<T>>,
    /// `v_i = Σ_a J_a C[(a, i)]`: inverse of the triangular factor of J.
    pub chart_to_frame: DMatrix<T>,
}

impl<T: Real> AdaptedFrame<T> {
    /// Gram–Schmidt of the Jacobian columns in order, completed by the
    /// coordinate directions left over after projecting off the tangent space.
    pub fn from_jacobian(jacobian: &DMatrix<T>) -> Result<Self> {
        let (n, k) = jacobian.shape();
        if k == 0 || k > n {
            return Err(Error::Dimension(format!("Jacobian of shape {n}x{k}")));
        }
        let gram = jacobian.transpose() * jacobian;
        let ev = symmetric_eigenvalues(&gram);
        let (lo, hi) = (ev[0], ev[k - 1]);
        if lo <= T::zero() || hi > lo * T::lit(MAX_CONDITION) {
            return Err(Error::DegenerateSample(format!(
                "condition number of JᵀJ is {}",
                if lo <= T::zero() { f64::INFINITY } else { (hi / lo).as_f64() }
            )));
        }
        let cols: Vec<DVector<T>> = (0..k).map(|j| jacobian.column(j).into_owned()).collect();
        let tangent = gram_schmidt(&cols, T::lit(1e-10))
            .ok_or_else(|| Error::DegenerateSample("rank-deficient Jacobian".into()))?;
        let normal = complete_basis(&tangent, n);
        // R = QᵀJ is upper triangular; C = R⁻¹
        let r = DMatrix::from_fn(k, k, |i, j| if i <= j { tangent[i].dot(&cols[j]) } else { T::zero() });
        let chart_to_frame = r
            .solve_upper_triangular(&DMatrix::identity(k, k))
            .ok_or_else(|| Error::DegenerateSample("singular triangular factor".into()))?;
        Ok(Self { tangent, normal, chart_to_frame })
    }

    pub fn k(&self) -> usize {
        self.tangent.len()
    }

    pub fn n(&self) -> usize {
        self.tangent.len() + self.normal.len()
    }

    pub fn normal_part(&self, v: &DVector<T>) -> DVector<T> {
        project_onto(v, &self.normal)
    }

    pub fn tangent_part(&self, v: &DVector<T>) -> DVector<T> {
        project_onto(v, &self.tangent)
    }

    /// `v − v^⊤`, computed against the tangent frame.
    pub fn perp(&self, v: &DVector<T>) -> DVector<T> {
        project_out(v, &self.tangent)
    }

    pub fn all(&self) -> Vec<DVector<T>> {
        self.tangent.iter().chain(self.normal.iter()).cloned().collect()
    }
}

/// Second fundamental form and mean curvatures at an interior sample.
#[derive(Debug, Clone)]
pub struct FundamentalForms<T: Real> {
    pub frame: AdaptedFrame<T>,
    /// `α(v_i, v_j)` at index `i * k + j`, as n-vectors lying in N_xΣ.
    pub alpha: Vec<DVector<T>>,
    /// `H = Σ_i α(v_i, v_i)` (unnormalised trace).
    pub mean: DVector<T>,
    /// Mean curvature vector of Σ in `g̃`: `e^{−2u}(H − k∇^⊥u)`.
    pub mean_tilde: DVector<T>,
    pub jet: FieldJet<T>,
    /// `sqrt(det JᵀJ)`.
    pub jacobian_factor: T,
}

impl<T: Real> FundamentalForms<T> {
    pub fn k(&self) -> usize {
        self.frame.k()
    }

    pub fn alpha(&self, i: usize, j: usize) -> &DVector<T> {
        &self.alpha[i * self.k() + j]
    }

    /// `α(v_i, W)` for an arbitrary tangent vector W (linear in W).
    pub fn alpha_with(&self, i: usize, w: &DVector<T>) -> DVector<T> {
        let k = self.k();
        let mut out = DVector::zeros(self.frame.n());
        for j in 0..k {
            out.axpy(self.frame.tangent[j].dot(w), self.alpha(i, j), T::one());
        }
        out
    }

    /// Components of α in the frame's normal basis: `[i][j][r]`.
    pub fn alpha_components(&self) -> Vec<Vec<Vec<T>>> {
        let k = self.k();
        (0..k)
            .map(|i| (0..k).map(|j| self.frame.normal.iter().map(|nr| self.alpha(i, j).dot(nr)).collect()).collect())
            .collect()
    }

    pub fn grad_u_normal(&self) -> DVector<T> {
        self.frame.normal_part(&self.jet.grad)
    }

    pub fn grad_u_tangent(&self) -> DVector<T> {
        self.frame.tangent_part(&self.jet.grad)
    }

    /// `|α|² = Σ_ij |α(v_i, v_j)|²`.
    pub fn alpha_norm_squared(&self) -> T {
        self.alpha.iter().fold(T::zero(), |acc, a| acc + a.norm_squared())
    }
}

pub(crate) fn jacobian_factor<T: Real>(jacobian: &DMatrix<T>) -> T {
    (jacobian.transpose() * jacobian).determinant().max(T::zero()).sqrt()
}

/// Frame, second fundamental form and mean curvatures (flat and conformal) at `s`.
pub fn fundamental_forms<T: Real>(s: &InteriorSample<T>, metric: &ConformalMetric<T>) -> Result<FundamentalForms<T>> {
    let frame = AdaptedFrame::from_jacobian(&s.jacobian)?;
    let k = frame.k();
    if s.chart_hessian.len() != k * k {
        return Err(Error::InvalidSample(format!(
            "chart Hessian has {} entries, expected {}",
            s.chart_hessian.len(),
            k * k
        )));
    }
    let c = &frame.chart_to_frame;
    let normal_hess: Vec<DVector<T>> = s.chart_hessian.iter().map(|h| frame.normal_part(h)).collect();
    let mut alpha = Vec::with_capacity(k * k);
    for i in 0..k {
        for j in 0..k {
            let mut a = DVector::zeros(s.point.len());
            for p in 0..k {
                for q in 0..k {
                    let coef = c[(p, i)] * c[(q, j)];
                    if coef != T::zero() {
                        a.axpy(coef, &normal_hess[p * k + q], T::one());
                    }
                }
            }
            alpha.push(a);
        }
    }
    let mut mean = DVector::zeros(s.point.len());
    for i in 0..k {
        mean += &alpha[i * k + i];
    }
    let jet = metric.jet(&s.point)?;
    let grad_perp = frame.normal_part(&jet.grad);
    let mean_tilde = (&mean - grad_perp * T::lit(k as f64)) * (-T::lit(2.0) * jet.value).exp();
    Ok(FundamentalForms { jacobian_factor: jacobian_factor(&s.jacobian), frame, alpha, mean, mean_tilde, jet })
}

/// Second fundamental form of Σ in `g̃`: `α̃(v_i, v_j) = α(v_i, v_j) − δ_ij ∇^⊥u`.
pub fn conformal_sff<T: Real>(forms: &FundamentalForms<T>) -> Vec<DVector<T>> {
    let k = forms.k();
    let grad_perp = forms.grad_u_normal();
    (0..k * k)
        .map(|idx| if idx / k == idx % k { &forms.alpha[idx] - &grad_perp } else { forms.alpha[idx].clone() })
        .collect()
}

/// `α̃` recomputed from `(∇_X Y + C(X, Y))^⊥` with the connection correction C.
pub fn conformal_sff_direct<T: Real>(forms: &FundamentalForms<T>) -> Vec<DVector<T>> {
    let k = forms.k();
    let t = &forms.frame.tangent;
    (0..k * k)
        .map(|idx| {
            let corr = forms.jet.connection_correction(&t[idx / k], &t[idx % k]);
            &forms.alpha[idx] + forms.frame.normal_part(&corr)
        })
        .collect()
}

/// Frame and field data at a boundary sample.
#[derive(Debug, Clone)]
pub struct BoundaryGeometry<T: Real> {
    pub frame: AdaptedFrame<T>,
    pub jet: FieldJet<T>,
}

pub fn boundary_geometry<T: Real>(b: &BoundarySample<T>, metric: &ConformalMetric<T>) -> Result<BoundaryGeometry<T>> {
    Ok(BoundaryGeometry { frame: AdaptedFrame::from_jacobian(&b.jacobian)?, jet: metric.jet(&b.point)? })
}

impl<T: Real> BoundarySample<T> {
    /// Pushes the chart's transverse axis through J and orthogonalises it against
    /// the boundary tangents: the outward conormal by chart orientation.
    pub fn from_chart(point: DVector<T>, jacobian: DMatrix<T>, param_weight: T, axis: usize, sign: T) -> Result<Self> {
        let k = jacobian.ncols();
        let edge: Vec<DVector<T>> = (0..k).filter(|&j| j != axis).map(|j| jacobian.column(j).into_owned()).collect();
        let edge_frame = gram_schmidt(&edge, T::lit(1e-10))
            .ok_or_else(|| Error::DegenerateSample("degenerate boundary tangents".into()))?;
        let out = jacobian.column(axis).into_owned() * sign;
        let w = project_out(&out, &edge_frame);
        let norm = w.norm();
        if norm <= T::zero() {
            return Err(Error::DegenerateSample("conormal vanishes".into()));
        }
        let edge_factor = if edge.is_empty() {
            T::one()
        } else {
            jacobian_factor(&crate::linalg::columns_to_matrix(point.len(), &edge))
        };
        Ok(Self { point, jacobian, weight: param_weight * edge_factor, conormal: w / norm, axis })
    }

    /// Largest violation of: |ν| = 1, ν ∈ span J, ν ⟂ T∂Σ.
    pub fn conormal_defect(&self) -> T {
        let k = self.jacobian.ncols();
        let cols: Vec<DVector<T>> = (0..k).map(|j| self.jacobian.column(j).into_owned()).collect();
        let span = gram_schmidt(&cols, T::lit(1e-12)).unwrap_or_default();
        let mut worst = (self.conormal.norm() - T::one()).abs();
        worst = worst.max(project_out(&self.conormal, &span).norm());
        for (j, c) in cols.iter().enumerate() {
            if j != self.axis {
                worst = worst.max((self.conormal.dot(c) / c.norm()).abs());
            }
        }
        worst
    }
}

impl<T: Real> SampledImmersion<T> {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.k >= self.n {
            return Err(Error::Dimension(format!("k = {} must lie in [1, n-1] with n = {}", self.k, self.n)));
        }
        for (i, s) in self.interior.iter().enumerate() {
            if s.point.len() != self.n || s.jacobian.shape() != (self.n, self.k) {
                return Err(Error::InvalidSample(format!("interior sample {i} has inconsistent shape")));
            }
            if s.weight <= T::zero() {
                return Err(Error::InvalidSample(format!("interior sample {i} has non-positive weight")));
            }
        }
        for (i, b) in self.boundary.iter().enumerate() {
            if b.point.len() != self.n || b.jacobian.shape() != (self.n, self.k) || b.axis >= self.k {
                return Err(Error::InvalidSample(format!("boundary sample {i} has inconsistent shape")));
            }
            if b.conormal_defect() > T::tol(1e-9, 1e3) {
                return Err(Error::InvalidSample(format!("boundary sample {i} has an invalid conormal")));
            }
        }
        Ok(())
    }

    pub fn interior_forms(&self, metric: &ConformalMetric<T>) -> Result<Vec<FundamentalForms<T>>> {
        self.interior.par_iter().map(|s| fundamental_forms(s, metric)).collect()
    }

    pub fn boundary_geometries(&self, metric: &ConformalMetric<T>) -> Result<Vec<BoundaryGeometry<T>>> {
        self.boundary.par_iter().map(|b| boundary_geometry(b, metric)).collect()
    }
}

/// k-volume of Σ in `g̃`: `Σ w · sqrt(det JᵀJ) · e^{k u}`.
pub fn volume<T: Real>(imm: &SampledImmersion<T>, metric: &ConformalMetric<T>) -> Result<T> {
    if imm.interior.is_empty() {
        return Err(Error::Empty);
    }
    let k = T::lit(imm.k as f64);
    let terms: Vec<T> = imm
        .interior
        .par_iter()
        .map(|s| {
            metric.field.check(&s.point)?;
            Ok(s.weight * jacobian_factor(&s.jacobian) * (k * metric.field.value(&s.point)).exp())
        })
        .collect::<Result<_>>()?;
    Ok(ordered_sum(&terms))
}

/// (k−1)-volume of ∂Σ in `g̃`.
pub fn boundary_volume<T: Real>(imm: &SampledImmersion<T>, metric: &ConformalMetric<T>) -> Result<T> {
    if imm.boundary.is_empty() {
        return Err(Error::Empty);
    }
    let k1 = T::lit(imm.k as f64 - 1.0);
    let terms: Vec<T> = imm
        .boundary
        .iter()
        .map(|b| {
            metric.field.check(&b.point)?;
            Ok(b.weight * (k1 * metric.field.value(&b.point)).exp())
        })
        .collect::<Result<_>>()?;
    Ok(ordered_sum(&terms))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub max_residual: f64,
    pub worst_sample: Option<usize>,
    pub tolerance: f64,
    pub pass: bool,
}

impl ResidualReport {
    fn from_values<T: Real>(values: &[T], tol: f64) -> Self {
        let worst = ordered_max(values);
        let max_residual = worst.map_or(0.0, |(_, v)| v.as_f64());
        Self {
            max_residual,
            worst_sample: worst.map(|(i, _)| i),
            tolerance: tol,
            // NaN residuals never pass
            pass: max_residual <= tol,
        }
    }
}

/// `max |H̃|_g̃` over interior samples.
pub fn check_minimality<T: Real>(
    imm: &SampledImmersion<T>,
    metric: &ConformalMetric<T>,
    tol: f64,
) -> Result<ResidualReport> {
    let forms = imm.interior_forms(metric)?;
    let values: Vec<T> = forms.iter().map(|f| f.jet.value.exp() * f.mean_tilde.norm()).collect();
    Ok(ResidualReport::from_values(&values, tol))
}

/// Orthogonality defect `|1 − |<ν, −η>||` at a boundary sample.
pub fn free_boundary_defect<T: Real>(b: &BoundarySample<T>, domain: &LevelSetDomain<T>) -> Result<T> {
    let offset = domain.level(&b.point).abs();
    if offset > T::lit(BOUNDARY_OFFSET_TOL) {
        return Err(Error::InvalidSample(format!("boundary sample off ∂Ω by |φ| = {offset}")));
    }
    let eta = domain.inward_normal(&b.point)?;
    Ok((T::one() - (-b.conormal.dot(&eta)).abs()).abs())
}

/// The same defect measured with `g̃`-unit vectors `e^{−u}ν`, `e^{−u}η`.
pub fn free_boundary_defect_conformal<T: Real>(
    b: &BoundarySample<T>,
    domain: &LevelSetDomain<T>,
    metric: &ConformalMetric<T>,
) -> Result<T> {
    free_boundary_defect(b, domain)?;
    let eta = domain.inward_normal(&b.point)?;
    let scale = (-metric.field.value(&b.point)).exp();
    metric.field.check(&b.point)?;
    let pairing = metric.inner(&b.point, &(&b.conormal * scale), &(-eta * scale))?;
    Ok((T::one() - pairing.abs()).abs())
}

pub fn check_free_boundary<T: Real>(
    imm: &SampledImmersion<T>,
    domain: &LevelSetDomain<T>,
    tol: f64,
) -> Result<ResidualReport> {
    let values: Vec<T> = imm.boundary.iter().map(|b| free_boundary_defect(b, domain)).collect::<Result<_>>()?;
    Ok(ResidualReport::from_values(&values, tol))
}

#[cfg(test)]
mod tests;
