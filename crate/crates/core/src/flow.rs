//! Constrained volume-gradient descent towards free boundary minimal 2-disks.
//!
//! The immersion is a polynomial map of bounded degree on the reference polar
//! disk. Each step fits the direction field in that space (exactly at the
//! boundary nodes, least squares in the interior), applies an explicit Euler
//! update, re-projects the boundary nodes onto ∂Ω and backtracks on volume.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::conformal::ConformalMetric;
use crate::domain::LevelSetDomain;
use crate::error::{Error, Result};
use crate::poly::monomial_exponents;
use crate::quadrature::{ordered_max, ordered_sum};
use crate::scalar::Real;
use crate::submanifold::{
    boundary_geometry, free_boundary_defect, fundamental_forms, volume, MapTerm, ParametricImmersion, PolynomialMap,
    ReferenceChart, Resolution, SampledImmersion,
};

pub const MAX_HALVINGS: usize = 20;
/// Allowed volume increase on an accepted step.
pub const VOLUME_SLACK: f64 = 1e-12;

/// Per-sample descent directions.
#[derive(Debug, Clone, PartialEq)]
pub struct Direction<T: Real> {
    /// `H̃` at interior samples.
    pub interior: Vec<DVector<T>>,
    /// `−P_{T∂Ω} ν̃` at boundary samples.
    pub boundary: Vec<DVector<T>>,
}

impl<T: Real> Direction<T> {
    pub fn max_norm(&self) -> T {
        self.interior.iter().chain(&self.boundary).fold(T::zero(), |m, v| m.max(v.norm()))
    }
}

/// Direction of steepest descent for the g̃-volume. With `α = (∇_X Y)^⊥` and
/// `H = tr α`, `δV(X) = −∫ g̃(H̃, X) dμ̃ + ∫ g̃(X, ν̃) dã`, so the interior part
/// is `+H̃` and the boundary part is `−ν̃` projected onto T∂Ω.
pub fn first_variation_direction<T: Real>(
    imm: &SampledImmersion<T>,
    metric: &ConformalMetric<T>,
    domain: &LevelSetDomain<T>,
) -> Result<Direction<T>> {
    let interior =
        imm.interior.par_iter().map(|s| Ok(fundamental_forms(s, metric)?.mean_tilde)).collect::<Result<_>>()?;
    let boundary = imm
        .boundary
        .iter()
        .map(|b| {
            let g = boundary_geometry(b, metric)?;
            let eta = domain.inward_normal(&b.point)?;
            let nu = &b.conormal * (-g.jet.value).exp();
            Ok(-(&nu - &eta * eta.dot(&nu)))
        })
        .collect::<Result<_>>()?;
    Ok(Direction { interior, boundary })
}

/// `δV(X)` for a vector field given at the samples.
pub fn first_variation<T: Real>(
    imm: &SampledImmersion<T>,
    metric: &ConformalMetric<T>,
    interior: &[DVector<T>],
    boundary: &[DVector<T>],
) -> Result<T> {
    let k = T::lit(imm.k as f64);
    let k1 = T::lit(imm.k as f64 - 1.0);
    let two = T::lit(2.0);
    let a: Vec<T> = imm
        .interior
        .iter()
        .zip(interior)
        .map(|(s, x)| {
            let f = fundamental_forms(s, metric)?;
            let u = f.jet.value;
            Ok(-(two * u).exp() * f.mean_tilde.dot(x) * s.weight * f.jacobian_factor * (k * u).exp())
        })
        .collect::<Result<_>>()?;
    let b: Vec<T> = imm
        .boundary
        .iter()
        .zip(boundary)
        .map(|(s, x)| {
            let u = metric.field.value(&s.point);
            Ok((two * u).exp() * x.dot(&(&s.conormal * (-u).exp())) * s.weight * (k1 * u).exp())
        })
        .collect::<Result<_>>()?;
    Ok(ordered_sum(&a) + ordered_sum(&b))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    pub dt: f64,
    pub max_iter: usize,
    /// Target for `max e^u|H̃|`.
    pub tol: f64,
    /// Target for the boundary angle defect.
    pub defect_tol: f64,
    /// Polynomial degree of the control space.
    pub degree: u32,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self { dt: 0.01, max_iter: 5000, tol: 1e-3, defect_tol: 1e-2, degree: 6 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FlowRecord {
    pub iteration: usize,
    pub h_max: f64,
    pub defect: f64,
    pub volume: f64,
    pub dt: f64,
}

/// Fixed linear algebra for one control space: monomial values at the nodes
/// and the factorised constrained least-squares system.
#[derive(Debug, Clone)]
struct Fitter<T: Real> {
    exponents: Vec<Vec<u32>>,
    interior_basis: DMatrix<T>,
    boundary_basis: DMatrix<T>,
    weights: DVector<T>,
    kkt: nalgebra::LU<T, nalgebra::Dyn, nalgebra::Dyn>,
}

fn monomial_values<T: Real>(y: &DVector<T>, exponents: &[Vec<u32>]) -> Vec<T> {
    exponents.iter().map(|e| e.iter().enumerate().fold(T::one(), |acc, (i, &p)| acc * y[i].powi(p as i32))).collect()
}

impl<T: Real> Fitter<T> {
    fn new(chart: &ReferenceChart<T>, resolution: &Resolution, degree: u32) -> Result<Self> {
        let exponents = monomial_exponents(2, degree);
        let m = exponents.len();
        let interior = chart.interior_nodes(2, resolution);
        let boundary = chart.boundary_nodes(2, resolution);
        let mut interior_basis = DMatrix::zeros(interior.len(), m);
        let mut weights = DVector::zeros(interior.len());
        for (i, node) in interior.iter().enumerate() {
            let rp = chart.reference_point(&node.t);
            interior_basis.row_mut(i).copy_from_slice(&monomial_values(&rp.y, &exponents));
            weights[i] = node.weight * rp.dy.determinant().abs();
        }
        let mut boundary_basis = DMatrix::zeros(boundary.len(), m);
        for (i, node) in boundary.iter().enumerate() {
            let rp = chart.reference_point(&node.t);
            boundary_basis.row_mut(i).copy_from_slice(&monomial_values(&rp.y, &exponents));
        }
        let nb = boundary.len();
        let mut kkt = DMatrix::zeros(m + nb, m + nb);
        let weighted = DMatrix::from_fn(interior.len(), m, |i, j| interior_basis[(i, j)] * weights[i]);
        kkt.view_mut((0, 0), (m, m)).copy_from(&(interior_basis.transpose() * weighted));
        kkt.view_mut((0, m), (m, nb)).copy_from(&boundary_basis.transpose());
        kkt.view_mut((m, 0), (nb, m)).copy_from(&boundary_basis);
        let kkt = kkt.lu();
        if !kkt.is_invertible() {
            return Err(Error::Singular("constrained fit of the flow update".into()));
        }
        Ok(Self { exponents, interior_basis, boundary_basis, weights, kkt })
    }

    /// Coefficient update (m × n) matching `boundary` exactly and `interior` in weighted least squares.
    fn fit(&self, interior: &DMatrix<T>, boundary: &DMatrix<T>) -> Result<DMatrix<T>> {
        let m = self.exponents.len();
        let n = interior.ncols();
        let weighted = DMatrix::from_fn(interior.nrows(), n, |i, j| interior[(i, j)] * self.weights[i]);
        let mut rhs = DMatrix::zeros(m + boundary.nrows(), n);
        rhs.view_mut((0, 0), (m, n)).copy_from(&(self.interior_basis.transpose() * weighted));
        rhs.view_mut((m, 0), (boundary.nrows(), n)).copy_from(boundary);
        let sol = self.kkt.solve(&rhs).ok_or_else(|| Error::Singular("flow update".into()))?;
        Ok(sol.rows(0, m).into_owned())
    }
}

fn rows<T: Real>(vs: &[DVector<T>], n: usize) -> DMatrix<T> {
    DMatrix::from_fn(vs.len(), n, |i, j| vs[i][j])
}

#[derive(Debug, Clone)]
pub struct FlowState<T: Real> {
    /// Control values: coefficients (monomial × ambient coordinate).
    pub coefficients: DMatrix<T>,
    pub chart: ReferenceChart<T>,
    pub resolution: Resolution,
    pub imm: SampledImmersion<T>,
    pub step: T,
    pub iteration: usize,
    pub history: Vec<FlowRecord>,
    fitter: Fitter<T>,
}

impl<T: Real> FlowState<T> {
    /// Embeds a polar-disk immersion (k = 2) in the degree-`degree` control
    /// space, with `2·degree + 1` boundary nodes, and projects its boundary onto ∂Ω.
    pub fn new(initial: &ParametricImmersion<T>, domain: &LevelSetDomain<T>, config: &FlowConfig) -> Result<Self> {
        if initial.map.k != 2 || !matches!(initial.chart, ReferenceChart::PolarDisk { .. }) {
            return Err(Error::Dimension("the flow runs on polar 2-disk charts".into()));
        }
        if initial.map.degree() > config.degree {
            return Err(Error::Config(format!(
                "initial map has degree {} above the control degree {}",
                initial.map.degree(),
                config.degree
            )));
        }
        let resolution = Resolution { boundary_angular: Some(2 * config.degree as usize + 1), ..initial.resolution };
        let fitter = Fitter::new(&initial.chart, &resolution, config.degree)?;
        let n = initial.map.n;
        let mut coefficients = DMatrix::zeros(fitter.exponents.len(), n);
        for term in &initial.map.terms {
            let row = fitter.exponents.iter().position(|e| *e == term.powers).expect("degree checked");
            for j in 0..n {
                coefficients[(row, j)] += term.coef[j];
            }
        }
        let mut state = Self {
            coefficients,
            chart: initial.chart,
            resolution,
            imm: SampledImmersion { n, k: 2, interior: Vec::new(), boundary: Vec::new() },
            step: T::lit(config.dt),
            iteration: 0,
            history: Vec::new(),
            fitter,
        };
        state.coefficients = state.project_boundary(&state.coefficients, domain)?;
        state.imm = state.immersion_for(&state.coefficients).sample()?;
        Ok(state)
    }

    pub fn map_for(&self, coefficients: &DMatrix<T>) -> PolynomialMap<T> {
        let n = coefficients.ncols();
        PolynomialMap {
            n,
            k: 2,
            terms: self
                .fitter
                .exponents
                .iter()
                .enumerate()
                .filter(|(i, _)| coefficients.row(*i).iter().any(|c| *c != T::zero()))
                .map(|(i, e)| MapTerm { powers: e.clone(), coef: coefficients.row(i).iter().copied().collect() })
                .collect(),
        }
    }

    fn immersion_for(&self, coefficients: &DMatrix<T>) -> ParametricImmersion<T> {
        ParametricImmersion { map: self.map_for(coefficients), chart: self.chart, resolution: self.resolution }
    }

    pub fn immersion(&self) -> ParametricImmersion<T> {
        self.immersion_for(&self.coefficients)
    }

    /// Moves the boundary nodes onto ∂Ω with the smallest interior change.
    fn project_boundary(&self, coefficients: &DMatrix<T>, domain: &LevelSetDomain<T>) -> Result<DMatrix<T>> {
        let values = &self.fitter.boundary_basis * coefficients;
        let n = coefficients.ncols();
        let mut shift = DMatrix::zeros(values.nrows(), n);
        for i in 0..values.nrows() {
            let x = values.row(i).transpose();
            let p = domain.project_to_boundary(&x)?;
            shift.row_mut(i).copy_from(&(p - x).transpose());
        }
        let zero = DMatrix::zeros(self.fitter.interior_basis.nrows(), n);
        Ok(coefficients + self.fitter.fit(&zero, &shift)?)
    }

    fn record(&mut self, metric: &ConformalMetric<T>, domain: &LevelSetDomain<T>, vol: T) -> Result<FlowRecord> {
        let h: Vec<T> = self
            .imm
            .interior
            .par_iter()
            .map(|s| fundamental_forms(s, metric).map(|f| f.jet.value.exp() * f.mean_tilde.norm()))
            .collect::<Result<_>>()?;
        let d: Vec<T> = self.imm.boundary.iter().map(|b| free_boundary_defect(b, domain)).collect::<Result<_>>()?;
        let rec = FlowRecord {
            iteration: self.iteration,
            h_max: ordered_max(&h).map_or(0.0, |(_, v)| v.as_f64()),
            defect: ordered_max(&d).map_or(0.0, |(_, v)| v.as_f64()),
            volume: vol.as_f64(),
            dt: self.step.as_f64(),
        };
        self.history.push(rec);
        Ok(rec)
    }
}

/// Explicit Euler step with boundary re-projection and volume backtracking.
pub fn flow_step<T: Real>(
    state: &FlowState<T>,
    metric: &ConformalMetric<T>,
    domain: &LevelSetDomain<T>,
    dt: T,
) -> Result<FlowState<T>> {
    let n = state.imm.n;
    let dir = first_variation_direction(&state.imm, metric, domain)?;
    if dir.max_norm() == T::zero() {
        return Ok(state.clone());
    }
    let vol0 = volume(&state.imm, metric)?;
    let slack = T::lit(VOLUME_SLACK);
    let di = rows(&dir.interior, n);
    let db = rows(&dir.boundary, n);
    let delta = state.fitter.fit(&di, &db)?;
    let mut h = dt;
    for _ in 0..=MAX_HALVINGS {
        let trial = (|| -> Result<(DMatrix<T>, SampledImmersion<T>, T)> {
            let moved = &state.coefficients + &delta * h;
            let coefficients = state.project_boundary(&moved, domain)?;
            let imm = state.immersion_for(&coefficients).sample()?;
            let vol = volume(&imm, metric)?;
            Ok((coefficients, imm, vol))
        })();
        match trial {
            Ok((coefficients, imm, vol)) if vol <= vol0 + slack => {
                let mut next = state.clone();
                next.coefficients = coefficients;
                next.imm = imm;
                next.step = h;
                next.iteration = state.iteration + 1;
                return Ok(next);
            }
            Ok(_) | Err(Error::Projection { .. }) | Err(Error::DegenerateSample(_)) | Err(Error::Domain(_)) => {
                h *= T::lit(0.5);
            }
            Err(e) => return Err(e),
        }
    }
    Err(Error::StepFailure(format!("volume did not decrease after {MAX_HALVINGS} halvings of dt = {dt}")))
}

/// How a flow run ended.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case", tag = "status", content = "reason")]
pub enum FlowOutcome {
    Converged,
    IterationLimit,
    /// The descent direction vanished away from the thresholds.
    Stalled,
    /// Backtracking could not decrease the volume; the state is the last accepted one.
    StepFailure(String),
}

impl FlowOutcome {
    pub fn converged(&self) -> bool {
        *self == Self::Converged
    }
}

/// Iterates [`flow_step`] until `max e^u|H̃| <= tol` and the boundary defect
/// is `<= defect_tol`, or `max_iter` steps. The returned state carries the
/// full history whatever the outcome.
pub fn run_flow<T: Real>(
    initial: &ParametricImmersion<T>,
    metric: &ConformalMetric<T>,
    domain: &LevelSetDomain<T>,
    config: &FlowConfig,
) -> Result<(FlowState<T>, FlowOutcome)> {
    if config.dt <= 0.0 || !config.dt.is_finite() {
        return Err(Error::Config("flow dt must be positive".into()));
    }
    let mut state = FlowState::new(initial, domain, config)?;
    let cap = T::lit(config.dt);
    loop {
        let vol = volume(&state.imm, metric)?;
        let rec = state.record(metric, domain, vol)?;
        if rec.h_max <= config.tol && rec.defect <= config.defect_tol {
            return Ok((state, FlowOutcome::Converged));
        }
        if state.iteration >= config.max_iter {
            return Ok((state, FlowOutcome::IterationLimit));
        }
        let dt = state.step;
        let history = std::mem::take(&mut state.history);
        let mut next = match flow_step(&state, metric, domain, dt) {
            Ok(next) => next,
            Err(Error::StepFailure(reason)) => {
                state.history = history;
                return Ok((state, FlowOutcome::StepFailure(reason)));
            }
            Err(e) => return Err(e),
        };
        next.history = history;
        // regrow after backtracking, never beyond the configured step
        next.step = (next.step * T::lit(1.25)).min(cap);
        if next.iteration == state.iteration {
            return Ok((next, FlowOutcome::Stalled));
        }
        state = next;
    }
}
