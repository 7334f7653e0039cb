//! Reference charts (polar k-disks, k-cubes) composed with polynomial maps.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BoundarySample, InteriorSample, SampledImmersion};
use crate::error::{Error, Result};
use crate::quadrature::gauss_legendre_on;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ReferenceChart<T> {
    /// Polar (k = 2) or spherical (k = 3) coordinates on the k-disk of the given
    /// radius; k = 1 is the segment [−radius, radius].
    PolarDisk { radius: T },
    /// Tensor-product chart on [−h, h]^k.
    Cube { half_width: T },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Resolution {
    /// Gauss points in the radial direction (per axis for cubes).
    pub radial: usize,
    /// Trapezoid points in the periodic angle; polar-angle Gauss points use half.
    pub angular: usize,
    /// Angular points on the boundary circle, when different from `angular`.
    #[serde(default)]
    pub boundary_angular: Option<usize>,
}

impl Default for Resolution {
    fn default() -> Self {
        Self { radial: 24, angular: 48, boundary_angular: None }
    }
}

pub(crate) struct ParamNode<T: Real> {
    pub t: DVector<T>,
    pub weight: T,
}

pub(crate) struct BoundaryNode<T: Real> {
    pub t: DVector<T>,
    pub weight: T,
    pub axis: usize,
    pub sign: T,
}

/// Reference point with first and second parameter derivatives.
pub(crate) struct RefPoint<T: Real> {
    pub y: DVector<T>,
    pub dy: DMatrix<T>,
    pub d2y: Vec<DVector<T>>,
}

fn trapezoid<T: Real>(count: usize) -> (Vec<T>, T) {
    let h = 2.0 * PI / count as f64;
    ((0..count).map(|j| T::lit(j as f64 * h)).collect(), T::lit(h))
}

fn tensor<T: Real>(axes: &[(Vec<T>, Vec<T>)]) -> Vec<(Vec<T>, T)> {
    let mut out = vec![(Vec::new(), T::one())];
    for (nodes, weights) in axes {
        let mut next = Vec::with_capacity(out.len() * nodes.len());
        for (t, w) in &out {
            for (x, wx) in nodes.iter().zip(weights) {
                let mut t2 = t.clone();
                t2.push(*x);
                next.push((t2, *w * *wx));
            }
        }
        out = next;
    }
    out
}

impl<T: Real> ReferenceChart<T> {
    pub fn check_dimension(&self, k: usize) -> Result<()> {
        match self {
            ReferenceChart::PolarDisk { .. } if !(1..=3).contains(&k) => {
                Err(Error::Dimension(format!("polar disk charts support k in 1..=3, got {k}")))
            }
            _ if k == 0 => Err(Error::Dimension("k must be positive".into())),
            _ => Ok(()),
        }
    }

    fn axes(&self, k: usize, res: &Resolution, skip: Option<usize>) -> Vec<(Vec<T>, Vec<T>)> {
        let mut axes = Vec::new();
        match *self {
            ReferenceChart::Cube { half_width } => {
                for a in 0..k {
                    if Some(a) != skip {
                        axes.push(gauss_legendre_on(res.radial, -half_width, half_width));
                    }
                }
            }
            ReferenceChart::PolarDisk { radius } => {
                if skip != Some(0) {
                    let lo = if k == 1 { -radius } else { T::zero() };
                    axes.push(gauss_legendre_on(res.radial, lo, radius));
                }
                let ang = if skip.is_some() { res.boundary_angular.unwrap_or(res.angular) } else { res.angular };
                if k == 3 {
                    axes.push(gauss_legendre_on(ang.div_ceil(2).max(2), T::zero(), T::lit(PI)));
                }
                if k >= 2 {
                    let (nodes, h) = trapezoid(ang);
                    let w = vec![h; nodes.len()];
                    axes.push((nodes, w));
                }
            }
        }
        axes
    }

    pub(crate) fn interior_nodes(&self, k: usize, res: &Resolution) -> Vec<ParamNode<T>> {
        tensor(&self.axes(k, res, None))
            .into_iter()
            .map(|(t, weight)| ParamNode { t: DVector::from_vec(t), weight })
            .collect()
    }

    pub(crate) fn boundary_nodes(&self, k: usize, res: &Resolution) -> Vec<BoundaryNode<T>> {
        let mut out = Vec::new();
        match *self {
            ReferenceChart::PolarDisk { radius } => {
                if k == 1 {
                    for sign in [-T::one(), T::one()] {
                        out.push(BoundaryNode {
                            t: DVector::from_element(1, sign * radius),
                            weight: T::one(),
                            axis: 0,
                            sign,
                        });
                    }
                } else {
                    for (rest, weight) in tensor(&self.axes(k, res, Some(0))) {
                        let mut t = vec![radius];
                        t.extend(rest);
                        out.push(BoundaryNode { t: DVector::from_vec(t), weight, axis: 0, sign: T::one() });
                    }
                }
            }
            ReferenceChart::Cube { half_width } => {
                for axis in 0..k {
                    for sign in [-T::one(), T::one()] {
                        for (rest, weight) in tensor(&self.axes(k, res, Some(axis))) {
                            let mut t = rest;
                            t.insert(axis, sign * half_width);
                            out.push(BoundaryNode { t: DVector::from_vec(t), weight, axis, sign });
                        }
                    }
                }
            }
        }
        out
    }

    pub(crate) fn reference_point(&self, t: &DVector<T>) -> RefPoint<T> {
        let k = t.len();
        match self {
            ReferenceChart::Cube { .. } => {
                RefPoint { y: t.clone(), dy: DMatrix::identity(k, k), d2y: vec![DVector::zeros(k); k * k] }
            }
            ReferenceChart::PolarDisk { .. } => match k {
                1 => RefPoint { y: t.clone(), dy: DMatrix::identity(1, 1), d2y: vec![DVector::zeros(1)] },
                2 => {
                    let (r, th) = (t[0], t[1]);
                    let (s, c) = (th.sin(), th.cos());
                    let v = |a: T, b: T| DVector::from_vec(vec![a, b]);
                    RefPoint {
                        y: v(r * c, r * s),
                        dy: DMatrix::from_row_slice(2, 2, &[c, -r * s, s, r * c]),
                        d2y: vec![v(T::zero(), T::zero()), v(-s, c), v(-s, c), v(-r * c, -r * s)],
                    }
                }
                _ => {
                    let (r, th, ph) = (t[0], t[1], t[2]);
                    let (st, ct, sp, cp) = (th.sin(), th.cos(), ph.sin(), ph.cos());
                    let v = |a: T, b: T, c: T| DVector::from_vec(vec![a, b, c]);
                    let er = v(st * cp, st * sp, ct);
                    let et = v(ct * cp, ct * sp, -st);
                    let ep = v(-st * sp, st * cp, T::zero());
                    let mut dy = DMatrix::zeros(3, 3);
                    dy.set_column(0, &er);
                    dy.set_column(1, &(&et * r));
                    dy.set_column(2, &(&ep * r));
                    let z = v(T::zero(), T::zero(), T::zero());
                    let tt = v(-st * cp, -st * sp, -ct) * r;
                    let tp = v(-ct * sp, ct * cp, T::zero()) * r;
                    let pp = v(-st * cp, -st * sp, T::zero()) * r;
                    RefPoint { y: er * r, dy, d2y: vec![z, et.clone(), ep.clone(), et, tt, tp.clone(), ep, tp, pp] }
                }
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MapTerm<T> {
    pub powers: Vec<u32>,
    pub coef: Vec<T>,
}

/// Polynomial map R^k → R^n, `f(y) = Σ coef_m · y^{powers_m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolynomialMap<T> {
    pub n: usize,
    pub k: usize,
    pub terms: Vec<MapTerm<T>>,
}

fn mono<T: Real>(y: &DVector<T>, powers: &[u32], da: Option<usize>, db: Option<usize>) -> T {
    let mut m = T::one();
    for (i, &p) in powers.iter().enumerate() {
        let order = (da == Some(i)) as u32 + (db == Some(i)) as u32;
        if order > p {
            return T::zero();
        }
        let mut c = T::one();
        for j in 0..order {
            c *= T::lit((p - j) as f64);
        }
        m *= c * y[i].powi((p - order) as i32);
    }
    m
}

impl<T: Real> PolynomialMap<T> {
    pub fn new(n: usize, k: usize) -> Self {
        Self { n, k, terms: Vec::new() }
    }

    /// Adds `coef · y^powers`, merging with an existing term of the same powers.
    pub fn add(&mut self, powers: &[u32], coef: &DVector<T>) {
        if let Some(t) = self.terms.iter_mut().find(|t| t.powers == powers) {
            for (c, d) in t.coef.iter_mut().zip(coef.iter()) {
                *c += *d;
            }
        } else {
            self.terms.push(MapTerm { powers: powers.to_vec(), coef: coef.iter().copied().collect() });
        }
    }

    /// `origin + L y` with L given column-wise.
    pub fn affine(origin: &DVector<T>, columns: &[DVector<T>]) -> Self {
        let n = origin.len();
        let k = columns.len();
        let mut map = Self::new(n, k);
        map.add(&vec![0; k], origin);
        for (a, col) in columns.iter().enumerate() {
            let mut p = vec![0; k];
            p[a] = 1;
            map.add(&p, col);
        }
        map
    }

    pub fn degree(&self) -> u32 {
        self.terms.iter().map(|t| t.powers.iter().sum()).max().unwrap_or(0)
    }

    pub fn check(&self) -> Result<()> {
        for t in &self.terms {
            if t.powers.len() != self.k || t.coef.len() != self.n {
                return Err(Error::Dimension("polynomial map term has inconsistent shape".into()));
            }
        }
        Ok(())
    }

    /// Value, Jacobian (n×k) and second derivatives (index a*k+b).
    pub fn eval(&self, y: &DVector<T>) -> (DVector<T>, DMatrix<T>, Vec<DVector<T>>) {
        let (n, k) = (self.n, self.k);
        let mut x = DVector::zeros(n);
        let mut d = DMatrix::zeros(n, k);
        let mut d2 = vec![DVector::zeros(n); k * k];
        for t in &self.terms {
            let c = DVector::from_column_slice(&t.coef);
            x.axpy(mono(y, &t.powers, None, None), &c, T::one());
            for a in 0..k {
                let m = mono(y, &t.powers, Some(a), None);
                if m != T::zero() {
                    let mut col = d.column_mut(a);
                    col.axpy(m, &c, T::one());
                }
                for b in 0..k {
                    let m2 = mono(y, &t.powers, Some(a), Some(b));
                    if m2 != T::zero() {
                        d2[a * k + b].axpy(m2, &c, T::one());
                    }
                }
            }
        }
        (x, d, d2)
    }

    pub fn value(&self, y: &DVector<T>) -> DVector<T> {
        let mut x = DVector::zeros(self.n);
        for t in &self.terms {
            x.axpy(mono(y, &t.powers, None, None), &DVector::from_column_slice(&t.coef), T::one());
        }
        x
    }
}

/// A polynomial map on a reference chart, sampled at a fixed resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParametricImmersion<T> {
    pub map: PolynomialMap<T>,
    pub chart: ReferenceChart<T>,
    pub resolution: Resolution,
}

impl<T: Real> ParametricImmersion<T> {
    pub fn new(map: PolynomialMap<T>, chart: ReferenceChart<T>, resolution: Resolution) -> Result<Self> {
        map.check()?;
        chart.check_dimension(map.k)?;
        Ok(Self { map, chart, resolution })
    }

    /// Point, chart Jacobian and chart Hessian at parameter `t`.
    pub fn evaluate(&self, t: &DVector<T>) -> (DVector<T>, DMatrix<T>, Vec<DVector<T>>) {
        let k = self.map.k;
        let rp = self.chart.reference_point(t);
        let (x, dx, d2x) = self.map.eval(&rp.y);
        let jac = &dx * &rp.dy;
        let mut hess = Vec::with_capacity(k * k);
        for a in 0..k {
            for b in 0..k {
                let mut h = &dx * &rp.d2y[a * k + b];
                for c in 0..k {
                    for d in 0..k {
                        let coef = rp.dy[(c, a)] * rp.dy[(d, b)];
                        if coef != T::zero() {
                            h.axpy(coef, &d2x[c * k + d], T::one());
                        }
                    }
                }
                hess.push(h);
            }
        }
        (x, jac, hess)
    }

    pub fn sample(&self) -> Result<SampledImmersion<T>> {
        let k = self.map.k;
        let interior = self
            .chart
            .interior_nodes(k, &self.resolution)
            .into_iter()
            .map(|node| {
                let (point, mut jacobian, mut chart_hessian) = self.evaluate(&node.t);
                let mut weight = node.weight;
                if k == 3 && matches!(self.chart, ReferenceChart::PolarDisk { .. }) {
                    // spherical coordinates make JᵀJ too ill-conditioned near the axis and
                    // the centre; rescale each coordinate to unit speed
                    let scale: Vec<T> = (0..k).map(|a| jacobian.column(a).norm()).collect();
                    for a in 0..k {
                        jacobian.column_mut(a).unscale_mut(scale[a]);
                        weight *= scale[a];
                        for b in 0..k {
                            chart_hessian[a * k + b].unscale_mut(scale[a] * scale[b]);
                        }
                    }
                }
                InteriorSample { point, jacobian, chart_hessian, weight }
            })
            .collect();
        let boundary = self
            .chart
            .boundary_nodes(k, &self.resolution)
            .into_iter()
            .map(|node| {
                let (point, jacobian, _) = self.evaluate(&node.t);
                BoundarySample::from_chart(point, jacobian, node.weight, node.axis, node.sign)
            })
            .collect::<Result<_>>()?;
        Ok(SampledImmersion { n: self.map.n, k, interior, boundary })
    }
}
