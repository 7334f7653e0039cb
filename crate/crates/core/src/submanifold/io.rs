//! JSON import/export of sampled immersions.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::{BoundarySample, InteriorSample, SampledImmersion};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const IMMERSION_SCHEMA: &str = "fbstab-immersion/1";

/// Flat document form of a [`SampledImmersion`]. Arrays are row-major per
/// sample: points `[s][n]`, jacobians `[s][n][k]`, chart Hessians `[s][a][b][n]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImmersionDocument {
    pub schema: String,
    pub n: usize,
    pub k: usize,
    pub interior: InteriorArrays,
    pub boundary: BoundaryArrays,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InteriorArrays {
    pub count: usize,
    pub points: Vec<f64>,
    pub jacobians: Vec<f64>,
    pub chart_hessians: Vec<f64>,
    pub weights: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryArrays {
    pub count: usize,
    pub points: Vec<f64>,
    pub jacobians: Vec<f64>,
    pub weights: Vec<f64>,
    pub conormals: Vec<f64>,
    pub axes: Vec<usize>,
}

fn push_vec<T: Real>(out: &mut Vec<f64>, v: &DVector<T>) {
    out.extend(v.iter().map(|x| x.as_f64()));
}

fn push_mat<T: Real>(out: &mut Vec<f64>, m: &DMatrix<T>) {
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)].as_f64());
        }
    }
}

fn check_len(what: &str, got: usize, want: usize) -> Result<()> {
    if got != want {
        return Err(Error::InvalidSample(format!("{what}: expected {want} values, found {got}")));
    }
    Ok(())
}

fn vec_at<T: Real>(data: &[f64], offset: usize, len: usize) -> DVector<T> {
    DVector::from_iterator(len, data[offset..offset + len].iter().map(|&x| T::lit(x)))
}

fn mat_at<T: Real>(data: &[f64], offset: usize, rows: usize, cols: usize) -> DMatrix<T> {
    DMatrix::from_row_iterator(rows, cols, data[offset..offset + rows * cols].iter().map(|&x| T::lit(x)))
}

impl ImmersionDocument {
    pub fn from_immersion<T: Real>(imm: &SampledImmersion<T>) -> Self {
        let mut interior = InteriorArrays {
            count: imm.interior.len(),
            points: Vec::new(),
            jacobians: Vec::new(),
            chart_hessians: Vec::new(),
            weights: Vec::new(),
        };
        for s in &imm.interior {
            push_vec(&mut interior.points, &s.point);
            push_mat(&mut interior.jacobians, &s.jacobian);
            for h in &s.chart_hessian {
                push_vec(&mut interior.chart_hessians, h);
            }
            interior.weights.push(s.weight.as_f64());
        }
        let mut boundary = BoundaryArrays {
            count: imm.boundary.len(),
            points: Vec::new(),
            jacobians: Vec::new(),
            weights: Vec::new(),
            conormals: Vec::new(),
            axes: Vec::new(),
        };
        for b in &imm.boundary {
            push_vec(&mut boundary.points, &b.point);
            push_mat(&mut boundary.jacobians, &b.jacobian);
            boundary.weights.push(b.weight.as_f64());
            push_vec(&mut boundary.conormals, &b.conormal);
            boundary.axes.push(b.axis);
        }
        Self { schema: IMMERSION_SCHEMA.to_string(), n: imm.n, k: imm.k, interior, boundary }
    }

    pub fn to_immersion<T: Real>(&self) -> Result<SampledImmersion<T>> {
        if self.schema != IMMERSION_SCHEMA {
            return Err(Error::Config(format!("unsupported immersion schema {:?}", self.schema)));
        }
        let (n, k) = (self.n, self.k);
        let (ni, nb) = (self.interior.count, self.boundary.count);
        let a = &self.interior;
        check_len("interior points", a.points.len(), ni * n)?;
        check_len("interior jacobians", a.jacobians.len(), ni * n * k)?;
        check_len("interior chart_hessians", a.chart_hessians.len(), ni * k * k * n)?;
        check_len("interior weights", a.weights.len(), ni)?;
        let b = &self.boundary;
        check_len("boundary points", b.points.len(), nb * n)?;
        check_len("boundary jacobians", b.jacobians.len(), nb * n * k)?;
        check_len("boundary weights", b.weights.len(), nb)?;
        check_len("boundary conormals", b.conormals.len(), nb * n)?;
        check_len("boundary axes", b.axes.len(), nb)?;
        let interior = (0..ni)
            .map(|s| InteriorSample {
                point: vec_at(&a.points, s * n, n),
                jacobian: mat_at(&a.jacobians, s * n * k, n, k),
                chart_hessian: (0..k * k).map(|ab| vec_at(&a.chart_hessians, (s * k * k + ab) * n, n)).collect(),
                weight: T::lit(a.weights[s]),
            })
            .collect();
        let boundary = (0..nb)
            .map(|s| BoundarySample {
                point: vec_at(&b.points, s * n, n),
                jacobian: mat_at(&b.jacobians, s * n * k, n, k),
                weight: T::lit(b.weights[s]),
                conormal: vec_at(&b.conormals, s * n, n),
                axis: b.axes[s],
            })
            .collect();
        let imm = SampledImmersion { n, k, interior, boundary };
        imm.validate()?;
        Ok(imm)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }
}
