//! Numerical second-variation machinery for free boundary minimal
//! submanifolds of conformally Euclidean domains.

#![allow(clippy::needless_range_loop)]

pub mod catalog;
pub mod conformal;
pub mod domain;
pub mod error;
pub mod flow;
pub mod linalg;
pub mod poly;
pub mod quadrature;
pub mod report;
pub mod scalar;
pub mod scenario;
pub mod submanifold;
pub mod suite;
pub mod variation;

pub use error::{Error, Result};
pub use scalar::Real;

pub type ScalarField64 = conformal::ScalarField<f64>;
pub type ConformalMetric64 = conformal::ConformalMetric<f64>;
pub type LevelSetDomain64 = domain::LevelSetDomain<f64>;
pub type SampledImmersion64 = submanifold::SampledImmersion<f64>;
pub type ParametricImmersion64 = submanifold::ParametricImmersion<f64>;
pub type FundamentalForms64 = submanifold::FundamentalForms<f64>;
pub type NormalField64 = variation::NormalField<f64>;
pub type FlowState64 = flow::FlowState<f64>;
