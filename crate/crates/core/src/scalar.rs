//! Scalar abstraction shared by every numerical kernel in the crate.

use std::fmt;

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};

/// Floating point scalar the geometry kernels are generic over (`f32` or `f64`).
pub trait Real: RealField + Copy + FromPrimitive + ToPrimitive + Default + fmt::Display + 'static {
    /// Converts an `f64` literal into the scalar type.
    #[inline]
    fn lit(v: f64) -> Self {
        Self::from_f64(v).expect("literal representable in scalar type")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    /// Machine epsilon of the scalar type.
    fn eps() -> Self;

    /// `max(requested, factor * eps)`: a tolerance that stays meaningful in low precision.
    #[inline]
    fn tol(requested: f64, factor: f64) -> Self {
        let floor = Self::eps() * Self::lit(factor);
        let t = Self::lit(requested);
        if t > floor {
            t
        } else {
            floor
        }
    }
}

impl Real for f32 {
    fn eps() -> Self {
        f32::EPSILON
    }
}

impl Real for f64 {
    fn eps() -> Self {
        f64::EPSILON
    }
}
