//! Scalar abstraction shared by every numerical routine in the crate.

use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point scalar the smoother is generic over (`f32` or `f64`).
///
/// Built on [`RealField`] so that dense factorizations from `nalgebra` stay
/// available to generic code, plus the `num-traits` conversions used to move
/// literals and diagnostics in and out of `f64`.
pub trait Real:
    RealField + Copy + Default + FromPrimitive + ToPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Default relative residual target for linear solves at this precision.
    fn solve_tolerance() -> Self;

    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        nalgebra::convert(x)
    }

    #[inline]
    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::from_usize(n).unwrap_or_else(|| Self::lit(n as f64))
    }

    #[inline]
    fn infinity() -> Self {
        Self::lit(f64::INFINITY)
    }

    #[inline]
    fn is_finite_value(self) -> bool {
        self.as_f64().is_finite()
    }
}

impl Real for f64 {
    fn solve_tolerance() -> Self {
        1e-9
    }
}

impl Real for f32 {
    fn solve_tolerance() -> Self {
        2e-5
    }
}
