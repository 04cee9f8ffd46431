//! Scalar abstraction shared by every numerical module.

use std::fmt::{Debug, Display, LowerExp};

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating-point type the solvers are generic over: `f32` or `f64`.
///
/// Tolerances quoted throughout the crate (1e-12 and below) assume `f64`;
/// `f32` instantiations are supported for the spectral kernels but will not
/// meet them.
pub trait Real:
    FftNum + Float + FromPrimitive + ToPrimitive + Default + Display + LowerExp + Debug
{
}

impl<T> Real for T where
    T: FftNum + Float + FromPrimitive + ToPrimitive + Default + Display + LowerExp + Debug
{
}

/// Converts an `f64` literal into the working precision.
#[inline]
pub fn lit<T: Real>(x: f64) -> T {
    T::from_f64(x).expect("literal representable in working precision")
}

/// Lossy conversion used when values leave the generic core (errors, reports).
#[inline]
pub fn to_f64<T: Real>(x: T) -> f64 {
    x.to_f64().unwrap_or(f64::NAN)
}
