//! Scalar abstraction for the precision-agnostic kernels.
//!
//! The lineshape model and the Allan statistics only need ordinary floating
//! point arithmetic and run unchanged in `f32` or `f64`. The field/frequency
//! map needs relative precision near 1e-12 and is therefore `f64` only.

use num_traits::{Float, FloatConst, FromPrimitive};
use std::fmt::{Debug, Display};
use std::iter::Sum;

/// Floating point type usable by the generic kernels: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + Sum + Debug + Display + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    #[inline]
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        Self::from_usize(n).expect("count representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
