use nalgebra::RealField;
use num_traits::{FromPrimitive, ToPrimitive};
use std::fmt::{Debug, Display};

/// Floating-point scalar the numerical core is generic over.
///
/// Implemented for `f32` and `f64`. Elementary functions (`sqrt`, `exp`, ...)
/// come from [`RealField`]; conversions to and from `f64` go through
/// `num-traits`.
pub trait Real:
    RealField + Copy + FromPrimitive + ToPrimitive + Display + Debug + Send + Sync + 'static
{
    /// Converts an `f64` constant into this scalar type.
    #[inline]
    fn lit(x: f64) -> Self {
        <Self as FromPrimitive>::from_f64(x).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("scalar representable as f64")
    }

    #[inline]
    fn from_usize_lossy(n: usize) -> Self {
        Self::lit(n as f64)
    }
}

impl Real for f32 {}
impl Real for f64 {}
