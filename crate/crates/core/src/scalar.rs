use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point type the numerical code is generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Converts from `f64`, rounding to the nearest representable value.
    fn of(v: f64) -> Self;

    fn as_f64(self) -> f64;

    fn of_usize(n: usize) -> Self {
        Self::of(n as f64)
    }

    fn half() -> Self {
        Self::of(0.5)
    }

    fn clamp_unit(self) -> Self {
        self.max(Self::zero()).min(Self::one())
    }
}

impl Scalar for f32 {
    fn of(v: f64) -> Self {
        v as f32
    }

    fn as_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn of(v: f64) -> Self {
        v
    }

    fn as_f64(self) -> f64 {
        self
    }
}
