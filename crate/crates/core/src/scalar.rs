use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};
use rustfft::FftNum;

/// Floating point scalar the numeric core is generic over: `f32` or `f64`.
pub trait Scalar:
    FftNum + Float + FromPrimitive + ToPrimitive + Sum + Default + Display + Debug
{
    /// Lossy conversion from `f64`; every `f64` maps to some value of `Self`.
    fn of(v: f64) -> Self {
        Self::from_f64(v).expect("f64 is representable")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar converts to f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}
