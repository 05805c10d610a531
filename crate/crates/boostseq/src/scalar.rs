//! Floating-point scalar abstraction for the numeric core.
//!
//! Everything in the tensor/graph/optimizer layer is generic over [`Scalar`]
//! so the same kernels run in f32 or f64. The rest of the crate works with
//! the f64 aliases exported from the crate root.

use std::fmt::{Debug, Display};
use std::iter::Sum;
use std::ops::{AddAssign, DivAssign, MulAssign, SubAssign};

pub trait Scalar:
    num_traits::Float
    + num_traits::FromPrimitive
    + num_traits::ToPrimitive
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
    + Debug
    + Display
    + Default
    + Send
    + Sync
    + 'static
{
    /// Lossy conversion from f64, for literals and RNG draws.
    fn from_f64_lossy(v: f64) -> Self {
        Self::from_f64(v).expect("f64 conversion")
    }

    fn to_f64_lossy(self) -> f64 {
        self.to_f64().expect("f64 conversion")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Numerically stable logistic function.
pub fn sigmoid_scalar<S: Scalar>(y: S) -> S {
    let one = S::one();
    if y >= S::zero() {
        one / (one + (-y).exp())
    } else {
        // avoids overflow of exp(-y) for very negative y
        let e = y.exp();
        e / (one + e)
    }
}
