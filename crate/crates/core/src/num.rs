//! Scalar abstraction for the numeric core: f32 or f64.

use num_traits::{Float, FromPrimitive};

/// Floating-point scalar the probability engine is generic over.
pub trait Real: Float + FromPrimitive + std::iter::Sum + std::fmt::Debug + std::fmt::Display + 'static {}

impl Real for f32 {}
impl Real for f64 {}

/// Lift an `f64` constant into the working scalar type.
#[inline]
pub fn real<S: Real>(x: f64) -> S {
    S::from_f64(x).expect("constant representable in scalar type")
}
