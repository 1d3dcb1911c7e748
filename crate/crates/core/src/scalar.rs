//! Scalar abstraction over the element type of tensors.
//!
//! All numeric code in this crate is generic over [`Scalar`]; the crate root
//! exports `f64` aliases, which is what the trainers and the CLI use. `f32`
//! is supported for callers that want the smaller footprint.

use std::fmt::{Debug, Display};

use num_traits::{Float, FromPrimitive, NumAssignOps, ToPrimitive};

/// Floating-point element type usable by every tensor operation.
pub trait Scalar:
    Float + NumAssignOps + FromPrimitive + ToPrimitive + Debug + Display + Send + Sync + 'static
{
    /// Widen to `f64` (lossless for `f32` and `f64`).
    fn to_f64_exact(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Convert an `f64` constant into `S`, rounding if `S` is narrower.
#[inline]
pub fn cast<S: Scalar>(x: f64) -> S {
    S::from_f64(x).expect("f64 constant representable in scalar type")
}
