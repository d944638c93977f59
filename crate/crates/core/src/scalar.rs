//! Floating-point abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Real scalar used for logits, probabilities, rewards and advantages.
///
/// Implemented for `f32` and `f64`. All tolerances quoted in the tests are
/// for `f64`; `f32` is supported for memory-bound experiments.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Sum + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossless widening used by the binary formats.
    fn to_f64_lossless(self) -> f64;

    /// Narrowing from the on-disk representation.
    fn from_f64_exact(value: f64) -> Self;

    /// Converts a small literal. Panics only if `value` is not representable,
    /// which cannot happen for the constants used in this crate.
    #[inline]
    fn lit(value: f64) -> Self {
        Self::from_f64(value).expect("literal fits in scalar")
    }

    #[inline]
    fn from_usize_lossy(value: usize) -> Self {
        Self::from_usize(value).expect("usize converts to float")
    }
}

impl Scalar for f64 {
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }

    #[inline]
    fn from_f64_exact(value: f64) -> Self {
        value
    }
}

impl Scalar for f32 {
    #[inline]
    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }

    #[inline]
    fn from_f64_exact(value: f64) -> Self {
        value as f32
    }
}
