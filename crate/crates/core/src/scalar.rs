//! Floating-point abstraction for the numeric kernels.
//!
//! All math in this crate is written against [`Scalar`] so that simulations
//! can run in `f32` or `f64` without duplicating code. Random draws are
//! always performed in `f64` and then converted, which keeps the sampled
//! streams identical across instantiations of the same seed.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FromPrimitive, NumAssign};

/// Floating-point scalar usable by every kernel in this crate.
///
/// The supertraits pull in ordinary arithmetic, `ndarray` interop (so that
/// matrix products dispatch to the fast BLAS-like path) and formatting.
/// `f32` and `f64` are the intended implementors.
pub trait Scalar:
    Float
    + FromPrimitive
    + NumAssign
    + Sum
    + LinalgScalar
    + ScalarOperand
    + Display
    + Debug
    + Send
    + Sync
    + 'static
{
    /// Converts an `f64` constant into this scalar type.
    ///
    /// Panics if the value is not representable, which cannot happen for
    /// the finite constants used throughout the crate.
    fn c(value: f64) -> Self {
        Self::from_f64(value).expect("constant not representable in scalar type")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_conversion_is_exact_for_representable_values() {
        assert_eq!(f64::c(0.1), 0.1_f64);
        assert_eq!(f32::c(0.5), 0.5_f32);
        assert_eq!(f32::c(1e-3), 1e-3_f32);
    }

    #[test]
    fn conversion_handles_non_finite_values() {
        assert!(f64::c(f64::INFINITY).is_infinite());
        assert!(f32::c(f64::NAN).is_nan());
    }
}
