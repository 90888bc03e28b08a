//! Scalar abstraction for the numeric core.
//!
//! All math modules are generic over [`Scalar`] so the same code runs in
//! `f32` or `f64`. The harness and CLI pin [`crate::Real`] = `f64` for
//! reproducibility of serialized artifacts.

use std::iter::Sum;

use ndarray::{NdFloat, ScalarOperand};
use num_traits::FromPrimitive;

/// Floating-point scalar usable throughout the numeric core.
pub trait Scalar: NdFloat + ScalarOperand + FromPrimitive + Sum {
    fn from_f64(x: f64) -> Self;
    fn to_f64(self) -> f64;
}

impl Scalar for f32 {
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    fn to_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    fn from_f64(x: f64) -> Self {
        x
    }
    fn to_f64(self) -> f64 {
        self
    }
}

/// Shorthand for lifting an `f64` literal into a generic scalar.
#[inline]
pub fn real<F: Scalar>(x: f64) -> F {
    <F as Scalar>::from_f64(x)
}
