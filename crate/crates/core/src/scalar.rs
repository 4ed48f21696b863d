//! Floating-point scalar abstraction for the numeric kernels.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, NumAssign};

/// Scalar type the embedding and tree kernels are generic over: f32 or f64.
///
/// f32 matches the persisted embedding format and is the production choice;
/// f64 is used wherever analytic gradients are checked against finite
/// differences.
pub trait Scalar:
    Float + FromPrimitive + NumAssign + Sum + Send + Sync + Debug + Display + 'static
{
    fn from_f64_lossy(v: f64) -> Self;
    fn into_f64(self) -> f64;
}

impl Scalar for f32 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v as f32
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self as f64
    }
}

impl Scalar for f64 {
    #[inline]
    fn from_f64_lossy(v: f64) -> Self {
        v
    }
    #[inline]
    fn into_f64(self) -> f64 {
        self
    }
}

/// Numerically stable logistic sigmoid.
#[inline]
pub fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        let z = (-x).exp();
        S::one() / (S::one() + z)
    } else {
        let z = x.exp();
        z / (S::one() + z)
    }
}

/// log(sigmoid(x)) without overflow for large |x|.
#[inline]
pub fn log_sigmoid<S: Scalar>(x: S) -> S {
    let m = x.min(S::zero());
    m - (-x.abs()).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(40.0f64) > 1.0 - 1e-12);
        assert!(sigmoid(-40.0f64) < 1e-12);
        assert!(sigmoid(800.0f64).is_finite());
        assert!(sigmoid(-800.0f64).is_finite());
    }

    #[test]
    fn log_sigmoid_matches_naive_in_safe_range() {
        for i in -40..=40 {
            let x = i as f64 * 0.25;
            let naive = sigmoid(x).ln();
            assert!((log_sigmoid(x) - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn log_sigmoid_stable_at_extremes() {
        assert!(log_sigmoid(-1000.0f64).is_finite());
        assert_eq!(log_sigmoid(1000.0f64), 0.0);
        assert!((log_sigmoid(0.0f64) + std::f64::consts::LN_2).abs() < 1e-15);
    }
}
