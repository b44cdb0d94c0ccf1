//! Scalar abstraction for the numeric kernels.
//!
//! Everything numeric in this crate (signal processing, KL terms, the
//! gradient tape, loss arithmetic) is written against [`Real`] so the same
//! code runs at single or double precision. The pipeline type aliases at the
//! crate root pin the default to `f64`.

use ndarray::{LinalgScalar, ScalarOperand};
use num_traits::{Float, FloatConst, FromPrimitive, NumAssign, ToPrimitive};

/// Floating-point scalar: `f32` or `f64`.
pub trait Real:
    Float
    + FloatConst
    + FromPrimitive
    + ToPrimitive
    + NumAssign
    + ScalarOperand
    + LinalgScalar
    + std::iter::Sum
    + std::fmt::Debug
    + std::fmt::Display
    + Send
    + Sync
    + 'static
{
    /// Lossless-enough conversion from `f64` literals and config values.
    fn from_f64_c(v: f64) -> Self {
        Self::from_f64(v).expect("finite f64 converts to any Real")
    }
}

impl Real for f32 {}
impl Real for f64 {}

/// Sum with a canonical accumulation order: values are sorted by total order
/// before adding, so the result is bit-identical under permutation of the
/// inputs.
pub fn stable_sum<F: Real>(values: &[F]) -> F {
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    sorted.into_iter().fold(F::zero(), |acc, v| acc + v)
}

/// Mean via [`stable_sum`]; zero for an empty slice.
pub fn stable_mean<F: Real>(values: &[F]) -> F {
    if values.is_empty() {
        return F::zero();
    }
    stable_sum(values) / F::from_f64_c(values.len() as f64)
}

/// Folds a string tag into a base seed (FNV-1a), so per-item RNG streams are
/// deterministic and platform-independent.
pub fn mix_seed(seed: u64, tag: &str) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64 ^ seed.rotate_left(17);
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Median with the even-count convention: the mean of the two central order
/// statistics.
pub fn median<F: Real>(values: &[F]) -> Option<F> {
    if values.is_empty() {
        return None;
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = sorted.len();
    let mid = n / 2;
    if n % 2 == 1 {
        Some(sorted[mid])
    } else {
        Some((sorted[mid - 1] + sorted[mid]) / F::from_f64_c(2.0))
    }
}
