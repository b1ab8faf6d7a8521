//! Scalar abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: implemented for `f32` and `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal, rounding to the nearest representable value.
    fn lit(x: f64) -> Self;

    /// Widens to `f64`.
    fn to_f64_lossless(self) -> f64;
}

impl Real for f32 {
    #[inline]
    fn lit(x: f64) -> Self {
        x as f32
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        f64::from(self)
    }
}

impl Real for f64 {
    #[inline]
    fn lit(x: f64) -> Self {
        x
    }

    #[inline]
    fn to_f64_lossless(self) -> f64 {
        self
    }
}

/// Smallest density value used before taking logarithms or powers on quadrature
/// and particle paths. `1e-300` for `f64`; the smallest normal value for types
/// that cannot represent it.
pub fn density_floor<F: Real>() -> F {
    let floor = F::lit(1e-300);
    if floor > F::zero() {
        floor
    } else {
        F::min_positive_value()
    }
}

/// Numerically stable `log(sum(exp(values)))`. Returns `-inf` for an empty slice.
pub fn log_sum_exp<F: Real>(values: &[F]) -> F {
    let max = values
        .iter()
        .copied()
        .fold(F::neg_infinity(), |acc, v| if v > acc { v } else { acc });
    if !max.is_finite() {
        return max;
    }
    let sum: F = values.iter().map(|&v| (v - max).exp()).sum();
    max + sum.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floor_is_positive_for_both_widths() {
        assert_eq!(density_floor::<f64>(), 1e-300);
        assert!(density_floor::<f32>() > 0.0);
    }

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let v = [0.1_f64, -2.0, 3.5];
        let direct = v.iter().map(|x| x.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&v) - direct).abs() < 1e-14);
        assert_eq!(log_sum_exp::<f64>(&[]), f64::NEG_INFINITY);
        // no overflow for large arguments
        assert!((log_sum_exp(&[1000.0_f64, 1000.0]) - (1000.0 + 2f64.ln())).abs() < 1e-12);
    }
}
