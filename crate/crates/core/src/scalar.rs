use std::fmt::{Debug, Display};

use num_traits::{Float, NumCast};

/// Floating-point scalar the whole crate is generic over: `f32` or `f64`.
///
/// All random draws and serialized values are produced in `f64` and converted,
/// so the RNG stream and on-disk bytes do not depend on the instantiation.
pub trait Scalar: Float + Debug + Display + Send + Sync + 'static {
    fn from_f64(x: f64) -> Self {
        <Self as NumCast>::from(x).expect("f64 value representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        <f64 as NumCast>::from(self).expect("scalar converts to f64")
    }

    fn two() -> Self {
        Self::one() + Self::one()
    }

    fn half() -> Self {
        Self::one() / Self::two()
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// Running sum in the scalar type with a fixed left-to-right order.
pub fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = T::zero();
    for (x, y) in a.iter().zip(b.iter()) {
        acc = acc + *x * *y;
    }
    acc
}

pub fn norm_sq<T: Scalar>(a: &[T]) -> T {
    dot(a, a)
}

/// Overflow-safe log-sum-exp; empty input yields negative infinity.
pub fn log_sum_exp<T: Scalar>(values: &[T]) -> T {
    let mut max = T::neg_infinity();
    for v in values {
        if *v > max {
            max = *v;
        }
    }
    if max == T::neg_infinity() {
        return T::neg_infinity();
    }
    let mut acc = T::zero();
    for v in values {
        acc = acc + (*v - max).exp();
    }
    max + acc.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn log_sum_exp_matches_direct_sum() {
        let vals = [0.1_f64, -2.0, 3.5];
        let direct: f64 = vals.iter().map(|v| v.exp()).sum::<f64>().ln();
        assert!((log_sum_exp(&vals) - direct).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_survives_large_magnitudes() {
        let vals = [1000.0_f64, 1000.0];
        let got = log_sum_exp(&vals);
        assert!((got - (1000.0 + 2.0_f64.ln())).abs() < 1e-9);
    }

    #[test]
    fn dot_is_left_to_right() {
        let a = [1.0_f64, 2.0, 3.0];
        let b = [4.0_f64, 5.0, 6.0];
        assert_eq!(dot(&a, &b), ((1.0 * 4.0) + 2.0 * 5.0) + 3.0 * 6.0);
    }
}
