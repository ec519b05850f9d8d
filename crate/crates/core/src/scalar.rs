//! Scalar abstraction shared by every numeric routine in the crate.

use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Floating point scalar: `f32` or `f64`.
pub trait Real:
    Float + FloatConst + FromPrimitive + ToPrimitive + Sum + Default + Debug + Display + Send + Sync + 'static
{
    /// Converts an `f64` literal; exact for `f64`, rounded for `f32`.
    #[inline]
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("f64 literal representable")
    }

    #[inline]
    fn as_f64(self) -> f64 {
        <Self as ToPrimitive>::to_f64(&self).expect("finite scalar")
    }

    #[inline]
    fn from_count(n: usize) -> Self {
        <Self as FromPrimitive>::from_usize(n).expect("count representable")
    }
}

impl Real for f32 {}
impl Real for f64 {}

#[inline]
pub(crate) fn dot<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

#[inline]
pub(crate) fn norm<T: Real>(a: &[T]) -> T {
    dot(a, a).sqrt()
}

#[inline]
pub(crate) fn distance<T: Real>(a: &[T], b: &[T]) -> T {
    a.iter()
        .zip(b)
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn literals_round_trip() {
        assert_eq!(f64::lit(0.1), 0.1);
        assert_eq!(f32::lit(0.5), 0.5f32);
        assert_eq!(f64::from_count(7), 7.0);
        assert_eq!(0.25f32.as_f64(), 0.25);
    }

    #[test]
    fn norms() {
        assert_eq!(norm(&[3.0, 4.0]), 5.0);
        assert_eq!(distance(&[1.0f32, 1.0], &[4.0, 5.0]), 5.0);
    }
}
