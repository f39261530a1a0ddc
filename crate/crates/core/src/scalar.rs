//! Floating-point abstraction shared by every numerical routine in the crate.

use std::fmt::{Debug, Display};

use num_traits::{Float, FloatConst, FromPrimitive, ToPrimitive};

/// Real scalar the analytic routines are generic over: `f32` or `f64`.
pub trait Scalar:
    Float + FloatConst + FromPrimitive + ToPrimitive + Debug + Display + Default + Send + Sync + 'static
{
    /// Lossy conversion from an `f64` literal.
    fn lit(x: f64) -> Self {
        Self::from_f64(x).expect("f64 literal representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().expect("scalar representable as f64")
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

/// `max(x, 0)`.
#[inline]
pub fn positive_part<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        x
    } else {
        T::zero()
    }
}

/// Standard normal cumulative distribution function.
pub fn normal_cdf<T: Scalar>(x: T) -> T {
    let z = x.as_f64();
    T::lit(0.5 * libm::erfc(-z / std::f64::consts::SQRT_2))
}

/// Formats `x` with `digits` significant digits, without trailing zeros.
pub fn format_sig(x: f64, digits: usize) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".into() } else { x.to_string() };
    }
    let digits = digits.max(1);
    let exp = x.abs().log10().floor() as i32;
    if !(-5..15).contains(&exp) {
        return format!("{:.*e}", digits - 1, x);
    }
    let decimals = (digits as i32 - 1 - exp).max(0) as usize;
    let s = format!("{x:.decimals$}");
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(format_sig(0.333_333_333, 6), "0.333333");
        assert_eq!(format_sig(78.333_48, 6), "78.3335");
        assert_eq!(format_sig(1.0, 6), "1");
        assert_eq!(format_sig(0.0, 6), "0");
        assert_eq!(format_sig(123_456_789.0, 6), "123456789");
        assert_eq!(format_sig(1.5e-9, 6), "1.50000e-9");
    }

    #[test]
    fn cdf_reference_values() {
        assert_eq!(normal_cdf(0.0_f64), 0.5);
        assert!((normal_cdf(1.959_963_984_540_054_f64) - 0.975).abs() < 1e-12);
        assert!((normal_cdf(-1.0_f32) - 0.158_655_25).abs() < 1e-6);
        assert!(normal_cdf(40.0_f64) == 1.0);
    }

    #[test]
    fn positive_part_clips() {
        assert_eq!(positive_part(-3.0_f64), 0.0);
        assert_eq!(positive_part(2.5_f32), 2.5);
    }
}
