//! Numeric foundations: the exact rational type used by the fee mechanism
//! and a small scalar trait so the series statistics work over `f32`/`f64`
//! as well as exact rationals.

use num_traits::{FromPrimitive, Zero};

/// Arbitrary-precision rational. Learning rates and reference prices are
/// held in this form so that values like 0.125, 0.025 and 0.95 compose
/// without binary rounding.
pub type Rational = num_rational::BigRational;

/// Scalar type usable in [`crate::analytics::Series`] operations.
///
/// Satisfied by `f32`, `f64` and [`Rational`] alike; averages need addition,
/// division and conversion from counts, the median filter needs ordering.
pub trait Scalar:
    Clone
    + PartialOrd
    + Zero
    + std::ops::Add<Output = Self>
    + std::ops::Div<Output = Self>
    + FromPrimitive
{
}

impl<T> Scalar for T where
    T: Clone
        + PartialOrd
        + Zero
        + std::ops::Add<Output = Self>
        + std::ops::Div<Output = Self>
        + FromPrimitive
{
}

/// Parses a non-negative rational from a decimal string ("0.125") or a
/// fraction string ("1/8"). Decimal inputs convert exactly.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((num, den)) = s.split_once('/') {
        let n: num_bigint::BigInt = num.trim().parse().ok()?;
        let d: num_bigint::BigInt = den.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Rational::new(n, d));
    }
    match s.split_once('.') {
        None => {
            let n: num_bigint::BigInt = s.parse().ok()?;
            Some(Rational::from_integer(n))
        }
        Some((int_part, frac_part)) => {
            if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
                return None;
            }
            let int_part = if int_part.is_empty() { "0" } else { int_part };
            let whole: num_bigint::BigInt = int_part.parse().ok()?;
            let frac: num_bigint::BigInt = frac_part.parse().ok()?;
            let scale = num_bigint::BigInt::from(10u8).pow(frac_part.len() as u32);
            let negative = int_part.starts_with('-');
            let frac = Rational::new(frac, scale);
            let whole = Rational::from_integer(whole);
            Some(if negative { whole - frac } else { whole + frac })
        }
    }
}

/// Exact rational from a small numerator/denominator pair.
pub fn ratio(num: i64, den: i64) -> Rational {
    Rational::new(num.into(), den.into())
}

/// Floors a non-negative rational price to integer wei; negative values
/// clamp to zero, values beyond `u128` saturate.
pub fn rational_to_wei_floor(value: &Rational) -> crate::Wei {
    use num_traits::{Signed, ToPrimitive};
    if value.is_negative() {
        return 0;
    }
    value.to_integer().to_u128().unwrap_or(crate::Wei::MAX)
}

/// Lossy conversion for reporting.
pub fn rational_to_f64(value: &Rational) -> f64 {
    use num_traits::ToPrimitive;
    value.to_f64().unwrap_or(f64::NAN)
}
