//! Scalar abstraction shared by the exact chain engine.
//!
//! Everything in [`crate::chain`] and [`crate::linalg`] is written against
//! [`Scalar`], so the same code runs in `f64`, `f32`, or exact rational
//! arithmetic. Fixture values such as `1/3` can then be checked with `==`
//! instead of a tolerance.

use std::fmt::{Debug, Display};
use std::str::FromStr;

use num_rational::Ratio;
use num_traits::{FromPrimitive, Num, Signed, ToPrimitive};

/// Exact rational scalar. `i128` components keep small fixtures far from
/// overflow; large random chains should use `f64`.
pub type Rational = Ratio<i128>;

/// Field element usable by the dense linear algebra and the chain engine.
pub trait Scalar:
    Copy
    + Debug
    + Display
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Num
    + Signed
    + FromPrimitive
    + ToPrimitive
    + FromStr
{
    /// True when arithmetic is exact (no rounding).
    const EXACT: bool;

    /// Unit roundoff; zero for exact types.
    fn epsilon() -> Self;

    /// Converts a literal, panicking only if the value is not representable.
    fn lit(v: f64) -> Self {
        <Self as FromPrimitive>::from_f64(v).expect("literal not representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }

    fn max_of(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }

    fn min_of(self, other: Self) -> Self {
        if other < self {
            other
        } else {
            self
        }
    }

    /// Tolerance `rel` scaled for the type: exact types compare with zero.
    fn tolerance(rel: f64) -> Self {
        if Self::EXACT {
            Self::zero()
        } else {
            Self::lit(rel)
        }
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    fn epsilon() -> Self {
        f64::EPSILON
    }
    fn lit(v: f64) -> Self {
        v
    }
    fn as_f64(self) -> f64 {
        self
    }
}

impl Scalar for f32 {
    const EXACT: bool = false;
    fn epsilon() -> Self {
        f32::EPSILON
    }
    fn lit(v: f64) -> Self {
        v as f32
    }
    fn as_f64(self) -> f64 {
        self as f64
    }
    // f32 cannot resolve the f64 tolerances used across the crate.
    fn tolerance(rel: f64) -> Self {
        (rel as f32).max(1e3 * f32::EPSILON)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;
    fn epsilon() -> Self {
        Rational::from_integer(0)
    }
}

/// Relative discrepancy `|a - b| / max(|a|, |b|, floor)`.
pub fn rel_diff<T: Scalar>(a: T, b: T, floor: T) -> T {
    let scale = a.abs().max_of(b.abs()).max_of(floor);
    if scale.is_zero() {
        return T::zero();
    }
    (a - b).abs() / scale
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_literals_are_exact_for_dyadics() {
        assert_eq!(Rational::lit(0.25), Rational::new(1, 4));
        assert_eq!(Rational::lit(3.0), Rational::from_integer(3));
    }

    #[test]
    fn exact_tolerance_is_zero() {
        assert_eq!(Rational::tolerance(1e-12), Rational::from_integer(0));
        assert_eq!(f64::tolerance(1e-12), 1e-12);
        assert!(f32::tolerance(1e-12) > 0.0);
    }

    #[test]
    fn rel_diff_uses_floor() {
        assert_eq!(rel_diff(0.0_f64, 0.0, 0.0), 0.0);
        assert!((rel_diff(1.0_f64, 1.5, 0.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(rel_diff(1e-20_f64, 0.0, 1.0), 1e-20);
    }
}
