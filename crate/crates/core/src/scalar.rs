//! Numeric scalars used for probabilities, moments and costs.

use std::fmt::Debug;
use std::ops::Neg;

use num_bigint::BigInt;
use num_traits::{Num, One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational used for exact computations.
pub type Rational = num_rational::BigRational;

/// Field element used by every generic algorithm in the crate.
///
/// Implemented for [`Rational`] (exact) and `f64` (fast). Ties in the
/// Fréchet-mean search are decided by [`Scalar::near`], which is exact
/// equality for rationals and a relative tolerance of `1e-9` for floats.
pub trait Scalar: Num + Neg<Output = Self> + Clone + Debug + PartialOrd + Send + Sync + 'static {
    const EXACT: bool;

    fn from_ratio(num: u64, den: u64) -> Self;

    fn from_u64(v: u64) -> Self {
        Self::from_ratio(v, 1)
    }

    fn from_f64_lossy(v: f64) -> Self;

    fn to_f64(&self) -> f64;

    fn near(&self, other: &Self) -> bool;

    /// `p/q` in lowest terms for rationals, 17 significant digits for floats.
    fn render(&self) -> String;

    fn magnitude(&self) -> f64 {
        self.to_f64().abs()
    }
}

pub const FLOAT_TIE_TOLERANCE: f64 = 1e-9;

impl Scalar for f64 {
    const EXACT: bool = false;

    fn from_ratio(num: u64, den: u64) -> Self {
        num as f64 / den as f64
    }

    fn from_f64_lossy(v: f64) -> Self {
        v
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn near(&self, other: &Self) -> bool {
        (self - other).abs() <= FLOAT_TIE_TOLERANCE * self.abs().max(other.abs()).max(1.0)
    }

    fn render(&self) -> String {
        format_f64(*self)
    }
}

impl Scalar for Rational {
    const EXACT: bool = true;

    fn from_ratio(num: u64, den: u64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64_lossy(v: f64) -> Self {
        Rational::from_float(v).unwrap_or_else(Rational::zero)
    }

    fn to_f64(&self) -> f64 {
        // Direct conversion overflows when numerator and denominator are both huge.
        match (self.numer().to_f64(), self.denom().to_f64()) {
            (Some(a), Some(b)) if a.is_finite() && b.is_finite() => a / b,
            _ => {
                let shift = self.denom().bits().max(self.numer().bits()).saturating_sub(1000);
                let num = (self.numer() >> shift).to_f64().unwrap_or(f64::NAN);
                let den = (self.denom() >> shift).to_f64().unwrap_or(f64::NAN);
                num / den
            }
        }
    }

    fn near(&self, other: &Self) -> bool {
        self == other
    }

    fn render(&self) -> String {
        render_rational(self)
    }

    fn magnitude(&self) -> f64 {
        Scalar::to_f64(&self.abs())
    }
}

pub fn render_rational(r: &Rational) -> String {
    if r.denom().is_one() {
        r.numer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}

pub fn format_f64(v: f64) -> String {
    format!("{:.16e}", v)
}

/// Parses `p/q`, `p` or a decimal literal into a rational.
pub fn parse_rational(s: &str) -> Option<Rational> {
    let s = s.trim();
    if let Some((p, q)) = s.split_once('/') {
        let p = BigInt::from_str_radix(p.trim(), 10).ok()?;
        let q = BigInt::from_str_radix(q.trim(), 10).ok()?;
        if q.is_zero() {
            return None;
        }
        Some(Rational::new(p, q))
    } else if let Ok(p) = BigInt::from_str_radix(s, 10) {
        Some(Rational::from_integer(p))
    } else {
        s.parse::<f64>().ok().and_then(Rational::from_float)
    }
}

/// Binomial coefficient `k choose 2`.
pub fn choose2(k: u64) -> u64 {
    k * k.saturating_sub(1) / 2
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_rendering_is_lowest_terms() {
        let r = Rational::from_ratio(874, 900);
        assert_eq!(r.render(), "437/450");
        assert_eq!(Rational::from_ratio(20, 2).render(), "10");
    }

    #[test]
    fn float_rendering_has_seventeen_digits() {
        assert_eq!(0.1f64.render(), "1.0000000000000001e-1");
    }

    #[test]
    fn parse_round_trips() {
        let r = parse_rational("11/9").unwrap();
        assert_eq!(r, Rational::from_ratio(11, 9));
        assert_eq!(parse_rational("5").unwrap(), Rational::from_u64(5));
        assert!(parse_rational("1/0").is_none());
    }

    #[test]
    fn float_ties_use_relative_tolerance() {
        assert!(1.0f64.near(&(1.0 + 1e-12)));
        assert!(!1.0f64.near(&1.001));
        assert!(1e6f64.near(&(1e6 + 1e-4)));
    }

    #[test]
    fn huge_rationals_convert_to_f64() {
        let big = BigInt::from(3u8).pow(900);
        let r = Rational::new(big.clone() * 2, big * 3);
        assert!((Scalar::to_f64(&r) - 2.0 / 3.0).abs() < 1e-15);
    }
}
