//! Scalar abstraction shared by the kinetics, the simulator and the exact oracle.
//!
//! Rate constants, propensities and probabilities are generic over [`Scalar`].
//! Floating-point types additionally implement [`Real`], which the stochastic
//! simulator needs for logarithms and uniform draws. [`Exact`] (arbitrary
//! precision rationals) is a `Scalar` but not a `Real`: it is used by the CTMC
//! oracle to produce exact absorption probabilities.

use std::fmt::Debug;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{Float, Num, One, Signed, ToPrimitive, Zero};

/// Arbitrary-precision rational scalar.
pub type Exact = BigRational;

/// Ring/field element usable as a rate constant or probability.
pub trait Scalar: Num + Signed + Clone + PartialOrd + Debug + Send + Sync + 'static {
    /// Embeds a species count.
    fn from_count(count: u64) -> Self;

    /// Lossy conversion used for pivot selection, residual checks and reports.
    fn to_f64(&self) -> f64;

    /// `false` for infinities and NaN; always `true` for exact types.
    fn is_finite_value(&self) -> bool {
        true
    }

    /// Parses an unsigned decimal literal such as `1`, `0.25` or `1e9`.
    /// The caller has already checked the lexical form.
    fn parse_decimal(text: &str) -> Option<Self>;

    /// Canonical decimal rendering, round-tripping through [`Scalar::parse_decimal`].
    fn to_decimal(&self) -> String;
}

/// Floating-point scalar usable by the stochastic simulator.
pub trait Real: Scalar + Float {
    fn from_f64(value: f64) -> Self;
}

macro_rules! impl_float_scalar {
    ($t:ty) => {
        impl Scalar for $t {
            #[inline]
            fn from_count(count: u64) -> Self {
                count as $t
            }

            #[inline]
            fn to_f64(&self) -> f64 {
                *self as f64
            }

            #[inline]
            fn is_finite_value(&self) -> bool {
                self.is_finite()
            }

            fn parse_decimal(text: &str) -> Option<Self> {
                text.parse::<$t>().ok().filter(|v| v.is_finite())
            }

            fn to_decimal(&self) -> String {
                let magnitude = self.abs();
                if magnitude == 0.0 || (1e-4..1e16).contains(&magnitude) {
                    format!("{}", self)
                } else {
                    format!("{:e}", self)
                }
            }
        }

        impl Real for $t {
            #[inline]
            fn from_f64(value: f64) -> Self {
                value as $t
            }
        }
    };
}

impl_float_scalar!(f32);
impl_float_scalar!(f64);

impl Scalar for BigRational {
    fn from_count(count: u64) -> Self {
        BigRational::from_integer(BigInt::from(count))
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse_decimal(text: &str) -> Option<Self> {
        let (mantissa, exponent) = match text.find(['e', 'E']) {
            Some(pos) => (&text[..pos], text[pos + 1..].parse::<i64>().ok()?),
            None => (text, 0),
        };
        let (int_part, frac_part) = match mantissa.find('.') {
            Some(pos) => (&mantissa[..pos], &mantissa[pos + 1..]),
            None => (mantissa, ""),
        };
        let digits = format!("{int_part}{frac_part}");
        if digits.is_empty() || !digits.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let shift = exponent.checked_sub(frac_part.len() as i64)?;
        // Bound the power so absurd exponents cannot exhaust memory.
        if shift.unsigned_abs() > 10_000 {
            return None;
        }
        let numer: BigInt = digits.parse().ok()?;
        let ten = BigInt::from(10u32);
        let power = num_traits::pow(ten, shift.unsigned_abs() as usize);
        Some(if shift >= 0 {
            BigRational::from_integer(numer * power)
        } else {
            BigRational::new(numer, power)
        })
    }

    fn to_decimal(&self) -> String {
        let denom = self.denom().clone();
        let two = BigInt::from(2u32);
        let five = BigInt::from(5u32);
        let mut rest = denom.clone();
        let (mut twos, mut fives) = (0usize, 0usize);
        while (&rest % &two).is_zero() {
            rest /= &two;
            twos += 1;
        }
        while (&rest % &five).is_zero() {
            rest /= &five;
            fives += 1;
        }
        if !rest.is_one() {
            // Not a terminating decimal; fall back to the nearest double.
            return Scalar::to_f64(self).to_decimal();
        }
        let places = twos.max(fives);
        let scale = num_traits::pow(BigInt::from(10u32), places);
        let scaled = self.numer() * (scale / denom);
        let negative = scaled.is_negative();
        let mut digits = scaled.abs().to_string();
        if places > 0 {
            if digits.len() <= places {
                digits = format!("{}{}", "0".repeat(places + 1 - digits.len()), digits);
            }
            digits.insert(digits.len() - places, '.');
        }
        if negative {
            format!("-{digits}")
        } else {
            digits
        }
    }
}
