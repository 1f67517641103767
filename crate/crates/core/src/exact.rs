//! Exact rational scalars for reward coefficients and reward values.
//!
//! Rewards are piecewise rational in their coefficients, so they are kept as
//! `i64` fractions end to end and only converted to `f64` at the optimizer
//! boundary. On the wire an [`Exact`] is a string: `"3"`, `"-4/5"`, or a
//! decimal such as `"0.4"`. JSON numbers are accepted on input and read
//! through their shortest decimal form, so `0.4` becomes exactly `2/5`.

use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::str::FromStr;

use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct Exact(pub Rational64);

impl Exact {
    pub const ZERO: Exact = Exact(Rational64::new_raw(0, 1));
    pub const ONE: Exact = Exact(Rational64::new_raw(1, 1));

    pub fn new(numer: i64, denom: i64) -> Self {
        Exact(Rational64::new(numer, denom))
    }

    pub fn int(v: i64) -> Self {
        Exact(Rational64::from_integer(v))
    }

    pub fn to_f64(self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn is_zero(self) -> bool {
        self.0.is_zero()
    }

    pub fn max(self, other: Exact) -> Exact {
        if self >= other {
            self
        } else {
            other
        }
    }
}

impl From<i64> for Exact {
    fn from(v: i64) -> Self {
        Exact::int(v)
    }
}

impl Add for Exact {
    type Output = Exact;
    fn add(self, rhs: Exact) -> Exact {
        Exact(self.0 + rhs.0)
    }
}

impl Sub for Exact {
    type Output = Exact;
    fn sub(self, rhs: Exact) -> Exact {
        Exact(self.0 - rhs.0)
    }
}

impl Mul for Exact {
    type Output = Exact;
    fn mul(self, rhs: Exact) -> Exact {
        Exact(self.0 * rhs.0)
    }
}

impl Neg for Exact {
    type Output = Exact;
    fn neg(self) -> Exact {
        Exact(-self.0)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if *self.0.denom() == 1 {
            write!(f, "{}", self.0.numer())
        } else {
            write!(f, "{}/{}", self.0.numer(), self.0.denom())
        }
    }
}

impl fmt::Debug for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseExactError(String);

impl fmt::Display for ParseExactError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "not an exact rational: {:?}", self.0)
    }
}

impl std::error::Error for ParseExactError {}

impl FromStr for Exact {
    type Err = ParseExactError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseExactError(s.to_string());
        let s = s.trim();
        if let Some((n, d)) = s.split_once('/') {
            let n: i64 = n.trim().parse().map_err(|_| err())?;
            let d: i64 = d.trim().parse().map_err(|_| err())?;
            if d == 0 {
                return Err(err());
            }
            return Ok(Exact::new(n, d));
        }
        // Plain decimal, optionally with an exponent.
        let (mantissa, exp) = match s.find(['e', 'E']) {
            Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| err())?),
            None => (s, 0),
        };
        let (neg, digits) = match mantissa.strip_prefix('-') {
            Some(rest) => (true, rest),
            None => (false, mantissa.strip_prefix('+').unwrap_or(mantissa)),
        };
        let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
        if int_part.is_empty() && frac_part.is_empty() {
            return Err(err());
        }
        if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
            return Err(err());
        }
        let joined = format!("{int_part}{frac_part}");
        let mut numer: i64 = joined.parse().map_err(|_| err())?;
        let scale = exp - frac_part.len() as i32;
        let mut denom: i64 = 1;
        let pow10 = |k: u32| 10i64.checked_pow(k).ok_or_else(err);
        if scale >= 0 {
            numer = numer.checked_mul(pow10(scale as u32)?).ok_or_else(err)?;
        } else {
            denom = pow10((-scale) as u32)?;
        }
        if neg {
            numer = -numer;
        }
        Ok(Exact::new(numer, denom))
    }
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct ExactVisitor;

        impl Visitor<'_> for ExactVisitor {
            type Value = Exact;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a rational as a string (\"2/5\", \"0.4\") or a number")
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Exact, E> {
                v.parse().map_err(E::custom)
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Exact, E> {
                Ok(Exact::int(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Exact, E> {
                i64::try_from(v).map(Exact::int).map_err(E::custom)
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Exact, E> {
                if !v.is_finite() {
                    return Err(E::custom("non-finite coefficient"));
                }
                format!("{v}").parse().map_err(E::custom)
            }
        }

        deserializer.deserialize_any(ExactVisitor)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_exactly() {
        assert_eq!("0.4".parse::<Exact>().unwrap(), Exact::new(2, 5));
        assert_eq!("-0.8".parse::<Exact>().unwrap(), Exact::new(-4, 5));
        assert_eq!("1e-2".parse::<Exact>().unwrap(), Exact::new(1, 100));
        assert_eq!("3/6".parse::<Exact>().unwrap(), Exact::new(1, 2));
        assert!("abc".parse::<Exact>().is_err());
        assert!("1/0".parse::<Exact>().is_err());
    }

    #[test]
    fn json_numbers_become_exact() {
        let v: Exact = serde_json::from_str("0.1").unwrap();
        assert_eq!(v, Exact::new(1, 10));
        let v: Exact = serde_json::from_str("\"11/10\"").unwrap();
        assert_eq!(serde_json::to_string(&v).unwrap(), "\"11/10\"");
    }
}
