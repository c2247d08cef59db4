//! Exact rational helpers: parsing, integer parts and the distance to the
//! nearest integer.

use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Arbitrary-precision fraction, always kept in lowest terms with a positive
/// denominator.
pub type Rational = BigRational;

/// An exact point of the plane.
pub type RationalPair = (Rational, Rational);

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ParseRationalError {
    #[error("empty rational literal")]
    Empty,
    #[error("malformed rational literal `{0}`")]
    Malformed(String),
    #[error("zero denominator in `{0}`")]
    ZeroDenominator(String),
    #[error("expected a pair `a/b,c/d`, got `{0}`")]
    MalformedPair(String),
}

/// Parses `a/b`, an integer, or a finite decimal such as `-1.25` into an
/// exact rational.
pub fn parse_rational(text: &str) -> Result<Rational, ParseRationalError> {
    let s = text.trim();
    if s.is_empty() {
        return Err(ParseRationalError::Empty);
    }
    let bad = || ParseRationalError::Malformed(s.to_string());
    if let Some((num, den)) = s.split_once('/') {
        let num = BigInt::from_str(num.trim()).map_err(|_| bad())?;
        let den = BigInt::from_str(den.trim()).map_err(|_| bad())?;
        if den.is_zero() {
            return Err(ParseRationalError::ZeroDenominator(s.to_string()));
        }
        return Ok(Rational::new(num, den));
    }
    if let Some((int_part, frac_part)) = s.split_once('.') {
        if frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad());
        }
        let negative = int_part.trim_start().starts_with('-');
        let int_digits = int_part.trim_start_matches(['-', '+']);
        let int_val = if int_digits.is_empty() {
            BigInt::zero()
        } else {
            BigInt::from_str(int_digits).map_err(|_| bad())?
        };
        let frac_val = BigInt::from_str(frac_part).map_err(|_| bad())?;
        let scale = num_traits::pow(BigInt::from(10u32), frac_part.len());
        let magnitude = Rational::new(int_val * &scale + frac_val, scale);
        return Ok(if negative { -magnitude } else { magnitude });
    }
    BigInt::from_str(s).map(Rational::from_integer).map_err(|_| bad())
}

/// Parses a comma separated pair `a/b,c/d`.
pub fn parse_pair(text: &str) -> Result<RationalPair, ParseRationalError> {
    let (a, b) = text
        .split_once(',')
        .ok_or_else(|| ParseRationalError::MalformedPair(text.to_string()))?;
    Ok((parse_rational(a)?, parse_rational(b)?))
}

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `{x} = x - [x]`, always in `[0, 1)`.
pub fn frac(x: &Rational) -> Rational {
    x - x.floor()
}

/// Nearest integer to `x`; a tie at one half goes to the lower integer.
pub fn nearest_integer(x: &Rational) -> BigInt {
    let floor = x.floor();
    let f = x - &floor;
    let half = rat(1, 2);
    let base = floor.to_integer();
    if f > half {
        base + 1
    } else {
        base
    }
}

/// `‖x‖`, the distance from `x` to the nearest integer.
pub fn nearest_int_dist(x: &Rational) -> Rational {
    let f = frac(x);
    let g = Rational::one() - &f;
    if f <= g {
        f
    } else {
        g
    }
}

/// Integer-valued `‖n/d‖` numerator for a fraction with positive denominator:
/// returns `min(n mod d, d - n mod d)` so that `‖n/d‖ = result / d`.
pub fn nearest_int_dist_num(n: &BigInt, d: &BigInt) -> BigInt {
    let r = n.mod_floor(d);
    let other = d - &r;
    if r <= other {
        r
    } else {
        other
    }
}

pub fn to_f64(x: &Rational) -> f64 {
    x.to_f64().unwrap_or_else(|| {
        // Both parts may overflow f64 even when the quotient is representable.
        let shift = x.numer().bits().max(x.denom().bits()).saturating_sub(1000) as usize;
        let n = (x.numer() >> shift).to_f64().unwrap_or(f64::NAN);
        let d = (x.denom() >> shift).to_f64().unwrap_or(f64::NAN);
        n / d
    })
}

/// Exact rational from a finite `f64`.
pub fn from_f64(x: f64) -> Option<Rational> {
    Rational::from_float(x)
}

pub fn abs(x: &Rational) -> Rational {
    x.abs()
}

/// Renders `a/b`, or `a` when the denominator is one.
pub fn display(x: &Rational) -> String {
    if x.denom().is_one() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// Serde adapter storing a rational as its `a/b` string.
pub mod serde_rational {
    use super::{display, parse_rational, Rational};
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(x: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&display(x))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let text = String::deserialize(d)?;
        parse_rational(&text).map_err(serde::de::Error::custom)
    }

    pub mod vec {
        use super::super::{display, parse_rational, Rational};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(xs: &[Rational], s: S) -> Result<S::Ok, S::Error> {
            xs.iter().map(display).collect::<Vec<_>>().serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Rational>, D::Error> {
            let texts = Vec::<String>::deserialize(d)?;
            texts
                .iter()
                .map(|t| parse_rational(t).map_err(serde::de::Error::custom))
                .collect()
        }
    }

    pub mod pair {
        use super::super::{display, parse_rational, RationalPair};
        use serde::{Deserialize, Deserializer, Serialize, Serializer};

        pub fn serialize<S: Serializer>(x: &RationalPair, s: S) -> Result<S::Ok, S::Error> {
            [display(&x.0), display(&x.1)].serialize(s)
        }

        pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<RationalPair, D::Error> {
            let [a, b] = <[String; 2]>::deserialize(d)?;
            let parse = |t: &str| parse_rational(t).map_err(serde::de::Error::custom);
            Ok((parse(&a)?, parse(&b)?))
        }
    }
}
