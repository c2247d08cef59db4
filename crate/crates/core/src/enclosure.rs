//! Rigorous rational enclosures for irrational quantities.
//!
//! Powers with rational exponents are bracketed through integer `k`-th roots,
//! so every bound here is exact arithmetic on integers: no floating point is
//! involved in producing or comparing an enclosure.

use std::cmp::Ordering;
use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::rational::{to_f64, Rational};

/// A closed interval `[lo, hi]` of rationals known to contain a real value.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Enclosure {
    pub lo: Rational,
    pub hi: Rational,
}

impl Enclosure {
    pub fn exact(x: Rational) -> Self {
        Enclosure { lo: x.clone(), hi: x }
    }

    pub fn new(lo: Rational, hi: Rational) -> Self {
        debug_assert!(lo <= hi);
        Enclosure { lo, hi }
    }

    pub fn is_exact(&self) -> bool {
        self.lo == self.hi
    }

    pub fn width(&self) -> Rational {
        &self.hi - &self.lo
    }

    pub fn midpoint(&self) -> Rational {
        (&self.lo + &self.hi) / Rational::from_integer(BigInt::from(2))
    }

    /// Product of two enclosures of non-negative values.
    pub fn mul_nonneg(&self, other: &Enclosure) -> Enclosure {
        Enclosure::new(&self.lo * &other.lo, &self.hi * &other.hi)
    }

    pub fn scale(&self, k: &Rational) -> Enclosure {
        if k.is_negative() {
            Enclosure::new(&self.hi * k, &self.lo * k)
        } else {
            Enclosure::new(&self.lo * k, &self.hi * k)
        }
    }

    /// Reciprocal of an enclosure of a strictly positive value.
    pub fn recip_pos(&self) -> Enclosure {
        assert!(self.lo.is_positive(), "reciprocal of a non-positive enclosure");
        Enclosure::new(self.hi.recip(), self.lo.recip())
    }

    pub fn to_f64(&self) -> f64 {
        to_f64(&self.midpoint())
    }
}

/// `n^(1/k)` bracketed to within `2^-bits`; exact when `n` is a perfect power.
pub fn root_enclosure(n: &BigUint, k: u32, bits: u32) -> Enclosure {
    assert!(k >= 1);
    if k == 1 {
        return Enclosure::exact(Rational::from_integer(BigInt::from(n.clone())));
    }
    let r = n.nth_root(k);
    if num_traits::pow(r.clone(), k as usize) == *n {
        return Enclosure::exact(Rational::from_integer(BigInt::from(r)));
    }
    let scaled: BigUint = n << (bits as usize * k as usize);
    let r = scaled.nth_root(k);
    let den = BigInt::one() << bits as usize;
    Enclosure::new(
        Rational::new(BigInt::from(r.clone()), den.clone()),
        Rational::new(BigInt::from(r + 1u32), den),
    )
}

/// `base^exp` for a positive integer base and rational exponent.
pub fn pow_enclosure(base: &BigUint, exp: Ratio<i64>, bits: u32) -> Enclosure {
    assert!(!base.is_zero(), "zero base");
    let num = *exp.numer();
    let den = *exp.denom() as u32;
    let magnitude = num_traits::pow(base.clone(), num.unsigned_abs() as usize);
    let root = root_enclosure(&magnitude, den, bits);
    if num < 0 {
        root.recip_pos()
    } else {
        root
    }
}

/// `⌊base^exp⌋` for a non-negative rational exponent, computed exactly.
pub fn floor_pow(base: u64, exp: Ratio<i64>) -> BigUint {
    assert!(*exp.numer() >= 0);
    let n = num_traits::pow(BigUint::from(base), *exp.numer() as usize);
    n.nth_root(*exp.denom() as u32)
}

/// `⌈k · base^exp⌉` for non-negative `k` and exponent, computed exactly.
pub fn ceil_scaled_pow(k: u64, base: u64, exp: Ratio<i64>) -> BigUint {
    assert!(*exp.numer() >= 0);
    let den = *exp.denom() as u32;
    let v = num_traits::pow(BigUint::from(k), den as usize)
        * num_traits::pow(BigUint::from(base), *exp.numer() as usize);
    let r = v.nth_root(den);
    if num_traits::pow(r.clone(), den as usize) == v {
        r
    } else {
        r + 1u32
    }
}

/// A product `∏ bᵢ^eᵢ` of positive integer bases raised to rational powers.
///
/// Used for the construction constants, whose exact values are generally
/// irrational. Comparisons against rationals are exact: both sides are raised
/// to a common power that clears every exponent denominator.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Monomial {
    factors: Vec<(u64, Ratio<i64>)>,
}

impl Monomial {
    pub fn one() -> Self {
        Monomial { factors: Vec::new() }
    }

    pub fn power(base: u64, exp: Ratio<i64>) -> Self {
        Monomial::one().times(base, exp)
    }

    /// Multiplies by `base^exp`, merging equal bases.
    pub fn times(mut self, base: u64, exp: Ratio<i64>) -> Self {
        assert!(base >= 1, "monomial bases must be positive");
        if base == 1 || exp.is_zero() {
            return self;
        }
        match self.factors.iter_mut().find(|(b, _)| *b == base) {
            Some((_, e)) => *e += exp,
            None => self.factors.push((base, exp)),
        }
        self.factors.retain(|(_, e)| !e.is_zero());
        self.factors.sort_by_key(|(b, _)| *b);
        self
    }

    pub fn mul(&self, other: &Monomial) -> Monomial {
        other
            .factors
            .iter()
            .fold(self.clone(), |acc, &(b, e)| acc.times(b, e))
    }

    pub fn pow(&self, exp: Ratio<i64>) -> Monomial {
        Monomial {
            factors: self
                .factors
                .iter()
                .map(|&(b, e)| (b, e * exp))
                .filter(|(_, e)| !e.is_zero())
                .collect(),
        }
    }

    pub fn factors(&self) -> &[(u64, Ratio<i64>)] {
        &self.factors
    }

    /// Least common multiple of the exponent denominators.
    pub fn clearing_power(&self) -> u32 {
        self.factors
            .iter()
            .fold(1i64, |acc, (_, e)| acc.lcm(e.denom())) as u32
    }

    /// The exact value when every exponent is an integer.
    pub fn to_rational(&self) -> Option<Rational> {
        if self.clearing_power() != 1 {
            return None;
        }
        Some(self.integer_power_value(1))
    }

    /// `self^d` where `d` clears all exponent denominators.
    fn integer_power_value(&self, d: u32) -> Rational {
        let mut num = BigInt::one();
        let mut den = BigInt::one();
        for &(b, e) in &self.factors {
            let k = (e * Ratio::from_integer(d as i64)).to_integer();
            let p = num_traits::pow(BigInt::from(b), k.unsigned_abs() as usize);
            if k >= 0 {
                num *= p;
            } else {
                den *= p;
            }
        }
        Rational::new(num, den)
    }

    pub fn ln(&self) -> f64 {
        self.factors
            .iter()
            .map(|&(b, e)| (b as f64).ln() * (*e.numer() as f64 / *e.denom() as f64))
            .sum()
    }

    pub fn to_f64(&self) -> f64 {
        self.ln().exp()
    }

    /// Rigorous enclosure with relative accuracy of roughly `2^-bits`.
    pub fn enclosure(&self, bits: u32) -> Enclosure {
        let mut acc = Enclosure::exact(Rational::one());
        for &(b, e) in &self.factors {
            // Extra bits compensate for the magnitude of large powers.
            let mag = (e.numer().unsigned_abs() * 64 / *e.denom() as u64) as u32;
            let f = pow_enclosure(&BigUint::from(b), e, bits + mag + 8);
            acc = acc.mul_nonneg(&f);
        }
        acc
    }

    /// Exact comparison of a non-negative rational with this (positive) value.
    pub fn cmp_rational(&self, x: &Rational) -> Ordering {
        assert!(!x.is_negative());
        let d = self.clearing_power();
        let lhs = num_traits::pow(x.clone(), d as usize);
        lhs.cmp(&self.integer_power_value(d))
    }
}

impl fmt::Display for Monomial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        let parts: Vec<String> = self
            .factors
            .iter()
            .map(|(b, e)| {
                if e.is_integer() {
                    format!("{b}^({})", e.numer())
                } else {
                    format!("{b}^({}/{})", e.numer(), e.denom())
                }
            })
            .collect();
        write!(f, "{}", parts.join("·"))
    }
}

/// The rational with the smallest denominator strictly inside `(lo, hi)`.
pub fn simplest_between(lo: &Rational, hi: &Rational) -> Rational {
    assert!(lo < hi, "empty interval");
    simplest_in(lo, Some(hi))
}

fn simplest_in(lo: &Rational, hi: Option<&Rational>) -> Rational {
    let fl = lo.floor();
    let candidate = &fl + Rational::one();
    match hi {
        None => candidate,
        Some(h) if candidate < *h => {
            // Prefer the integer of least magnitude when the interval spans zero.
            if lo.is_negative() && h.is_positive() {
                Rational::zero()
            } else if h.is_negative() || h.is_zero() {
                let top = (h - Rational::one()).ceil();
                if top > *lo {
                    top
                } else {
                    candidate
                }
            } else {
                candidate
            }
        }
        Some(h) => {
            // lo and hi share the integer part fl, with fl <= lo < hi <= fl + 1.
            let inner_lo = (h - &fl).recip();
            let gap = lo - &fl;
            let inner = if gap.is_zero() {
                simplest_in(&inner_lo, None)
            } else {
                simplest_in(&inner_lo, Some(&gap.recip()))
            };
            fl + inner.recip()
        }
    }
}

pub fn big_to_u128(n: &BigInt) -> Option<u128> {
    n.to_u128()
}
