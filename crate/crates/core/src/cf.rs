//! Continued fractions and explicit members of `S₁(ψ)`.

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::psi::{ApproxFn, PsiError, PsiValue};
use crate::rational::{nearest_int_dist, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CfError {
    #[error("at least one partial quotient is required")]
    ZeroTerms,
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error(transparent)]
    Psi(#[from] PsiError),
}

/// A finite continued fraction `[a₀; a₁, …, a_k]` and its convergents.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CfExpansion {
    pub partial_quotients: Vec<BigInt>,
    /// `(p_k, q_k)` for each prefix of the quotients.
    pub convergents: Vec<(BigInt, BigInt)>,
}

impl CfExpansion {
    pub fn from_quotients(quotients: Vec<BigInt>) -> Self {
        let mut convergents = Vec::with_capacity(quotients.len());
        let (mut p_prev, mut q_prev) = (BigInt::one(), BigInt::zero());
        let (mut p, mut q) = (BigInt::zero(), BigInt::one());
        for a in &quotients {
            let p_next = a * &p_prev + &p;
            let q_next = a * &q_prev + &q;
            p = std::mem::replace(&mut p_prev, p_next);
            q = std::mem::replace(&mut q_prev, q_next);
            convergents.push((p_prev.clone(), q_prev.clone()));
        }
        CfExpansion {
            partial_quotients: quotients,
            convergents,
        }
    }

    pub fn convergent(&self, k: usize) -> Rational {
        let (p, q) = &self.convergents[k];
        Rational::new(p.clone(), q.clone())
    }

    /// Value of the full expansion.
    pub fn value(&self) -> Rational {
        self.convergent(self.convergents.len() - 1)
    }

    /// `p_k q_{k-1} − p_{k-1} q_k = (−1)^(k-1)` for every consecutive pair.
    pub fn determinants_hold(&self) -> bool {
        self.convergents.windows(2).enumerate().all(|(k, w)| {
            let det = &w[1].0 * &w[0].1 - &w[0].0 * &w[1].1;
            let expected = if k % 2 == 0 { BigInt::one() } else { -BigInt::one() };
            det == expected
        })
    }
}

/// Expansion of `x` by the Euclidean algorithm, truncated to `k_max` quotients.
pub fn cf_convergents(x: &Rational, k_max: usize) -> Result<CfExpansion, CfError> {
    if k_max == 0 {
        return Err(CfError::ZeroTerms);
    }
    let mut quotients = Vec::new();
    let (mut num, mut den) = (x.numer().clone(), x.denom().clone());
    while quotients.len() < k_max && !den.is_zero() {
        let (a, r) = num.div_mod_floor(&den);
        quotients.push(a);
        num = std::mem::replace(&mut den, r);
    }
    Ok(CfExpansion::from_quotients(quotients))
}

/// One line of an `S₁(ψ)` certificate: `‖q x‖ < ψ(q)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S1Entry {
    #[serde(serialize_with = "ser_big")]
    pub q: BigInt,
    #[serde(with = "crate::rational::serde_rational")]
    pub dist: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub psi_lower: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub psi_upper: Rational,
}

impl S1Entry {
    /// Strict inequality against the lower end of the `ψ` enclosure.
    pub fn holds(&self) -> bool {
        self.dist < self.psi_lower
    }
}

fn ser_big<S: serde::Serializer>(n: &BigInt, s: S) -> Result<S::Ok, S::Error> {
    s.serialize_str(&n.to_string())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct S1Member {
    #[serde(with = "crate::rational::serde_rational")]
    pub x: Rational,
    #[serde(serialize_with = "ser_big_vec")]
    pub partial_quotients: Vec<BigInt>,
    pub certificate: Vec<S1Entry>,
    /// `1/(q_depth · q_{depth+1})`: every real within this radius of `x` with
    /// the same leading quotients satisfies the certificate for the listed `q`.
    #[serde(with = "crate::rational::serde_rational")]
    pub precision_radius: Rational,
}

fn ser_big_vec<S: serde::Serializer>(ns: &[BigInt], s: S) -> Result<S::Ok, S::Error> {
    s.collect_seq(ns.iter().map(|n| n.to_string()))
}

impl S1Member {
    /// Re-checks every certificate line from `x` alone.
    pub fn verify(&self) -> bool {
        self.certificate.iter().all(|e| {
            let d = nearest_int_dist(&(&self.x * Rational::from_integer(e.q.clone())));
            d == e.dist && e.holds()
        })
    }
}

/// Next quotient forcing `‖q x‖ < ψ(q)`: `⌈1/(q ψ_lo(q))⌉ + 1`.
fn forcing_quotient(q: &BigInt, psi: &PsiValue, arg: u64) -> Result<BigInt, CfError> {
    if !psi.lo.is_positive() {
        return Err(PsiError::ZeroValue(arg).into());
    }
    let bound = (Rational::from_integer(q.clone()) * &psi.lo).recip();
    Ok(bound.ceil().to_integer() + 1)
}

/// Builds `x = p_depth/q_depth` with `‖q_k x‖ < ψ(q_k)` for `k = 0, …, depth−1`.
///
/// Each quotient is `a_{k+1} = ⌈1/(q_k ψ(q_k))⌉ + 1`, so that
/// `‖q_k x‖ ≤ 1/q_{k+1} < 1/(a_{k+1} q_k) < ψ(q_k)`.
pub fn construct_s1_member(psi: &ApproxFn, depth: usize) -> Result<S1Member, CfError> {
    if depth == 0 {
        return Err(CfError::ZeroDepth);
    }
    psi.require_monotone()?;
    let mut quotients = vec![BigInt::zero()];
    let mut values = Vec::with_capacity(depth + 1);
    // Quotients a_1..=a_{depth+1}; the last only fixes the precision radius.
    for k in 0..=depth {
        let exp = CfExpansion::from_quotients(quotients.clone());
        let q = exp.convergents[k].1.clone();
        let qu = q.to_biguint().unwrap_or_else(BigUint::one);
        let value = psi.eval_big(&qu)?;
        let arg = u64::try_from(&qu).unwrap_or(u64::MAX);
        quotients.push(forcing_quotient(&q, &value, arg)?);
        values.push(value);
    }
    let full = CfExpansion::from_quotients(quotients.clone());
    let x = full.convergent(depth);
    let q_d = &full.convergents[depth].1;
    let q_next = &full.convergents[depth + 1].1;
    let precision_radius = Rational::new(BigInt::one(), q_d * q_next);
    let certificate = (0..depth)
        .map(|k| {
            let q = full.convergents[k].1.clone();
            let dist = nearest_int_dist(&(&x * Rational::from_integer(q.clone())));
            S1Entry {
                q,
                dist,
                psi_lower: values[k].lo.clone(),
                psi_upper: values[k].hi.clone(),
            }
        })
        .collect();
    quotients.truncate(depth + 1);
    Ok(S1Member {
        x,
        partial_quotients: quotients,
        certificate,
        precision_radius,
    })
}
