//! Approximating functions `ψ: ℕ → [0, ∞)`.
//!
//! Three families are supported: `κ·q^(−τ)`, `κ·q^(−τ)·(log(q+e))^(−β)` and
//! explicit finite tables. Power-law values are exact (or bracketed by integer
//! roots for fractional `τ`); the logarithmic family is evaluated in `f64` and
//! widened to an enclosure of relative radius [`LOG_RELATIVE_RADIUS`].

use std::fmt;

use num_bigint::BigUint;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::enclosure::{pow_enclosure, Enclosure};
use crate::rational::{display, parse_rational, serde_rational, to_f64, ParseRationalError, Rational};

/// Relative half-width of enclosures produced from `f64` evaluations.
pub const LOG_RELATIVE_RADIUS: f64 = 1e-12;

/// Bits of precision used for fractional-exponent power enclosures.
pub const POWER_BITS: u32 = 128;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PsiError {
    #[error("κ must be positive, got {0}")]
    NonPositiveKappa(String),
    #[error("τ must be non-negative, got {0}")]
    NegativeTau(String),
    #[error("table must be non-empty")]
    EmptyTable,
    #[error("table entry ψ({q}) = {value} is negative")]
    NegativeEntry { q: u64, value: String },
    #[error("table is not monotone: ψ({q}) = {prev} < ψ({next_q}) = {next}")]
    NonMonotone {
        q: u64,
        prev: String,
        next_q: u64,
        next: String,
    },
    #[error("approximating function is not monotonically decreasing")]
    NotDecreasing,
    #[error("ψ({q}) is outside the table range 1..={len}")]
    OutOfRange { q: u64, len: usize },
    #[error("ψ must be evaluated at q ≥ 1")]
    ZeroArgument,
    #[error("ψ({0}) = 0 but a strictly positive value is required")]
    ZeroValue(u64),
    #[error("exponent {0} must be a rational with a small denominator")]
    UnsupportedExponent(String),
    #[error("malformed ψ spec `{0}`; expected pow:κ,τ | powlog:κ,τ,β | table:v1,v2,...")]
    MalformedSpec(String),
    #[error(transparent)]
    Parse(#[from] ParseRationalError),
}

/// The value of `ψ(q)`: exact when `lo == hi`, otherwise a rigorous bracket.
pub type PsiValue = Enclosure;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PsiKind {
    Power {
        #[serde(with = "serde_rational")]
        kappa: Rational,
        #[serde(with = "serde_rational")]
        tau: Rational,
    },
    PowerLog {
        #[serde(with = "serde_rational")]
        kappa: Rational,
        #[serde(with = "serde_rational")]
        tau: Rational,
        #[serde(with = "serde_rational")]
        beta: Rational,
    },
    Table {
        #[serde(with = "serde_rational::vec")]
        values: Vec<Rational>,
    },
}

/// An approximating function together with its validated monotonicity flag.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ApproxFn {
    #[serde(flatten)]
    kind: PsiKind,
    monotone_decreasing: bool,
}

impl<'de> Deserialize<'de> for ApproxFn {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let kind = PsiKind::deserialize(d)?;
        ApproxFn::from_kind(kind).map_err(serde::de::Error::custom)
    }
}

fn small_ratio(x: &Rational) -> Result<Ratio<i64>, PsiError> {
    match (x.numer().to_i64(), x.denom().to_i64()) {
        (Some(n), Some(d)) if d <= 1 << 20 => Ok(Ratio::new(n, d)),
        _ => Err(PsiError::UnsupportedExponent(display(x))),
    }
}

impl ApproxFn {
    pub fn power(kappa: Rational, tau: Rational) -> Result<Self, PsiError> {
        Self::from_kind(PsiKind::Power { kappa, tau })
    }

    pub fn power_log(kappa: Rational, tau: Rational, beta: Rational) -> Result<Self, PsiError> {
        Self::from_kind(PsiKind::PowerLog { kappa, tau, beta })
    }

    /// A table `[ψ(1), ψ(2), …]`; entries must be non-negative and non-increasing.
    pub fn table(values: Vec<Rational>) -> Result<Self, PsiError> {
        Self::from_kind(PsiKind::Table { values })
    }

    pub fn from_kind(kind: PsiKind) -> Result<Self, PsiError> {
        let monotone_decreasing = match &kind {
            PsiKind::Power { kappa, tau } => {
                check_kappa_tau(kappa, tau)?;
                true
            }
            PsiKind::PowerLog { kappa, tau, beta } => {
                check_kappa_tau(kappa, tau)?;
                small_ratio(beta)?;
                // d/dq log ψ = −τ/q − β/((q+e) log(q+e)); the factor
                // (1 + e/q)·log(q+e) is at least 3.14 on q ≥ 1.
                !beta.is_negative() || to_f64(tau) * 3.0 >= to_f64(&beta.abs())
            }
            PsiKind::Table { values } => {
                validate_table(values)?;
                true
            }
        };
        Ok(ApproxFn {
            kind,
            monotone_decreasing,
        })
    }

    pub fn kind(&self) -> &PsiKind {
        &self.kind
    }

    pub fn is_monotone_decreasing(&self) -> bool {
        self.monotone_decreasing
    }

    pub fn require_monotone(&self) -> Result<(), PsiError> {
        if self.monotone_decreasing {
            Ok(())
        } else {
            Err(PsiError::NotDecreasing)
        }
    }

    /// Largest argument at which the function is defined.
    pub fn max_argument(&self) -> Option<u64> {
        match &self.kind {
            PsiKind::Table { values } => Some(values.len() as u64),
            _ => None,
        }
    }

    /// `ψ(q)` as an exact value or a rigorous enclosure.
    pub fn eval(&self, q: u64) -> Result<PsiValue, PsiError> {
        self.eval_big(&BigUint::from(q))
    }

    /// `ψ(q)` for arbitrarily large `q`.
    pub fn eval_big(&self, q: &BigUint) -> Result<PsiValue, PsiError> {
        if q.is_zero() {
            return Err(PsiError::ZeroArgument);
        }
        match &self.kind {
            PsiKind::Power { kappa, tau } => {
                let tau = small_ratio(tau)?;
                let p = pow_enclosure(q, -tau, POWER_BITS);
                Ok(p.scale(kappa))
            }
            PsiKind::PowerLog { kappa, tau, beta } => {
                let qf = q.to_f64().unwrap_or(f64::INFINITY);
                let l = (qf + std::f64::consts::E).ln();
                let v = to_f64(kappa) * qf.powf(-to_f64(tau)) * l.powf(-to_f64(beta));
                let widen = |f: f64| Rational::from_float(v * f).unwrap_or_else(Rational::zero);
                Ok(Enclosure::new(
                    widen(1.0 - LOG_RELATIVE_RADIUS),
                    widen(1.0 + LOG_RELATIVE_RADIUS),
                ))
            }
            PsiKind::Table { values } => {
                let idx = q.to_usize().filter(|&i| i <= values.len());
                idx.map(|i| Enclosure::exact(values[i - 1].clone()))
                    .ok_or(PsiError::OutOfRange {
                        q: q.to_u64().unwrap_or(u64::MAX),
                        len: values.len(),
                    })
            }
        }
    }

    /// Exact value when available.
    pub fn eval_exact(&self, q: u64) -> Result<Option<Rational>, PsiError> {
        let v = self.eval(q)?;
        Ok(if v.is_exact() { Some(v.lo) } else { None })
    }

    pub fn eval_f64(&self, q: u64) -> Result<f64, PsiError> {
        if q == 0 {
            return Err(PsiError::ZeroArgument);
        }
        let qf = q as f64;
        match &self.kind {
            PsiKind::Power { kappa, tau } => Ok(to_f64(kappa) * qf.powf(-to_f64(tau))),
            PsiKind::PowerLog { kappa, tau, beta } => {
                let l = (qf + std::f64::consts::E).ln();
                Ok(to_f64(kappa) * qf.powf(-to_f64(tau)) * l.powf(-to_f64(beta)))
            }
            PsiKind::Table { values } => values
                .get(q as usize - 1)
                .map(to_f64)
                .ok_or(PsiError::OutOfRange {
                    q,
                    len: values.len(),
                }),
        }
    }

    /// Power-law parameters `(τ, β)` for the parametric families.
    pub fn exponents(&self) -> Option<(Rational, Rational)> {
        match &self.kind {
            PsiKind::Power { tau, .. } => Some((tau.clone(), Rational::zero())),
            PsiKind::PowerLog { tau, beta, .. } => Some((tau.clone(), beta.clone())),
            PsiKind::Table { .. } => None,
        }
    }

    /// Parses `pow:κ,τ`, `powlog:κ,τ,β` or `table:v1,v2,...`.
    pub fn parse_spec(spec: &str) -> Result<Self, PsiError> {
        let malformed = || PsiError::MalformedSpec(spec.to_string());
        let (kind, args) = spec.split_once(':').ok_or_else(malformed)?;
        let nums = args
            .split(',')
            .map(parse_rational)
            .collect::<Result<Vec<_>, _>>()?;
        match (kind.trim(), nums.as_slice()) {
            ("pow", [k, t]) => Self::power(k.clone(), t.clone()),
            ("powlog", [k, t, b]) => Self::power_log(k.clone(), t.clone(), b.clone()),
            ("table", values) if !values.is_empty() => Self::table(values.to_vec()),
            _ => Err(malformed()),
        }
    }
}

impl fmt::Display for ApproxFn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.kind {
            PsiKind::Power { kappa, tau } => write!(f, "pow:{},{}", display(kappa), display(tau)),
            PsiKind::PowerLog { kappa, tau, beta } => {
                write!(f, "powlog:{},{},{}", display(kappa), display(tau), display(beta))
            }
            PsiKind::Table { values } => {
                let parts: Vec<String> = values.iter().map(display).collect();
                write!(f, "table:{}", parts.join(","))
            }
        }
    }
}

fn check_kappa_tau(kappa: &Rational, tau: &Rational) -> Result<(), PsiError> {
    if !kappa.is_positive() {
        return Err(PsiError::NonPositiveKappa(display(kappa)));
    }
    if tau.is_negative() {
        return Err(PsiError::NegativeTau(display(tau)));
    }
    small_ratio(tau)?;
    Ok(())
}

fn validate_table(values: &[Rational]) -> Result<(), PsiError> {
    if values.is_empty() {
        return Err(PsiError::EmptyTable);
    }
    for (idx, v) in values.iter().enumerate() {
        if v.is_negative() {
            return Err(PsiError::NegativeEntry {
                q: idx as u64 + 1,
                value: display(v),
            });
        }
    }
    for (idx, w) in values.windows(2).enumerate() {
        if w[0] < w[1] {
            return Err(PsiError::NonMonotone {
                q: idx as u64 + 1,
                prev: display(&w[0]),
                next_q: idx as u64 + 2,
                next: display(&w[1]),
            });
        }
    }
    Ok(())
}

/// `2^t` as a `u64`, panicking past the representable range.
pub fn dyadic(t: u32) -> u64 {
    assert!(t < 63, "dyadic level {t} too large");
    1u64 << t
}

impl PsiValue {
    pub fn lower(&self) -> &Rational {
        &self.lo
    }

    pub fn upper(&self) -> &Rational {
        &self.hi
    }

    pub fn is_zero(&self) -> bool {
        self.hi.is_zero()
    }

    pub fn is_at_most_one(&self) -> bool {
        self.hi <= Rational::one()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::{int, rat};

    #[test]
    fn eval_examples() {
        let p = ApproxFn::power(int(1), int(3)).unwrap();
        assert_eq!(p.eval_exact(2).unwrap(), Some(rat(1, 8)));
        let c = ApproxFn::power(int(1), int(0)).unwrap();
        assert_eq!(c.eval_exact(100).unwrap(), Some(int(1)));
        let t = ApproxFn::table(vec![rat(1, 2), rat(1, 4), rat(1, 8)]).unwrap();
        assert_eq!(t.eval_exact(2).unwrap(), Some(rat(1, 4)));
        assert!(matches!(t.eval(4), Err(PsiError::OutOfRange { q: 4, len: 3 })));
        assert!(matches!(t.eval(0), Err(PsiError::ZeroArgument)));
    }

    #[test]
    fn fractional_tau_is_bracketed() {
        let p = ApproxFn::power(int(1), rat(3, 2)).unwrap();
        let v = p.eval(2).unwrap();
        assert!(!v.is_exact());
        // 2^(-3/2) = 0.35355...
        assert!(v.lo < rat(35356, 100_000) && v.hi > rat(35355, 100_000));
        assert!((v.to_f64() - 2f64.powf(-1.5)).abs() < 1e-15);
    }

    #[test]
    fn power_log_encloses_float_value() {
        let p = ApproxFn::power_log(int(1), int(1), int(2)).unwrap();
        let v = p.eval(10).unwrap();
        let f = p.eval_f64(10).unwrap();
        assert!(to_f64(&v.lo) <= f && f <= to_f64(&v.hi));
        assert!(p.is_monotone_decreasing());
        let rising = ApproxFn::power_log(int(1), int(0), int(-1)).unwrap();
        assert!(!rising.is_monotone_decreasing());
    }

    #[test]
    fn table_validation() {
        assert!(matches!(
            ApproxFn::table(vec![rat(1, 4), rat(1, 2)]),
            Err(PsiError::NonMonotone { q: 1, .. })
        ));
        assert!(matches!(ApproxFn::table(vec![]), Err(PsiError::EmptyTable)));
        assert!(ApproxFn::table(vec![int(0), int(0)]).is_ok());
        assert!(matches!(
            ApproxFn::power(int(0), int(1)),
            Err(PsiError::NonPositiveKappa(_))
        ));
        assert!(matches!(ApproxFn::power(int(1), int(-1)), Err(PsiError::NegativeTau(_))));
    }

    #[test]
    fn spec_and_serde_round_trip() {
        for spec in ["pow:1,3", "powlog:1/2,1,2", "table:1/2,1/4,1/8"] {
            let psi = ApproxFn::parse_spec(spec).unwrap();
            assert_eq!(psi.to_string(), spec);
            let json = serde_json::to_string(&psi).unwrap();
            let back: ApproxFn = serde_json::from_str(&json).unwrap();
            assert_eq!(back, psi);
        }
        let json = r#"{"kind":"power","kappa":"1","tau":"3"}"#;
        let psi: ApproxFn = serde_json::from_str(json).unwrap();
        assert_eq!(psi.eval_exact(2).unwrap(), Some(rat(1, 8)));
        let bad = r#"{"kind":"table","values":["1/4","1/2"]}"#;
        assert!(serde_json::from_str::<ApproxFn>(bad).is_err());
        assert!(ApproxFn::parse_spec("pow:1").is_err());
        assert!(ApproxFn::parse_spec("exp:1,2").is_err());
    }
}
