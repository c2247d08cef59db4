//! Volume-sum dichotomies: analytic classification for parametric `ψ` and
//! dyadic checkpoint sums for everything else.
//!
//! For `ψ(q) = κ q^(−τ) (log(q+e))^(−β)` every series here has terms of order
//! `q^A (log q)^B`. Cauchy condensation turns the question into the geometric
//! ratio `2^(A+1)`, so the series converges iff `A < −1`, or `A = −1` and `B < −1`.

use num_traits::{One, Signed, Zero};
use serde::Serialize;
use thiserror::Error;

use crate::psi::{ApproxFn, PsiError};
use crate::rational::{display, int, to_f64, Rational};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SeriesError {
    #[error("s = {s} is outside the admissible range {range} for {kind}")]
    SOutOfRange {
        s: String,
        range: &'static str,
        kind: &'static str,
    },
    #[error("τ = {0} must be non-negative")]
    NegativeTau(String),
    #[error(transparent)]
    Psi(#[from] PsiError),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum SeriesKind {
    /// `Σ q^(1−s) ψ^s`
    Jarnik1d {
        #[serde(with = "crate::rational::serde_rational")]
        s: Rational,
    },
    /// `Σ q^(2−s) ψ^s`
    Simultaneous2d {
        #[serde(with = "crate::rational::serde_rational")]
        s: Rational,
    },
    /// `Σ ψ(q) log q`
    Gallagher2d,
    /// `Σ q^(2−s) ψ^(s−1)`, `s ∈ (1, 2)`
    MultPlanar {
        #[serde(with = "crate::rational::serde_rational")]
        s: Rational,
    },
    /// `Σ q^(1−s) ψ^s`, `s ∈ (0, 1)`
    Curve {
        #[serde(with = "crate::rational::serde_rational")]
        s: Rational,
    },
}

impl SeriesKind {
    pub fn name(&self) -> &'static str {
        match self {
            SeriesKind::Jarnik1d { .. } => "jarnik-1d",
            SeriesKind::Simultaneous2d { .. } => "simultaneous-2d",
            SeriesKind::Gallagher2d => "gallagher-2d",
            SeriesKind::MultPlanar { .. } => "mult-planar",
            SeriesKind::Curve { .. } => "curve",
        }
    }

    /// Builds a kind from its name and (where needed) `s`.
    pub fn from_name(name: &str, s: Option<Rational>) -> Option<Self> {
        let s_or = |s: Option<Rational>| s;
        Some(match name {
            "jarnik-1d" => SeriesKind::Jarnik1d { s: s_or(s)? },
            "simultaneous-2d" => SeriesKind::Simultaneous2d { s: s_or(s)? },
            "gallagher-2d" => SeriesKind::Gallagher2d,
            "mult-planar" => SeriesKind::MultPlanar { s: s_or(s)? },
            "curve" => SeriesKind::Curve { s: s_or(s)? },
            _ => return None,
        })
    }

    pub fn s(&self) -> Option<&Rational> {
        match self {
            SeriesKind::Jarnik1d { s }
            | SeriesKind::Simultaneous2d { s }
            | SeriesKind::MultPlanar { s }
            | SeriesKind::Curve { s } => Some(s),
            SeriesKind::Gallagher2d => None,
        }
    }

    pub fn validate(&self) -> Result<(), SeriesError> {
        let out = |s: &Rational, range| SeriesError::SOutOfRange {
            s: display(s),
            range,
            kind: self.name(),
        };
        match self {
            SeriesKind::Jarnik1d { s } | SeriesKind::Simultaneous2d { s } if !s.is_positive() => {
                Err(out(s, "(0, ∞)"))
            }
            SeriesKind::MultPlanar { s } if !(*s > int(1) && *s < int(2)) => Err(out(s, "(1, 2)")),
            SeriesKind::Curve { s } if !(s.is_positive() && *s < int(1)) => Err(out(s, "(0, 1)")),
            _ => Ok(()),
        }
    }

    /// The term as a function of `q` and `ψ(q)`.
    pub fn term(&self, q: f64, psi: f64) -> f64 {
        let pow = |x: f64, e: f64| if x == 0.0 && e > 0.0 { 0.0 } else { x.powf(e) };
        match self {
            SeriesKind::Jarnik1d { s } | SeriesKind::Curve { s } => {
                let s = to_f64(s);
                q.powf(1.0 - s) * pow(psi, s)
            }
            SeriesKind::Simultaneous2d { s } => {
                let s = to_f64(s);
                q.powf(2.0 - s) * pow(psi, s)
            }
            SeriesKind::Gallagher2d => psi * q.ln(),
            SeriesKind::MultPlanar { s } => {
                let s = to_f64(s);
                q.powf(2.0 - s) * pow(psi, s - 1.0)
            }
        }
    }

    /// Exponents `(A, B)` with term `≍ q^A (log q)^B` for `ψ = q^(−τ) log^(−β)`.
    pub fn term_exponents(&self, tau: &Rational, beta: &Rational) -> (Rational, Rational) {
        match self {
            SeriesKind::Jarnik1d { s } | SeriesKind::Curve { s } => {
                (int(1) - s - tau * s, -(beta * s))
            }
            SeriesKind::Simultaneous2d { s } => (int(2) - s - tau * s, -(beta * s)),
            SeriesKind::Gallagher2d => (-tau.clone(), int(1) - beta),
            SeriesKind::MultPlanar { s } => {
                let s1 = s - int(1);
                (int(2) - s - tau * &s1, -(beta * s1))
            }
        }
    }
}

/// Partial sums at the dyadic checkpoints `q = 2^t`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Checkpoint {
    pub t: u32,
    /// `Σ_{q < 2^(t+1)}`
    pub partial_sum: f64,
    /// `Σ_{2^t ≤ q < 2^(t+1)}`
    pub block_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "verdict")]
pub enum Verdict {
    Convergent,
    Divergent,
    Inconclusive { checkpoints: Vec<Checkpoint> },
}

impl Verdict {
    pub fn label(&self) -> &'static str {
        match self {
            Verdict::Convergent => "Convergent",
            Verdict::Divergent => "Divergent",
            Verdict::Inconclusive { .. } => "Inconclusive",
        }
    }
}

/// Default number of dyadic blocks used for table reports.
pub const TABLE_CHECKPOINTS: u32 = 24;

/// Analytic verdict for parametric `ψ`; tables get a partial-sum report.
pub fn classify_series(psi: &ApproxFn, kind: &SeriesKind) -> Result<Verdict, SeriesError> {
    kind.validate()?;
    let Some((tau, beta)) = psi.exponents() else {
        let limit = psi.max_argument().unwrap_or(1);
        let t_max = (63 - limit.leading_zeros()).saturating_sub(1).min(TABLE_CHECKPOINTS);
        let checkpoints = checkpoint_sums(psi, kind, t_max)?;
        return Ok(Verdict::Inconclusive { checkpoints });
    };
    let (a, b) = kind.term_exponents(&tau, &beta);
    let minus_one = -Rational::one();
    let converges = a < minus_one || (a == minus_one && b < minus_one);
    Ok(if converges {
        Verdict::Convergent
    } else {
        Verdict::Divergent
    })
}

/// Checkpoint sums for `t = 0..=t_max`; tables stop at their last full block.
pub fn checkpoint_sums(
    psi: &ApproxFn,
    kind: &SeriesKind,
    t_max: u32,
) -> Result<Vec<Checkpoint>, SeriesError> {
    kind.validate()?;
    let mut out = Vec::with_capacity(t_max as usize + 1);
    let mut total = 0.0;
    for t in 0..=t_max {
        let lo = 1u64 << t;
        let hi = lo << 1;
        if psi.max_argument().is_some_and(|m| m < hi - 1) {
            break;
        }
        let mut block = 0.0;
        for q in lo..hi {
            block += kind.term(q as f64, psi.eval_f64(q)?);
        }
        total += block;
        out.push(Checkpoint {
            t,
            partial_sum: total,
            block_sum: block,
        });
    }
    Ok(out)
}

/// Slope of `log₂(block sum)` against `t` over the last half of the checkpoints.
///
/// For terms `≍ q^A` the slope tends to `A + 1`; blocks of zeros give `−∞`.
pub fn block_slope(checkpoints: &[Checkpoint]) -> f64 {
    let tail = &checkpoints[checkpoints.len() / 2..];
    if tail.iter().any(|c| c.block_sum <= 0.0) {
        return f64::NEG_INFINITY;
    }
    let pts: Vec<(f64, f64)> = tail
        .iter()
        .map(|c| (c.t as f64, c.block_sum.log2()))
        .collect();
    least_squares(&pts).0
}

/// `(slope, intercept, r²)` of an ordinary least-squares line.
pub fn least_squares(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if sxx > 0.0 && syy > 0.0 {
        sxy * sxy / (sxx * syy)
    } else {
        1.0
    };
    (slope, my - slope * mx, r2)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NumericalVerdict {
    pub convergent: bool,
    pub slope: f64,
    pub checkpoints: Vec<Checkpoint>,
}

/// Empirical verdict from dyadic block sums: convergent when the blocks shrink
/// geometrically, i.e. the fitted slope is below `−eta`.
pub fn numerical_verdict(
    psi: &ApproxFn,
    kind: &SeriesKind,
    t_max: u32,
    eta: f64,
) -> Result<NumericalVerdict, SeriesError> {
    let checkpoints = checkpoint_sums(psi, kind, t_max)?;
    let slope = block_slope(&checkpoints);
    Ok(NumericalVerdict {
        convergent: slope < -eta,
        slope,
        checkpoints,
    })
}

/// Critical exponents for `ψ(q) = q^(−τ)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CriticalExponents {
    #[serde(with = "crate::rational::serde_rational")]
    pub jb_dim: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub mult_planar_crit: Rational,
    /// The unclamped root lay outside `[1, 2]`.
    pub mult_planar_clamped: bool,
    #[serde(with = "crate::rational::serde_rational")]
    pub curve_crit: Rational,
    /// The unclamped root lay outside `[0, 1]`.
    pub curve_clamped: bool,
}

fn clamp(x: Rational, lo: Rational, hi: Rational) -> (Rational, bool) {
    if x < lo {
        (lo, true)
    } else if x > hi {
        (hi, true)
    } else {
        (x, false)
    }
}

pub fn critical_exponents(tau: &Rational) -> Result<CriticalExponents, SeriesError> {
    if tau.is_negative() {
        return Err(SeriesError::NegativeTau(display(tau)));
    }
    let one = Rational::one();
    let tau1 = tau + &one;
    let jb = (int(2) / &tau1).min(one.clone());
    let (mult, mult_clamped) = clamp((int(3) + tau) / &tau1, one.clone(), int(2));
    let (curve, curve_clamped) = clamp(int(2) / &tau1, Rational::zero(), one);
    Ok(CriticalExponents {
        jb_dim: jb,
        mult_planar_crit: mult,
        mult_planar_clamped: mult_clamped,
        curve_crit: curve,
        curve_clamped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use proptest::prelude::*;

    fn pow(tau: i64) -> ApproxFn {
        ApproxFn::power(int(1), int(tau)).unwrap()
    }

    #[test]
    fn classification_examples() {
        let mp = |s| SeriesKind::MultPlanar { s };
        assert_eq!(classify_series(&pow(3), &mp(rat(8, 5))).unwrap(), Verdict::Convergent);
        assert_eq!(classify_series(&pow(3), &mp(rat(7, 5))).unwrap(), Verdict::Divergent);
        // Critical point: Σ 1/q.
        assert_eq!(classify_series(&pow(3), &mp(rat(3, 2))).unwrap(), Verdict::Divergent);
        assert_eq!(
            classify_series(&pow(1), &SeriesKind::Gallagher2d).unwrap(),
            Verdict::Divergent
        );
        // Σ log q / (q log² q) = Σ 1/(q log q) still diverges.
        let log2 = ApproxFn::power_log(int(1), int(1), int(2)).unwrap();
        assert_eq!(
            classify_series(&log2, &SeriesKind::Gallagher2d).unwrap(),
            Verdict::Divergent
        );
        let log3 = ApproxFn::power_log(int(1), int(1), int(3)).unwrap();
        assert_eq!(
            classify_series(&log3, &SeriesKind::Gallagher2d).unwrap(),
            Verdict::Convergent
        );
        assert_eq!(
            classify_series(&pow(3), &SeriesKind::Curve { s: rat(3, 5) }).unwrap(),
            Verdict::Convergent
        );
        assert_eq!(
            classify_series(&pow(3), &SeriesKind::Jarnik1d { s: rat(1, 2) }).unwrap(),
            Verdict::Divergent
        );
        assert_eq!(
            classify_series(&pow(3), &SeriesKind::Simultaneous2d { s: int(1) }).unwrap(),
            Verdict::Convergent
        );
        assert_eq!(
            classify_series(&pow(3), &SeriesKind::Simultaneous2d { s: rat(1, 2) }).unwrap(),
            Verdict::Divergent
        );
    }

    #[test]
    fn s_ranges_are_enforced() {
        for s in [int(1), int(2), rat(5, 2)] {
            assert!(matches!(
                classify_series(&pow(3), &SeriesKind::MultPlanar { s }),
                Err(SeriesError::SOutOfRange { .. })
            ));
        }
        for s in [int(0), int(1)] {
            assert!(classify_series(&pow(3), &SeriesKind::Curve { s }).is_err());
        }
        assert!(classify_series(&pow(3), &SeriesKind::Jarnik1d { s: int(0) }).is_err());
    }

    #[test]
    fn tables_are_inconclusive() {
        let values: Vec<Rational> = (1..=40).map(|q| rat(1, q * q * q)).collect();
        let psi = ApproxFn::table(values).unwrap();
        let v = classify_series(&psi, &SeriesKind::MultPlanar { s: rat(8, 5) }).unwrap();
        let Verdict::Inconclusive { checkpoints } = v else {
            panic!("expected a report");
        };
        // Blocks [1,2), [2,4), [4,8), [8,16), [16,32) fit in 40 entries.
        assert_eq!(checkpoints.len(), 5);
        let direct: f64 = (1..32u64)
            .map(|q| (q as f64).powf(0.4) * (q as f64).powf(-1.8))
            .sum();
        assert!((checkpoints[4].partial_sum - direct).abs() < 1e-12);
    }

    #[test]
    fn critical_exponent_examples() {
        let c1 = critical_exponents(&int(1)).unwrap();
        assert_eq!(c1.jb_dim, int(1));
        assert_eq!(c1.mult_planar_crit, int(2));
        assert!(!c1.mult_planar_clamped);
        let c3 = critical_exponents(&int(3)).unwrap();
        assert_eq!(c3.jb_dim, rat(1, 2));
        assert_eq!(c3.mult_planar_crit, rat(3, 2));
        assert_eq!(c3.curve_crit, rat(1, 2));
        let c0 = critical_exponents(&int(0)).unwrap();
        assert_eq!(c0.mult_planar_crit, int(2));
        assert!(c0.mult_planar_clamped && c0.curve_clamped);
        assert!(critical_exponents(&int(-1)).is_err());
    }

    #[test]
    fn checkpoints_behave_per_verdict() {
        let psi = pow(3);
        let conv = checkpoint_sums(&psi, &SeriesKind::MultPlanar { s: rat(8, 5) }, 16).unwrap();
        let diffs: Vec<f64> = conv.windows(2).map(|w| w[1].partial_sum - w[0].partial_sum).collect();
        // Blocks shrink by 2^(-0.4) per level.
        for w in diffs[8..].windows(2) {
            let r = w[1] / w[0];
            assert!((r - 2f64.powf(-0.4)).abs() < 0.01, "ratio {r}");
        }
        let div = checkpoint_sums(&psi, &SeriesKind::MultPlanar { s: rat(7, 5) }, 16).unwrap();
        assert!(div.last().unwrap().partial_sum > 20.0);
        assert!(div.windows(2).all(|w| w[1].block_sum > w[0].block_sum));
    }

    proptest! {
        #[test]
        fn critical_exponents_monotone(a in 0i64..200, b in 0i64..200, den in 1i64..20) {
            let (lo, hi) = (a.min(b), a.max(b));
            let x = critical_exponents(&rat(lo, den)).unwrap();
            let y = critical_exponents(&rat(hi, den)).unwrap();
            prop_assert!(x.jb_dim >= y.jb_dim);
            prop_assert!(x.mult_planar_crit >= y.mult_planar_crit);
            prop_assert!(x.curve_crit >= y.curve_crit);
            prop_assert!(y.mult_planar_crit >= int(1));
        }

        #[test]
        fn mult_planar_flip_matches_critical(tau in 0i64..8, s_num in 101i64..200) {
            let s = rat(s_num, 100);
            let crit = critical_exponents(&int(tau)).unwrap().mult_planar_crit;
            let v = classify_series(&pow(tau), &SeriesKind::MultPlanar { s: s.clone() }).unwrap();
            prop_assert_eq!(v == Verdict::Convergent, s > crit);
        }
    }
}
