//! Shifted rational points near a planar curve `y = f(x)`, `x ∈ [a, b]`.
//!
//! `N_θ(Q, δ)` counts pairs `(p1, q)` with `Q < q ≤ 2Q`, `(p1+θ1)/q ∈ [a, b]`
//! and `‖q f((p1+θ1)/q) − θ2‖ < δ`. Polynomial curves are evaluated exactly in
//! `i128` (falling back to big integers on overflow); `√(αx+β)` curves use
//! integer-root enclosures with precision escalation.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cover::{level_eps, max_abs_m};
use crate::enclosure::root_enclosure;
use crate::psi::{dyadic, ApproxFn};
use crate::rational::{display, int, nearest_int_dist, nearest_integer, parse_rational, rat, to_f64, Rational, RationalPair};

/// Finite-difference samples used to spot-check curvature bounds.
pub const CURVATURE_SAMPLES: usize = 1000;
/// Relative tolerance of the curvature spot-check.
pub const CURVATURE_TOL: f64 = 1e-6;
/// Starting precision for irrational curve values, in bits.
pub const START_BITS: u32 = 64;
/// Default precision cap for irrational curve values, in bits.
pub const MAX_BITS: u32 = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CurveError {
    #[error("interval [{0}, {1}] is empty")]
    EmptyInterval(String, String),
    #[error("curvature bounds must satisfy 0 < c1 ≤ c2, got ({0}, {1})")]
    BadCurvatureBounds(f64, f64),
    #[error("|f''({x})| ≈ {value} lies outside [{c1}, {c2}]")]
    CurvatureViolation { x: f64, value: f64, c1: f64, c2: f64 },
    #[error("curve is degenerate: f'' vanishes on the interval")]
    Degenerate,
    #[error("√(αx+β) needs αx+β > 0 on the interval")]
    SqrtDomain,
    #[error("δ = {0} must satisfy 0 < δ ≤ 1/2")]
    DeltaOutOfRange(String),
    #[error("Q must be at least 1")]
    ZeroQ,
    #[error("s = {0} must lie in (0, 1)")]
    SOutOfRange(String),
    #[error("threshold comparison at (p1, q) = ({p1}, {q}) unresolved at {bits} bits")]
    Unresolved { p1: i64, q: u64, bits: u32 },
    #[error("malformed curve `{0}`; expected x^2 | parabola[:a,b,c] | poly:c0,c1,... | sqrt:alpha,beta")]
    MalformedCurve(String),
    #[error(transparent)]
    Cover(#[from] crate::cover::CoverError),
}

/// The function whose graph is the curve.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum CurveFn {
    /// `Σ cₖ xᵏ`, coefficients from the constant term up.
    Polynomial(Vec<Rational>),
    /// `√(αx + β)`
    SqrtAffine { alpha: Rational, beta: Rational },
}

impl CurveFn {
    pub fn square() -> Self {
        CurveFn::Polynomial(vec![int(0), int(0), int(1)])
    }

    /// Parses `x^2`, `parabola`, `parabola:a,b,c` (for `ax²+bx+c`),
    /// `poly:c0,c1,...` or `sqrt:alpha,beta`.
    pub fn parse(spec: &str) -> Result<Self, CurveError> {
        let bad = || CurveError::MalformedCurve(spec.to_string());
        let spec = spec.trim();
        if spec == "x^2" || spec == "parabola" {
            return Ok(Self::square());
        }
        let (kind, args) = spec.split_once(':').ok_or_else(bad)?;
        let nums = args
            .split(',')
            .map(parse_rational)
            .collect::<Result<Vec<_>, _>>()
            .map_err(|_| bad())?;
        match (kind, nums.as_slice()) {
            ("parabola", [a, b, c]) => Ok(CurveFn::Polynomial(vec![c.clone(), b.clone(), a.clone()])),
            ("poly", cs) if !cs.is_empty() => {
                let mut cs = cs.to_vec();
                while cs.len() > 1 && cs.last().is_some_and(Zero::is_zero) {
                    cs.pop();
                }
                Ok(CurveFn::Polynomial(cs))
            }
            ("sqrt", [alpha, beta]) => Ok(CurveFn::SqrtAffine {
                alpha: alpha.clone(),
                beta: beta.clone(),
            }),
            _ => Err(bad()),
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        match self {
            CurveFn::Polynomial(cs) => cs.iter().rev().fold(0.0, |acc, c| acc * x + to_f64(c)),
            CurveFn::SqrtAffine { alpha, beta } => (to_f64(alpha) * x + to_f64(beta)).sqrt(),
        }
    }

    /// Analytic `f''(x)`.
    pub fn second_derivative_f64(&self, x: f64) -> f64 {
        match self {
            CurveFn::Polynomial(cs) => cs
                .iter()
                .enumerate()
                .skip(2)
                .map(|(k, c)| (k * (k - 1)) as f64 * to_f64(c) * x.powi(k as i32 - 2))
                .sum(),
            CurveFn::SqrtAffine { alpha, beta } => {
                let (a, b) = (to_f64(alpha), to_f64(beta));
                -a * a / (4.0 * (a * x + b).powf(1.5))
            }
        }
    }

    /// Exact `q·f((p1+θ1)/q)` when the value is rational.
    pub fn scaled_value_exact(&self, q: u64, p1: i64, theta1: &Rational) -> Option<Rational> {
        let x = (int(p1) + theta1) / int(q as i64);
        match self {
            CurveFn::Polynomial(cs) => {
                let v = cs
                    .iter()
                    .rev()
                    .fold(Rational::zero(), |acc, c| acc * &x + c);
                Some(v * int(q as i64))
            }
            CurveFn::SqrtAffine { .. } => None,
        }
    }
}

impl std::fmt::Display for CurveFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveFn::Polynomial(cs) => {
                let parts: Vec<String> = cs.iter().map(display).collect();
                write!(f, "poly:{}", parts.join(","))
            }
            CurveFn::SqrtAffine { alpha, beta } => write!(f, "sqrt:{},{}", display(alpha), display(beta)),
        }
    }
}

/// A curve with validated curvature bounds `c1 ≤ |f''| ≤ c2` on `[a, b]`.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveSpec {
    pub f: CurveFn,
    pub a: Rational,
    pub b: Rational,
    pub c1: f64,
    pub c2: f64,
    /// Precision cap (bits) for irrational evaluations.
    pub max_bits: u32,
}

impl CurveSpec {
    pub fn new(f: CurveFn, a: Rational, b: Rational, c1: f64, c2: f64) -> Result<Self, CurveError> {
        Self::with_check(f, a, b, c1, c2, CURVATURE_SAMPLES, CURVATURE_TOL)
    }

    /// Validates the bounds and spot-checks `|f''|` by central differences.
    pub fn with_check(
        f: CurveFn,
        a: Rational,
        b: Rational,
        c1: f64,
        c2: f64,
        samples: usize,
        tol: f64,
    ) -> Result<Self, CurveError> {
        if a >= b {
            return Err(CurveError::EmptyInterval(display(&a), display(&b)));
        }
        if !(c1 > 0.0 && c1 <= c2) {
            return Err(CurveError::BadCurvatureBounds(c1, c2));
        }
        if let CurveFn::SqrtAffine { alpha, beta } = &f {
            if !(alpha * &a + beta).is_positive() || !(alpha * &b + beta).is_positive() {
                return Err(CurveError::SqrtDomain);
            }
        }
        let (af, bf) = (to_f64(&a), to_f64(&b));
        let h = 1e-4 * (bf - af);
        for k in 0..samples {
            let x = af + h + (bf - af - 2.0 * h) * k as f64 / (samples.max(2) - 1) as f64;
            let fd = (f.eval_f64(x + h) - 2.0 * f.eval_f64(x) + f.eval_f64(x - h)) / (h * h);
            let v = fd.abs();
            if v < c1 * (1.0 - tol) || v > c2 * (1.0 + tol) {
                return Err(CurveError::CurvatureViolation { x, value: v, c1, c2 });
            }
        }
        Ok(CurveSpec {
            f,
            a,
            b,
            c1,
            c2,
            max_bits: MAX_BITS,
        })
    }

    /// Bounds read off the analytic `f''` on a fine grid, then spot-checked.
    pub fn with_estimated_bounds(f: CurveFn, a: Rational, b: Rational) -> Result<Self, CurveError> {
        let (af, bf) = (to_f64(&a), to_f64(&b));
        let n = 10_000;
        let vals: Vec<f64> = (0..=n)
            .map(|k| f.second_derivative_f64(af + (bf - af) * k as f64 / n as f64).abs())
            .collect();
        let c1 = vals.iter().cloned().fold(f64::INFINITY, f64::min);
        let c2 = vals.iter().cloned().fold(0.0, f64::max);
        if !(c1 > 0.0) {
            return Err(CurveError::Degenerate);
        }
        // Slack for the grid and for the finite-difference check.
        Self::new(f, a, b, c1 * (1.0 - 1e-4), c2 * (1.0 + 1e-4))
    }

    pub fn unit_parabola() -> Self {
        CurveSpec::new(CurveFn::square(), int(0), int(1), 2.0, 2.0).expect("valid curve")
    }

    pub fn with_max_bits(mut self, bits: u32) -> Self {
        self.max_bits = bits.max(START_BITS);
        self
    }

    /// Range of `p1` with `(p1+θ1)/q ∈ [a, b]`.
    pub fn p1_range(&self, q: u64, theta1: &Rational) -> (i64, i64) {
        let qr = int(q as i64);
        let lo = (&self.a * &qr - theta1).ceil().to_integer();
        let hi = (&self.b * &qr - theta1).floor().to_integer();
        (lo.to_i64().expect("p1 fits i64"), hi.to_i64().expect("p1 fits i64"))
    }
}

/// Thresholds are given by their squares, so `δ = 2^|m|·√(2ψ)` stays exact.
#[derive(Debug, Clone)]
struct Threshold {
    sq: Rational,
    fast: Option<(i128, i128)>,
}

impl Threshold {
    fn from_sq(sq: Rational) -> Self {
        let fast = match (sq.numer().to_i128(), sq.denom().to_i128()) {
            (Some(n), Some(d)) if n.abs() < 1 << 62 && d < 1 << 62 => Some((n, d)),
            _ => None,
        };
        Threshold { sq, fast }
    }
}

/// Exact integer form of `q f(x) − θ2` for polynomials: `num/den`.
struct PolyKernel {
    coeffs: Vec<i128>,
    coeff_den: i128,
    t1: (i128, i128),
    t2: (i128, i128),
}

impl PolyKernel {
    fn new(cs: &[Rational], theta: &RationalPair) -> Option<Self> {
        let den = cs
            .iter()
            .fold(BigInt::one(), |acc, c| acc.lcm(c.denom()));
        let coeffs = cs
            .iter()
            .map(|c| (c.numer() * (&den / c.denom())).to_i128())
            .collect::<Option<Vec<_>>>()?;
        let pair = |x: &Rational| Some((x.numer().to_i128()?, x.denom().to_i128()?));
        Some(PolyKernel {
            coeffs,
            coeff_den: den.to_i128()?,
            t1: pair(&theta.0)?,
            t2: pair(&theta.1)?,
        })
    }

    /// `(r, D)` with `‖q f(x) − θ2‖ = r/D`, or `None` on overflow.
    fn distance(&self, q: u64, p1: i64) -> Option<(i128, i128)> {
        let (a, b) = self.t1;
        let (c, d) = self.t2;
        let qb = (q as i128).checked_mul(b)?;
        let x = (p1 as i128).checked_mul(b)?.checked_add(a)?;
        let deg = self.coeffs.len() - 1;
        let mut acc = self.coeffs[deg];
        let mut qb_pow = 1i128;
        for k in (0..deg).rev() {
            qb_pow = qb_pow.checked_mul(qb)?;
            acc = acc
                .checked_mul(x)?
                .checked_add(self.coeffs[k].checked_mul(qb_pow)?)?;
        }
        if deg == 0 {
            qb_pow = 1;
        }
        let num = (q as i128)
            .checked_mul(acc)?
            .checked_mul(d)?
            .checked_sub(c.checked_mul(self.coeff_den)?.checked_mul(qb_pow)?)?;
        let den = self.coeff_den.checked_mul(qb_pow)?.checked_mul(d)?;
        let r = num.rem_euclid(den);
        Some((r.min(den - r), den))
    }
}

fn below_fast(r: i128, den: i128, th: &Threshold) -> Option<bool> {
    let (u, v) = th.fast?;
    let lhs = r.checked_mul(r)?.checked_mul(v)?;
    let rhs = u.checked_mul(den.checked_mul(den)?)?;
    Some(lhs < rhs)
}

/// Distance of `√Z − θ2` to the nearest integer, resolved against each threshold.
fn sqrt_below(
    z: &Rational,
    theta2: &Rational,
    thresholds: &[Threshold],
    max_bits: u32,
    q: u64,
    p1: i64,
) -> Result<Vec<bool>, CurveError> {
    let zz = (z.numer() * z.denom()).to_biguint().expect("non-negative radicand");
    let zd = Rational::from_integer(z.denom().clone());
    let mut bits = START_BITS;
    let mut out: Vec<Option<bool>> = vec![None; thresholds.len()];
    loop {
        let root = root_enclosure(&zz, 2, bits);
        let lo = &root.lo / &zd - theta2;
        let hi = &root.hi / &zd - theta2;
        let mid = (&lo + &hi) / int(2);
        let half_w = (&hi - &lo) / int(2);
        let dm = nearest_int_dist(&mid);
        let dmax = &dm + &half_w;
        let dmin = (&dm - &half_w).max(Rational::zero());
        for (slot, th) in out.iter_mut().zip(thresholds) {
            if slot.is_none() {
                if &dmax * &dmax < th.sq {
                    *slot = Some(true);
                } else if &dmin * &dmin >= th.sq {
                    *slot = Some(false);
                }
            }
        }
        if out.iter().all(Option::is_some) {
            return Ok(out.into_iter().map(Option::unwrap).collect());
        }
        if bits >= max_bits {
            return Err(CurveError::Unresolved { p1, q, bits });
        }
        bits = (bits * 2).min(max_bits);
    }
}

/// For each threshold, whether `‖q f((p1+θ1)/q) − θ2‖² < δ²`.
fn point_below(
    curve: &CurveSpec,
    kernel: Option<&PolyKernel>,
    theta: &RationalPair,
    q: u64,
    p1: i64,
    thresholds: &[Threshold],
) -> Result<Vec<bool>, CurveError> {
    if let Some((r, den)) = kernel.and_then(|k| k.distance(q, p1)) {
        let fast: Option<Vec<bool>> = thresholds.iter().map(|t| below_fast(r, den, t)).collect();
        if let Some(v) = fast {
            return Ok(v);
        }
        let d = Rational::new(BigInt::from(r), BigInt::from(den));
        let d2 = &d * &d;
        return Ok(thresholds.iter().map(|t| d2 < t.sq).collect());
    }
    match &curve.f {
        CurveFn::Polynomial(_) => {
            let v = curve.f.scaled_value_exact(q, p1, &theta.0).expect("polynomial") - &theta.1;
            let d = nearest_int_dist(&v);
            let d2 = &d * &d;
            Ok(thresholds.iter().map(|t| d2 < t.sq).collect())
        }
        CurveFn::SqrtAffine { alpha, beta } => {
            let qr = int(q as i64);
            let z = &qr * alpha * (int(p1) + &theta.0) + beta * &qr * &qr;
            sqrt_below(&z, &theta.1, thresholds, curve.max_bits, q, p1)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NearCurveCount {
    #[serde(rename = "Q")]
    pub q_param: u64,
    #[serde(with = "crate::rational::serde_rational")]
    pub delta: Rational,
    pub count: u64,
    /// `(p1, q)` pairs in increasing `(q, p1)` order.
    pub witnesses: Vec<(i64, u64)>,
    pub truncated: bool,
}

/// Per-threshold counts and (for the first threshold) witnesses.
fn enumerate(
    curve: &CurveSpec,
    theta: &RationalPair,
    q_param: u64,
    thresholds: &[Threshold],
    witness_limit: usize,
) -> Result<(Vec<u64>, Vec<(i64, u64)>, bool), CurveError> {
    if q_param == 0 {
        return Err(CurveError::ZeroQ);
    }
    let kernel = match &curve.f {
        CurveFn::Polynomial(cs) => PolyKernel::new(cs, theta),
        CurveFn::SqrtAffine { .. } => None,
    };
    let per_q: Vec<Result<(Vec<u64>, Vec<i64>), CurveError>> = (q_param + 1..=2 * q_param)
        .into_par_iter()
        .map(|q| {
            let (lo, hi) = curve.p1_range(q, &theta.0);
            let mut counts = vec![0u64; thresholds.len()];
            let mut hits = Vec::new();
            for p1 in lo..=hi {
                let below = point_below(curve, kernel.as_ref(), theta, q, p1, thresholds)?;
                for (c, b) in counts.iter_mut().zip(&below) {
                    *c += *b as u64;
                }
                if below.first() == Some(&true) && hits.len() < witness_limit {
                    hits.push(p1);
                }
            }
            Ok((counts, hits))
        })
        .collect();
    let mut totals = vec![0u64; thresholds.len()];
    let mut witnesses = Vec::new();
    let mut truncated = false;
    for (q, r) in (q_param + 1..=2 * q_param).zip(per_q) {
        let (counts, hits) = r?;
        for (t, c) in totals.iter_mut().zip(&counts) {
            *t += c;
        }
        for p1 in hits {
            if witnesses.len() < witness_limit {
                witnesses.push((p1, q));
            } else {
                truncated = true;
            }
        }
    }
    if totals.first().is_some_and(|&c| c as usize > witnesses.len()) {
        truncated = true;
    }
    Ok((totals, witnesses, truncated))
}

fn check_delta(delta: &Rational) -> Result<(), CurveError> {
    if !delta.is_positive() || *delta > rat(1, 2) {
        return Err(CurveError::DeltaOutOfRange(display(delta)));
    }
    Ok(())
}

/// Exact enumeration of `A_θ(Q, δ)`, keeping at most `witness_limit` witnesses.
pub fn count_near_curve(
    curve: &CurveSpec,
    theta: &RationalPair,
    q_param: u64,
    delta: &Rational,
    witness_limit: usize,
) -> Result<NearCurveCount, CurveError> {
    check_delta(delta)?;
    let th = [Threshold::from_sq(delta * delta)];
    let (counts, witnesses, truncated) = enumerate(curve, theta, q_param, &th, witness_limit)?;
    Ok(NearCurveCount {
        q_param,
        delta: delta.clone(),
        count: counts[0],
        witnesses,
        truncated,
    })
}

/// `N_θ(Q, δ)` for several `δ` from a single enumeration.
pub fn count_near_curve_multi(
    curve: &CurveSpec,
    theta: &RationalPair,
    q_param: u64,
    deltas: &[Rational],
) -> Result<Vec<u64>, CurveError> {
    for d in deltas {
        check_delta(d)?;
    }
    let th: Vec<Threshold> = deltas.iter().map(|d| Threshold::from_sq(d * d)).collect();
    Ok(enumerate(curve, theta, q_param, &th, 0)?.0)
}

/// Re-checks one witness against the defining inequalities.
pub fn witness_valid(curve: &CurveSpec, theta: &RationalPair, q_param: u64, delta: &Rational, w: (i64, u64)) -> bool {
    let (p1, q) = w;
    if !(q > q_param && q <= 2 * q_param) {
        return false;
    }
    let x = (int(p1) + &theta.0) / int(q as i64);
    if x < curve.a || x > curve.b {
        return false;
    }
    let th = [Threshold::from_sq(delta * delta)];
    point_below(curve, None, theta, q, p1, &th).is_ok_and(|v| v[0])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRow {
    #[serde(rename = "Q")]
    pub q_param: u64,
    #[serde(with = "crate::rational::serde_rational")]
    pub delta: Rational,
    pub count: u64,
    /// `N / (δQ² + Q^(1+ε))`
    pub ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitReport {
    pub epsilon: f64,
    pub c_hat: f64,
    pub table: Vec<FitRow>,
}

impl FitReport {
    /// Largest ratio among rows with `Q ≤ q_max`.
    pub fn c_hat_up_to(&self, q_max: u64) -> f64 {
        self.table
            .iter()
            .filter(|r| r.q_param <= q_max)
            .map(|r| r.ratio)
            .fold(0.0, f64::max)
    }
}

/// `C_hat = max N_θ(Q, δ)/(δQ² + Q^(1+ε))` over the grid.
pub fn fit_counting_constant(
    curve: &CurveSpec,
    theta: &RationalPair,
    q_list: &[u64],
    delta_list: &[Rational],
    epsilon: f64,
) -> Result<FitReport, CurveError> {
    let mut table = Vec::new();
    for &q in q_list {
        let counts = count_near_curve_multi(curve, theta, q, delta_list)?;
        for (d, n) in delta_list.iter().zip(counts) {
            let qf = q as f64;
            let ratio = n as f64 / (to_f64(d) * qf * qf + qf.powf(1.0 + epsilon));
            table.push(FitRow {
                q_param: q,
                delta: d.clone(),
                count: n,
                ratio,
            });
        }
    }
    let c_hat = table.iter().map(|r| r.ratio).fold(0.0, f64::max);
    Ok(FitReport {
        epsilon,
        c_hat,
        table,
    })
}

/// `Σ_m N_θ(2^t, δ_m)·(2^(−|m|)·√ψ(2^t)/2^t)^s` with `δ_m = 2^|m|·√(2ψ(2^t))`
/// over `2^|m|·√ψ(2^t) ≤ 1`.
pub fn curve_cover_svolume(
    t: u32,
    s: f64,
    psi: &ApproxFn,
    theta: &RationalPair,
    curve: &CurveSpec,
) -> Result<f64, CurveError> {
    if !(s > 0.0 && s < 1.0) {
        return Err(CurveError::SOutOfRange(s.to_string()));
    }
    let eps = level_eps(t, psi)?;
    let Some(mm) = max_abs_m(&eps) else {
        return Ok(0.0);
    };
    let th: Vec<Threshold> = (0..=mm)
        .map(|k| Threshold::from_sq(&eps * int(2) * Rational::from_integer(BigInt::one() << (2 * k as usize))))
        .collect();
    let (counts, _, _) = enumerate(curve, theta, dyadic(t), &th, 0)?;
    let root = to_f64(&eps).sqrt() / dyadic(t) as f64;
    let per = |k: u32| counts[k as usize] as f64 * (0.5f64.powi(k as i32) * root).powf(s);
    Ok(per(0) + 2.0 * (1..=mm).map(per).sum::<f64>())
}

/// Nearest integer to `q f(x) − θ2` (exact polynomial route), for diagnostics.
pub fn nearest_lattice_value(curve: &CurveSpec, theta: &RationalPair, q: u64, p1: i64) -> Option<BigInt> {
    let v = curve.f.scaled_value_exact(q, p1, &theta.0)? - &theta.1;
    Some(nearest_integer(&v))
}
