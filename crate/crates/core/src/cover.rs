//! Dyadic decomposition of multiplicative approximations and the resulting
//! fine cover of the multiplicatively `ψ`-approximable points of the unit square.
//!
//! All width tests compare squares, so membership is decided exactly.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::psi::{dyadic, ApproxFn, PsiError};
use crate::rational::{display, int, nearest_integer, rat, to_f64, Rational, RationalPair};
use crate::series::least_squares;

/// Default cap on the number of cells [`collect_cover`] will materialize.
pub const MATERIALIZE_LIMIT: u128 = 10_000_000;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CoverError {
    #[error("product of distances {product} is not below ε = {eps}")]
    PreconditionViolated { product: String, eps: String },
    #[error("ε = {0} must lie in (0, 1)")]
    EpsOutOfRange(String),
    #[error("point ({0}, {1}) is outside the unit square")]
    OutsideUnitSquare(String, String),
    #[error("ψ(2^{t}) = {value} exceeds 1")]
    PsiTooLarge { t: u32, value: String },
    #[error("s = {0} is outside (1, 2)")]
    SOutOfRange(String),
    #[error("level {t} has {cells} cells, above the materialization limit {limit}")]
    TooManyCells { t: u32, cells: u128, limit: u128 },
    #[error("start level {start} exceeds final level {end}")]
    EmptyRange { start: u32, end: u32 },
    #[error(transparent)]
    Psi(#[from] PsiError),
}

fn in_unit(x: &Rational) -> bool {
    !x.is_negative() && *x <= Rational::one()
}

fn check_unit(p: &RationalPair) -> Result<(), CoverError> {
    if in_unit(&p.0) && in_unit(&p.1) {
        Ok(())
    } else {
        Err(CoverError::OutsideUnitSquare(display(&p.0), display(&p.1)))
    }
}

/// `4^k` as a rational, for any integer `k`.
fn four_pow(k: i32) -> Rational {
    let p = Rational::from_integer(BigInt::one() << (2 * k.unsigned_abs() as usize));
    if k >= 0 {
        p
    } else {
        p.recip()
    }
}

/// The `m` chosen by the two-case split on the distances `d1, d2`.
///
/// `m = 0` when both `dᵢ² < 2ε`; otherwise the large coordinate fixes `|m|` by
/// `4^(|m|−1)·2ε ≤ d² < 4^|m|·2ε`, and `m` is negated when the large one is `d2`.
pub fn decompose_distances(d1: &Rational, d2: &Rational, eps: &Rational) -> Result<i32, CoverError> {
    let product = d1 * d2;
    if product >= *eps {
        return Err(CoverError::PreconditionViolated {
            product: display(&product),
            eps: display(eps),
        });
    }
    let two_eps = eps * int(2);
    let (s1, s2) = (d1 * d1, d2 * d2);
    if s1 < two_eps && s2 < two_eps {
        return Ok(0);
    }
    let (big, sign) = if s1 >= two_eps { (s1, 1) } else { (s2, -1) };
    let mut m = 1;
    while big >= &two_eps * four_pow(m) {
        m += 1;
    }
    Ok(sign * m)
}

/// Checks `d1 < 2^m √(2ε)`, `d2 < 2^(−m) √(2ε)` and `2^|m| √ε ≤ 1` on squares.
pub fn decomposition_holds(d1: &Rational, d2: &Rational, eps: &Rational, m: i32) -> bool {
    let two_eps = eps * int(2);
    d1 * d1 < &two_eps * four_pow(m)
        && d2 * d2 < &two_eps * four_pow(-m)
        && eps * four_pow(m.abs()) <= Rational::one()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Decomposition {
    pub m: i32,
    pub p1: i64,
    pub p2: i64,
    #[serde(with = "crate::rational::serde_rational")]
    pub d1: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub d2: Rational,
}

/// Nearest integer `p` to `q·x − θ` and the distance `|q·x − θ − p|`.
fn shifted_nearest(q: u64, x: &Rational, theta: &Rational) -> (i64, Rational) {
    let v = x * int(q as i64) - theta;
    let p = nearest_integer(&v);
    let d = (&v - Rational::from_integer(p.clone())).abs();
    (p.to_i64().expect("numerator fits i64"), d)
}

/// Finds `(m, p1, p2)` for a solution `q` of `∏ ‖q xᵢ − θᵢ‖ < ε`.
pub fn dyadic_decompose(
    q: u64,
    x: &RationalPair,
    theta: &RationalPair,
    eps: &Rational,
) -> Result<Decomposition, CoverError> {
    if !eps.is_positive() || *eps >= Rational::one() {
        return Err(CoverError::EpsOutOfRange(display(eps)));
    }
    check_unit(x)?;
    check_unit(theta)?;
    let (p1, d1) = shifted_nearest(q, &x.0, &theta.0);
    let (p2, d2) = shifted_nearest(q, &x.1, &theta.1);
    let m = decompose_distances(&d1, &d2, eps)?;
    Ok(Decomposition { m, p1, p2, d1, d2 })
}

/// One rectangle `S_θ(q, m, p1, p2)` of the level-`t` cover.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CoverRect {
    pub t: u32,
    pub q: u64,
    pub m: i32,
    pub p1: i64,
    pub p2: i64,
    #[serde(with = "pair_serde")]
    pub center: RationalPair,
    /// The bound `ε = ψ(2^t)` the cover was built from.
    #[serde(with = "crate::rational::serde_rational")]
    pub eps: Rational,
    /// Squared half-widths `4^(±m)·2ε/4^t`.
    #[serde(with = "pair_serde")]
    pub half_width_sq: RationalPair,
}

mod pair_serde {
    use super::*;
    pub fn serialize<S: serde::Serializer>(p: &RationalPair, s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq([display(&p.0), display(&p.1)])
    }
}

impl CoverRect {
    fn build(t: u32, q: u64, m: i32, p1: i64, p2: i64, theta: &RationalPair, eps: &Rational) -> Self {
        let qr = int(q as i64);
        let base = eps * int(2) / four_pow(t as i32);
        CoverRect {
            t,
            q,
            m,
            p1,
            p2,
            center: ((int(p1) + &theta.0) / &qr, (int(p2) + &theta.1) / &qr),
            eps: eps.clone(),
            half_width_sq: (&base * four_pow(m), &base * four_pow(-m)),
        }
    }

    /// Exact membership of a point of the unit square.
    pub fn contains(&self, x: &RationalPair) -> bool {
        if !(in_unit(&x.0) && in_unit(&x.1)) {
            return false;
        }
        let a = &x.0 - &self.center.0;
        let b = &x.1 - &self.center.1;
        &a * &a < self.half_width_sq.0 && &b * &b < self.half_width_sq.1
    }

    /// `w1² · w2²`, equal to `(2ε/4^t)²` for every `m`.
    pub fn half_width_product_sq(&self) -> Rational {
        &self.half_width_sq.0 * &self.half_width_sq.1
    }

    pub fn half_widths_f64(&self) -> (f64, f64) {
        (
            to_f64(&self.half_width_sq.0).sqrt(),
            to_f64(&self.half_width_sq.1).sqrt(),
        )
    }
}

/// Largest `M` with `4^M·ε ≤ 1`, or `None` when `ε = 0`.
pub fn max_abs_m(eps: &Rational) -> Option<u32> {
    if eps.is_zero() {
        return None;
    }
    let mut m = 0u32;
    while eps * four_pow(m as i32 + 1) <= Rational::one() {
        m += 1;
    }
    Some(m)
}

/// `ψ(2^t)` as used by the cover: the upper end of its enclosure.
pub fn level_eps(t: u32, psi: &ApproxFn) -> Result<Rational, CoverError> {
    psi.require_monotone()?;
    let v = psi.eval(dyadic(t))?;
    if v.hi > Rational::one() {
        return Err(CoverError::PsiTooLarge {
            t,
            value: display(&v.hi),
        });
    }
    Ok(v.hi)
}

/// `Σ_{2^t ≤ q < 2^(t+1)} (q+2)²`.
pub fn level_square_count(t: u32) -> u128 {
    let sq = |n: u128| n * (n + 1) * (2 * n + 1) / 6;
    let lo = dyadic(t) as u128;
    sq(2 * lo + 1) - sq(lo + 1)
}

/// Number of rectangles at level `t`: `(#m)·Σ_q (q+2)²`.
pub fn cover_cell_count(t: u32, psi: &ApproxFn) -> Result<u128, CoverError> {
    let eps = level_eps(t, psi)?;
    Ok(match max_abs_m(&eps) {
        None => 0,
        Some(mm) => (2 * mm as u128 + 1) * level_square_count(t),
    })
}

/// Lazy stream of the level-`t` cover, ordered by `q`, then `m`, then `(p1, p2)`.
pub struct CoverCells {
    t: u32,
    theta: RationalPair,
    eps: Rational,
    m_max: i32,
    q_end: u64,
    q: u64,
    m: i32,
    p1: i64,
    p2: i64,
    done: bool,
}

impl Iterator for CoverCells {
    type Item = CoverRect;

    fn next(&mut self) -> Option<CoverRect> {
        if self.done {
            return None;
        }
        let rect = CoverRect::build(self.t, self.q, self.m, self.p1, self.p2, &self.theta, &self.eps);
        let top = self.q as i64;
        if self.p2 < top {
            self.p2 += 1;
        } else if self.p1 < top {
            self.p1 += 1;
            self.p2 = -1;
        } else if self.m < self.m_max {
            self.m += 1;
            self.p1 = -1;
            self.p2 = -1;
        } else if self.q + 1 < self.q_end {
            self.q += 1;
            self.m = -self.m_max;
            self.p1 = -1;
            self.p2 = -1;
        } else {
            self.done = true;
        }
        Some(rect)
    }
}

pub fn cover_cells(t: u32, psi: &ApproxFn, theta: &RationalPair) -> Result<CoverCells, CoverError> {
    check_unit(theta)?;
    let eps = level_eps(t, psi)?;
    let m_max = max_abs_m(&eps);
    let q = dyadic(t);
    Ok(CoverCells {
        t,
        theta: theta.clone(),
        eps,
        m_max: m_max.unwrap_or(0) as i32,
        q_end: 2 * q,
        q,
        m: -(m_max.unwrap_or(0) as i32),
        p1: -1,
        p2: -1,
        done: m_max.is_none(),
    })
}

/// The whole level-`t` cover as a vector, refusing more than `limit` cells.
pub fn collect_cover(
    t: u32,
    psi: &ApproxFn,
    theta: &RationalPair,
    limit: u128,
) -> Result<Vec<CoverRect>, CoverError> {
    let cells = cover_cell_count(t, psi)?;
    if cells > limit {
        return Err(CoverError::TooManyCells { t, cells, limit });
    }
    Ok(cover_cells(t, psi, theta)?.collect())
}

/// Explicit constant `C(s) = 9·4^s·(1 + 2/(1 − 2^(s−2)))` with
/// `s_volume_level(t) ≤ C(s)·2^((3−s)t)·ψ(2^t)^(s−1)` whenever `ψ(2^t) ≤ 1`.
pub fn s_volume_constant(s: f64) -> f64 {
    9.0 * 4f64.powf(s) * (1.0 + 2.0 / (1.0 - 2f64.powf(s - 2.0)))
}

/// `Σ_q Σ_m (q+2)²·4^|m|·(√2·A)^s` with square side `A = 2^(1−|m|)·√(2ψ(2^t))/2^t`.
pub fn s_volume_level(t: u32, s: f64, psi: &ApproxFn) -> Result<f64, CoverError> {
    if !(s > 1.0 && s < 2.0) {
        return Err(CoverError::SOutOfRange(s.to_string()));
    }
    let eps = level_eps(t, psi)?;
    let Some(mm) = max_abs_m(&eps) else {
        return Ok(0.0);
    };
    let root = to_f64(&eps).sqrt();
    let scale = 0.5f64.powi(t as i32);
    let per_m = |m: u32| 4f64.powi(m as i32) * (4.0 * 0.5f64.powi(m as i32) * root * scale).powf(s);
    let m_sum: f64 = per_m(0) + 2.0 * (1..=mm).map(per_m).sum::<f64>();
    Ok(level_square_count(t) as f64 * m_sum)
}

/// The normalized level volume `s_volume_level(t) / (2^((3−s)t)·ψ(2^t)^(s−1))`.
pub fn s_volume_ratio(t: u32, s: f64, psi: &ApproxFn) -> Result<f64, CoverError> {
    let v = s_volume_level(t, s, psi)?;
    let eps = to_f64(&level_eps(t, psi)?);
    Ok(v / (2f64.powf((3.0 - s) * t as f64) * eps.powf(s - 1.0)))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailRow {
    pub t: u32,
    pub cells: u128,
    pub s_volume: f64,
    /// `Σ_{ℓ ≤ u ≤ t} s_volume_level(u)`
    pub cover_sum: f64,
    /// `Σ_{2^ℓ ≤ q < 2^(t+1)} q^(2−s) ψ(q)^(s−1)`
    pub comparison_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TailReport {
    pub s: f64,
    pub rows: Vec<TailRow>,
}

impl TailReport {
    /// Limit estimates of both sums at level `t`, from a geometric fit of the
    /// last `window` block values up to `t`.
    pub fn extrapolated(&self, t: u32, window: usize) -> Option<(f64, f64)> {
        let upto: Vec<&TailRow> = self.rows.iter().filter(|r| r.t <= t).collect();
        if upto.len() < window.max(2) {
            return None;
        }
        let tail = &upto[upto.len() - window.max(2)..];
        let cover_blocks: Vec<(u32, f64)> = tail.iter().map(|r| (r.t, r.s_volume)).collect();
        let mut prev = upto.len() - window.max(2);
        let mut cmp_blocks = Vec::new();
        for r in tail {
            let before = if prev == 0 { 0.0 } else { upto[prev - 1].comparison_sum };
            cmp_blocks.push((r.t, r.comparison_sum - before));
            prev += 1;
        }
        let last = upto.last().unwrap();
        Some((
            geometric_limit(last.cover_sum, &cover_blocks),
            geometric_limit(last.comparison_sum, &cmp_blocks),
        ))
    }
}

/// `S + b·r/(1−r)` where `r` is the fitted block ratio, or `∞` if `r ≥ 1`.
pub fn geometric_limit(partial: f64, blocks: &[(u32, f64)]) -> f64 {
    if blocks.iter().any(|b| b.1 <= 0.0) {
        return partial;
    }
    let pts: Vec<(f64, f64)> = blocks.iter().map(|&(t, b)| (t as f64, b.log2())).collect();
    let r = 2f64.powf(least_squares(&pts).0);
    if r >= 1.0 {
        return f64::INFINITY;
    }
    partial + blocks.last().unwrap().1 * r / (1.0 - r)
}

/// Per-level cover volumes next to partial sums of `Σ q^(2−s) ψ^(s−1)`.
pub fn cover_tail(start: u32, t_max: u32, s: f64, psi: &ApproxFn) -> Result<TailReport, CoverError> {
    if start > t_max {
        return Err(CoverError::EmptyRange { start, end: t_max });
    }
    let mut rows = Vec::new();
    let (mut cover_sum, mut comparison_sum) = (0.0, 0.0);
    for t in start..=t_max {
        let s_volume = s_volume_level(t, s, psi)?;
        cover_sum += s_volume;
        for q in dyadic(t)..2 * dyadic(t) {
            let v = psi.eval_f64(q)?;
            if v > 0.0 {
                comparison_sum += (q as f64).powf(2.0 - s) * v.powf(s - 1.0);
            }
        }
        rows.push(TailRow {
            t,
            cells: cover_cell_count(t, psi)?,
            s_volume,
            cover_sum,
            comparison_sum,
        });
    }
    Ok(TailReport { s, rows })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Violation {
    #[serde(with = "pair_serde")]
    pub x: RationalPair,
    pub q: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SoundnessReport {
    pub t: u32,
    pub samples: usize,
    /// Pairs `(x, q)` with `∏ ‖q xᵢ − θᵢ‖ < ψ(2^t)`.
    pub solutions: usize,
    pub violations: Vec<Violation>,
}

/// Every rectangle of the level-`t` cover for denominator `q`, scanned for `x`.
fn scan_q(t: u32, q: u64, eps: &Rational, theta: &RationalPair, x: &RationalPair) -> bool {
    let Some(mm) = max_abs_m(eps) else {
        return false;
    };
    let mm = mm as i32;
    (-mm..=mm).any(|m| {
        (-1..=q as i64).any(|p1| {
            (-1..=q as i64).any(|p2| CoverRect::build(t, q, m, p1, p2, theta, eps).contains(x))
        })
    })
}

/// Checks that every sample solving the level-`t` inequality lies in the cover.
pub fn check_cover_soundness(
    t: u32,
    psi: &ApproxFn,
    theta: &RationalPair,
    samples: &[RationalPair],
) -> Result<SoundnessReport, CoverError> {
    check_unit(theta)?;
    for x in samples {
        check_unit(x)?;
    }
    let eps = level_eps(t, psi)?;
    let per_sample: Vec<(usize, Vec<Violation>)> = samples
        .par_iter()
        .map(|x| {
            let mut solutions = 0;
            let mut violations = Vec::new();
            for q in dyadic(t)..2 * dyadic(t) {
                let (p1, d1) = shifted_nearest(q, &x.0, &theta.0);
                let (p2, d2) = shifted_nearest(q, &x.1, &theta.1);
                if &d1 * &d2 >= eps {
                    continue;
                }
                solutions += 1;
                let covered = match decompose_distances(&d1, &d2, &eps) {
                    Ok(m) => CoverRect::build(t, q, m, p1, p2, theta, &eps).contains(x),
                    Err(_) => false,
                } || scan_q(t, q, &eps, theta, x);
                if !covered {
                    violations.push(Violation { x: x.clone(), q });
                }
            }
            (solutions, violations)
        })
        .collect();
    let solutions = per_sample.iter().map(|p| p.0).sum();
    let violations = per_sample.into_iter().flat_map(|p| p.1).collect();
    Ok(SoundnessReport {
        t,
        samples: samples.len(),
        solutions,
        violations,
    })
}

/// Seeded sample points: half uniform rationals, half perturbations of shifted
/// rationals `(p + θ)/q` with `q` in level `t`, so that solutions actually occur.
pub fn soundness_samples(t: u32, theta: &RationalPair, count: usize, seed: u64) -> Vec<RationalPair> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let den: i64 = 1 << 20;
    let clamp = |x: Rational| x.max(int(0)).min(int(1));
    (0..count)
        .map(|k| {
            if k % 2 == 0 {
                (rat(rng.random_range(0..=den), den), rat(rng.random_range(0..=den), den))
            } else {
                let q = rng.random_range(dyadic(t)..2 * dyadic(t)) as i64;
                let mut coord = |th: &Rational| {
                    let p = rng.random_range(-1..=q);
                    let jitter = rat(rng.random_range(-4096..=4096), den * q * q);
                    clamp((int(p) + th) / int(q) + jitter)
                };
                (coord(&theta.0), coord(&theta.1))
            }
        })
        .collect()
}
