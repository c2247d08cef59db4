//! Nested Cantor-rectangle construction of weighted badly approximable points.
//!
//! Rectangles at level `n` have sides `I_n = ¼R^(−(1+i)(n+1))` and
//! `J_n = ¼R^(−(1+j)(n+1))`. A node is addressed by its index path: the level-0
//! grid cell followed by one child index per level, so corners are exact sums
//! `Σ colₖ·Iₖ`. Geometry is evaluated as rigorous fixed-point enclosures and
//! every intersection test is conservative: a forbidden rectangle that cannot
//! be separated from a child marks it bad, which matches the closed-set
//! semantics on exact contact.

use std::fmt;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::Ratio;
use num_traits::{One, Signed, ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::enclosure::{floor_pow, simplest_between, Enclosure, Monomial};
use crate::rational::{int, nearest_int_dist, to_f64, Rational, RationalPair};

/// Default cap on single-path descent depth.
pub const DEFAULT_DEPTH_CAP: u32 = 6;
/// Default cap on full-tree depth.
pub const FULL_TREE_DEPTH_CAP: u32 = 2;
/// Relative band in which floating-point certificate checks defer to exact arithmetic.
const FLOAT_BAND: f64 = 1e-9;
const Q_CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CantorError {
    #[error("R = {0} must be at least 11")]
    RTooSmall(u64),
    #[error("weights must satisfy 0 < i ≤ j, i + j = 1; got i = {0}")]
    BadWeights(String),
    #[error("depth must be at least 1")]
    ZeroDepth,
    #[error("depth {depth} exceeds the cap {cap}")]
    DepthCap { depth: u32, cap: u32 },
    #[error("grid index {0:?} out of range")]
    BadIndex((u32, u32)),
    #[error("malformed selector `{0}`; expected first | center | seed:<n>")]
    BadSelector(String),
    #[error("refine shortfall at {path:?}: {good} good children, {keep} required")]
    Shortfall { path: Vec<(u32, u32)>, good: u64, keep: u64 },
    #[error("{kind} children at {path:?}: {count} exceeds the bound {bound}")]
    BadCount {
        kind: PairKind,
        path: Vec<(u32, u32)>,
        count: u64,
        bound: u64,
    },
    #[error("{} bad inhomogeneous pairs at {path:?} (q* = {q_star}, differenced pair violates (H): {chase_holds})", pairs.len())]
    InhomPairs {
        path: Vec<(u32, u32)>,
        pairs: Vec<BadPair>,
        q_star: u64,
        chase_holds: bool,
    },
}

impl CantorError {
    /// Errors that contradict the construction's counting rather than bad input.
    pub fn is_contradiction(&self) -> bool {
        matches!(
            self,
            CantorError::Shortfall { .. } | CantorError::BadCount { .. } | CantorError::InhomPairs { .. }
        )
    }
}

fn r64(x: &Ratio<i64>) -> f64 {
    *x.numer() as f64 / *x.denom() as f64
}

/// `⌊k · base^exp⌋` for a non-negative rational exponent.
fn floor_scaled_pow(k: u64, base: u64, exp: Ratio<i64>) -> u64 {
    let den = *exp.denom() as u32;
    let v = num_traits::pow(BigUint::from(k), den as usize) * num_traits::pow(BigUint::from(base), *exp.numer() as usize);
    v.nth_root(den).to_u64().expect("grid size fits u64")
}

/// `⌈k · base^exp⌉` for a non-negative rational exponent.
fn ceil_scaled_pow(k: u64, base: u64, exp: Ratio<i64>) -> u64 {
    crate::enclosure::ceil_scaled_pow(k, base, exp)
        .to_u64()
        .expect("count fits u64")
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstructionParams {
    pub r: u64,
    pub i: Ratio<i64>,
    pub j: Ratio<i64>,
    /// `None` runs the homogeneous construction only.
    pub theta: Option<RationalPair>,
    /// `⌊3/i⌋`
    pub d: u32,
    /// `8^(−1/i)·R^(−2(1+i)/i)`
    pub c: Monomial,
    /// `c_*` with `c_*^i = ⅛R^(−(1+i)(d+2))`
    pub c_star: Monomial,
    /// Children per node along x: `⌊R^(1+i)⌋`.
    pub cols: u64,
    /// Children per node along y: `⌊R^(1+j)⌋`.
    pub rows: u64,
    /// Level-0 grid: `⌊1/I₀⌋ × ⌊1/J₀⌋`.
    pub grid0: (u64, u64),
    /// Retained good children per refined node.
    pub keep: u64,
}

impl ConstructionParams {
    pub fn new(r: u64, i: Ratio<i64>, theta: Option<RationalPair>) -> Result<Self, CantorError> {
        if r < 11 {
            return Err(CantorError::RTooSmall(r));
        }
        let j = Ratio::one() - i;
        if !(i > Ratio::zero() && i <= j) {
            return Err(CantorError::BadWeights(i.to_string()));
        }
        let one = Ratio::one();
        let d = (Ratio::from_integer(3) / i).floor().to_integer() as u32;
        let c = Monomial::power(8, -one / i).times(r, -(one + i) * 2 / i);
        let c_star_i = Monomial::power(8, -one).times(r, -(one + i) * (d as i64 + 2));
        let c_star = c_star_i.pow(one / i);
        let cols = floor_pow(r, one + i).to_u64().expect("cols fit u64");
        let rows = floor_pow(r, one + j).to_u64().expect("rows fit u64");
        let grid0 = (floor_scaled_pow(4, r, one + i), floor_scaled_pow(4, r, one + j));
        let penalty = if theta.is_some() { 6 } else { 5 };
        let keep = r.pow(3) - ceil_scaled_pow(penalty, r, one + j);
        Ok(ConstructionParams {
            r,
            i,
            j,
            theta,
            d,
            c,
            c_star,
            cols,
            rows,
            grid0,
            keep,
        })
    }

    pub fn inhomogeneous(&self) -> bool {
        self.theta.is_some()
    }

    pub fn children_per_node(&self) -> u64 {
        self.cols * self.rows
    }

    /// `I_n`
    pub fn width(&self, n: u32) -> Monomial {
        Monomial::power(4, -Ratio::one()).times(self.r, -(Ratio::one() + self.i) * (n as i64 + 1))
    }

    /// `J_n`
    pub fn height(&self, n: u32) -> Monomial {
        Monomial::power(4, -Ratio::one()).times(self.r, -(Ratio::one() + self.j) * (n as i64 + 1))
    }

    /// `R^k` for `k ≥ 0`, or 1 for negative `k` (empty ranges start at 1).
    pub fn r_pow(&self, k: i64) -> u64 {
        if k <= 0 {
            1
        } else {
            self.r.checked_pow(k as u32).expect("R^k fits u64")
        }
    }

    /// Bound on bad-H children per refined node: `3⌊J_n/J_{n+1}⌋`.
    pub fn bad_h_bound(&self) -> u64 {
        3 * self.rows
    }

    /// Range of condition (I) after reaching level `n`: `0 < q < R^(n−d)`.
    pub fn q_i_bound(&self, n: u32) -> u64 {
        if n < self.d {
            1
        } else {
            self.r_pow((n - self.d) as i64)
        }
    }
}

/// Rigorous fixed-point enclosure `lo ≤ v·2^F ≤ hi`.
#[derive(Debug, Clone)]
struct Fx {
    lo: BigInt,
    hi: BigInt,
}

impl Fx {
    fn zero() -> Fx {
        Fx {
            lo: BigInt::zero(),
            hi: BigInt::zero(),
        }
    }

    fn from_enclosure(e: &Enclosure, f: u32) -> Fx {
        let scale = Rational::from_integer(BigInt::one() << f as usize);
        Fx {
            lo: (&e.lo * &scale).floor().to_integer(),
            hi: (&e.hi * &scale).ceil().to_integer(),
        }
    }

    fn from_rational(x: &Rational, f: u32) -> Fx {
        Fx::from_enclosure(&Enclosure::exact(x.clone()), f)
    }

    fn add(&self, o: &Fx) -> Fx {
        Fx {
            lo: &self.lo + &o.lo,
            hi: &self.hi + &o.hi,
        }
    }

    fn sub(&self, o: &Fx) -> Fx {
        Fx {
            lo: &self.lo - &o.hi,
            hi: &self.hi - &o.lo,
        }
    }

    fn scale(&self, k: u64) -> Fx {
        Fx {
            lo: &self.lo * k,
            hi: &self.hi * k,
        }
    }
}

/// Level sizes as fixed-point enclosures and floats.
#[derive(Debug, Clone)]
struct Geometry {
    f: u32,
    w: Vec<Fx>,
    h: Vec<Fx>,
    wf: Vec<f64>,
    hf: Vec<f64>,
}

impl Geometry {
    fn new(p: &ConstructionParams, max_level: u32) -> Geometry {
        let log_r = (p.r as f64).log2();
        let f = 128 + (2.0 * (max_level as f64 + 4.0) * log_r).ceil() as u32;
        let mut g = Geometry {
            f,
            w: Vec::new(),
            h: Vec::new(),
            wf: Vec::new(),
            hf: Vec::new(),
        };
        for n in 0..=max_level + 1 {
            let (w, h) = (p.width(n), p.height(n));
            g.w.push(Fx::from_enclosure(&w.enclosure(f + 64), f));
            g.h.push(Fx::from_enclosure(&h.enclosure(f + 64), f));
            g.wf.push(w.to_f64());
            g.hf.push(h.to_f64());
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum NodeStatus {
    Good,
    BadH,
    BadI,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum PairKind {
    H,
    I,
}

impl fmt::Display for PairKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PairKind::H => "bad-H",
            PairKind::I => "bad-I",
        })
    }
}

/// A rectangle of the construction, addressed by its index path.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RectNode {
    pub level: u32,
    /// Level-0 grid cell, then `(col, row)` of each child step.
    pub path: Vec<(u32, u32)>,
    pub status: NodeStatus,
}

impl RectNode {
    pub fn root(col: u32, row: u32) -> RectNode {
        RectNode {
            level: 0,
            path: vec![(col, row)],
            status: NodeStatus::Good,
        }
    }

    pub fn child(&self, col: u32, row: u32) -> RectNode {
        let mut path = self.path.clone();
        path.push((col, row));
        RectNode {
            level: self.level + 1,
            path,
            status: NodeStatus::Good,
        }
    }
}

/// A rational (or shifted rational) centre whose forbidden rectangle meets a node.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BadPair {
    pub p1: i64,
    pub p2: i64,
    pub q: u64,
    pub kind: PairKind,
}

/// Outcome of refining one node.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Refinement {
    pub path: Vec<(u32, u32)>,
    pub children: u64,
    pub pairs_h: Vec<BadPair>,
    pub pairs_i: Vec<BadPair>,
    /// Row-major indices `row·cols + col` of children met by an (H) rectangle.
    pub bad_h: Vec<u32>,
    /// Row-major indices of children met by an (I) rectangle.
    pub bad_i: Vec<u32>,
    pub good: u64,
    pub keep: u64,
}

impl Refinement {
    /// Retained children: the first `keep` good ones in row-major order.
    pub fn kept(&self, cols: u64) -> impl Iterator<Item = (u32, u32)> + '_ {
        let cols = cols as u32;
        (0..self.children as u32)
            .filter(move |k| self.bad_h.binary_search(k).is_err() && self.bad_i.binary_search(k).is_err())
            .take(self.keep as usize)
            .map(move |k| (k % cols, k / cols))
    }

    pub fn status(&self, col: u32, row: u32, cols: u64) -> NodeStatus {
        let k = row * cols as u32 + col;
        if self.bad_h.binary_search(&k).is_ok() {
            NodeStatus::BadH
        } else if self.bad_i.binary_search(&k).is_ok() {
            NodeStatus::BadI
        } else {
            NodeStatus::Good
        }
    }
}

/// Rule for picking one retained node per level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Selector {
    First,
    Center,
    Seed(u64),
}

impl Selector {
    pub fn parse(text: &str) -> Result<Selector, CantorError> {
        match text.trim() {
            "first" => Ok(Selector::First),
            "center" => Ok(Selector::Center),
            s => s
                .strip_prefix("seed:")
                .and_then(|n| n.parse().ok())
                .map(Selector::Seed)
                .ok_or_else(|| CantorError::BadSelector(text.to_string())),
        }
    }
}

impl fmt::Display for Selector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Selector::First => write!(f, "first"),
            Selector::Center => write!(f, "center"),
            Selector::Seed(n) => write!(f, "seed:{n}"),
        }
    }
}

struct Picker {
    selector: Selector,
    rng: Option<ChaCha8Rng>,
}

impl Picker {
    fn new(selector: &Selector) -> Picker {
        let rng = match selector {
            Selector::Seed(n) => Some(ChaCha8Rng::seed_from_u64(*n)),
            _ => None,
        };
        Picker {
            selector: selector.clone(),
            rng,
        }
    }

    /// Picks among `(col, row)` candidates of a `cols × rows` grid of `w × h` cells.
    fn pick(&mut self, cands: &[(u32, u32)], cols: u64, rows: u64, w: f64, h: f64) -> (u32, u32) {
        match self.selector {
            Selector::First => cands[0],
            Selector::Seed(_) => {
                let k = self.rng.as_mut().expect("seeded").random_range(0..cands.len());
                cands[k]
            }
            Selector::Center => {
                let dist = |&(c, r): &(u32, u32)| {
                    let dx = (c as f64 + 0.5 - cols as f64 / 2.0) * w;
                    let dy = (r as f64 + 0.5 - rows as f64 / 2.0) * h;
                    dx * dx + dy * dy
                };
                let mut best = cands[0];
                for c in cands {
                    if dist(c) < dist(&best) {
                        best = *c;
                    }
                }
                best
            }
        }
    }
}

/// Parameters plus precomputed geometry up to a level cap.
#[derive(Debug, Clone)]
pub struct Construction {
    pub params: ConstructionParams,
    pub max_level: u32,
    geo: Geometry,
    ci: Monomial,
    cj: Monomial,
    csi: Monomial,
    csj: Monomial,
}

impl Construction {
    pub fn new(params: ConstructionParams, max_level: u32) -> Construction {
        let geo = Geometry::new(&params, max_level);
        let ci = params.c.pow(params.i);
        let cj = params.c.pow(params.j);
        let csi = params.c_star.pow(params.i);
        let csj = params.c_star.pow(params.j);
        Construction {
            params,
            max_level,
            geo,
            ci,
            cj,
            csi,
            csj,
        }
    }

    fn check_path(&self, path: &[(u32, u32)]) -> Result<(), CantorError> {
        let p = &self.params;
        let level = path.len() as u32 - 1;
        if level > self.max_level {
            return Err(CantorError::DepthCap {
                depth: level,
                cap: self.max_level,
            });
        }
        for (k, &(c, r)) in path.iter().enumerate() {
            let (cols, rows) = if k == 0 { p.grid0 } else { (p.cols, p.rows) };
            if c as u64 >= cols || r as u64 >= rows {
                return Err(CantorError::BadIndex((c, r)));
            }
        }
        Ok(())
    }

    fn corner_fx(&self, path: &[(u32, u32)]) -> (Fx, Fx) {
        path.iter().enumerate().fold((Fx::zero(), Fx::zero()), |(x, y), (k, &(c, r))| {
            (x.add(&self.geo.w[k].scale(c as u64)), y.add(&self.geo.h[k].scale(r as u64)))
        })
    }

    /// Lower-left corner as floats.
    pub fn corner_f64(&self, path: &[(u32, u32)]) -> (f64, f64) {
        path.iter().enumerate().fold((0.0, 0.0), |(x, y), (k, &(c, r))| {
            (x + c as f64 * self.geo.wf[k], y + r as f64 * self.geo.hf[k])
        })
    }

    /// `[x0, y0, width, height]` as floats.
    pub fn rect_f64(&self, path: &[(u32, u32)]) -> [f64; 4] {
        let n = path.len() - 1;
        let (x, y) = self.corner_f64(path);
        [x, y, self.geo.wf[n], self.geo.hf[n]]
    }

    /// Exact lower-left corner as a sum of monomials.
    pub fn corner_terms(&self, path: &[(u32, u32)]) -> (Vec<(u32, Monomial)>, Vec<(u32, Monomial)>) {
        let p = &self.params;
        let xs = path.iter().enumerate().map(|(k, &(c, _))| (c, p.width(k as u32))).collect();
        let ys = path.iter().enumerate().map(|(k, &(_, r))| (r, p.height(k as u32))).collect();
        (xs, ys)
    }

    /// Level-0 collection: full `I₀ × J₀` cells from the origin; condition (H) is vacuous.
    pub fn init_level0(&self) -> Vec<RectNode> {
        let (cols, rows) = self.params.grid0;
        (0..rows as u32)
            .flat_map(|r| (0..cols as u32).map(move |c| RectNode::root(c, r)))
            .collect()
    }

    /// Children of `node` in row-major order, anchored at its lower-left corner.
    pub fn partition(&self, node: &RectNode) -> Vec<RectNode> {
        let p = &self.params;
        (0..p.rows as u32)
            .flat_map(|r| (0..p.cols as u32).map(move |c| (c, r)))
            .map(|(c, r)| node.child(c, r))
            .collect()
    }

    /// Whether `child` lies inside `parent`, decided on the enclosures.
    pub fn nested(&self, parent: &RectNode, child: &RectNode) -> bool {
        if child.path.len() != parent.path.len() + 1 || child.path[..parent.path.len()] != parent.path[..] {
            return false;
        }
        let n = parent.level as usize;
        let (px, py) = self.corner_fx(&parent.path);
        let (cx, cy) = self.corner_fx(&child.path);
        let cx1 = cx.add(&self.geo.w[n + 1]);
        let cy1 = cy.add(&self.geo.h[n + 1]);
        let px1 = px.add(&self.geo.w[n]);
        let py1 = py.add(&self.geo.h[n]);
        // Exact: the last child ends at `cols·I_{n+1} ≤ I_n` since `cols = ⌊R^(1+i)⌋`.
        let (c, r) = *child.path.last().expect("non-empty");
        let fits = (c as u64) < self.params.cols && (r as u64) < self.params.rows;
        fits && cx.lo >= px.lo && cy.lo >= py.lo && cx1.hi <= px1.hi + 2u32 && cy1.hi <= py1.hi + 2u32
    }

    /// Pairs whose forbidden rectangles meet `node`, over `q ∈ [q_lo, q_hi)`.
    fn scan(&self, path: &[(u32, u32)], q_lo: u64, q_hi: u64, kind: PairKind) -> Vec<BadPair> {
        if q_lo >= q_hi {
            return Vec::new();
        }
        let p = &self.params;
        let n = path.len() - 1;
        let zero = (int(0), int(0));
        let theta = match kind {
            PairKind::H => &zero,
            PairKind::I => p.theta.as_ref().unwrap_or(&zero),
        };
        let (ci, cj) = match kind {
            PairKind::H => (&self.ci, &self.cj),
            PairKind::I => (&self.csi, &self.csj),
        };
        let (x0f, y0f) = self.corner_f64(path);
        let (wf, hf) = (self.geo.wf[n], self.geo.hf[n]);
        let (t1, t2) = (to_f64(&theta.0), to_f64(&theta.1));
        // q·(half-width) = coeff·q^(−i) is largest at q_lo.
        let qhx = ci.to_f64() * (q_lo as f64).powf(-r64(&p.i)) * (1.0 + 1e-6);
        let qhy = cj.to_f64() * (q_lo as f64).powf(-r64(&p.j)) * (1.0 + 1e-6);
        let chunks: Vec<u64> = (q_lo..q_hi).step_by(Q_CHUNK as usize).collect();
        let cands: Vec<(i64, i64, u64)> = chunks
            .into_par_iter()
            .map(|start| {
                let mut out = Vec::new();
                for q in start..(start + Q_CHUNK).min(q_hi) {
                    let qf = q as f64;
                    let slack = 1e-9 + qf * 1e-12;
                    let a = (qf * x0f - t1 - qhx - slack).ceil();
                    let b = (qf * (x0f + wf) - t1 + qhx + slack).floor();
                    if a > b {
                        continue;
                    }
                    let c = (qf * y0f - t2 - qhy - slack).ceil();
                    let d = (qf * (y0f + hf) - t2 + qhy + slack).floor();
                    if c > d {
                        continue;
                    }
                    for p1 in a as i64..=b as i64 {
                        for p2 in c as i64..=d as i64 {
                            out.push((p1, p2, q));
                        }
                    }
                }
                out
            })
            .collect::<Vec<_>>()
            .concat();
        let (x0, y0) = self.corner_fx(path);
        let x1 = x0.add(&self.geo.w[n]);
        let y1 = y0.add(&self.geo.h[n]);
        cands
            .into_iter()
            .filter(|&(p1, p2, q)| {
                let (l1, u1) = self.forbidden(p1, q, &theta.0, ci, p.i);
                let (l2, u2) = self.forbidden(p2, q, &theta.1, cj, p.j);
                !(x1.hi < l1.lo || x0.lo > u1.hi || y1.hi < l2.lo || y0.lo > u2.hi)
            })
            .map(|(p1, p2, q)| BadPair { p1, p2, q, kind })
            .collect()
    }

    /// `[(p+θ)/q − h, (p+θ)/q + h]` with `h = coeff·q^(−(1+w))`.
    fn forbidden(&self, p: i64, q: u64, shift: &Rational, coeff: &Monomial, w: Ratio<i64>) -> (Fx, Fx) {
        let f = self.geo.f;
        let centre = Fx::from_rational(&((int(p) + shift) / int(q as i64)), f);
        let half = coeff.clone().times(q, -(Ratio::one() + w));
        let half = Fx::from_enclosure(&half.enclosure(f + 64), f);
        (centre.sub(&half), centre.add(&half))
    }

    /// Homogeneous scan over `R^n ≤ q < R^(n+1)`.
    pub fn bad_pairs_homog(&self, node: &RectNode) -> Vec<BadPair> {
        let n = node.level as i64;
        self.scan(&node.path, self.params.r_pow(n), self.params.r_pow(n + 1), PairKind::H)
    }

    /// Inhomogeneous scan over `R^(n−d) ≤ q < R^(n+1−d)`; empty for `n < d`.
    pub fn bad_pairs_inhom(&self, node: &RectNode) -> Vec<BadPair> {
        let p = &self.params;
        let n = node.level as i64;
        if p.theta.is_none() || n < p.d as i64 {
            return Vec::new();
        }
        self.scan(&node.path, p.r_pow(n - p.d as i64), p.r_pow(n + 1 - p.d as i64), PairKind::I)
    }

    /// Row-major indices of children met by the pair's forbidden rectangle.
    fn children_hit(&self, path: &[(u32, u32)], pair: &BadPair) -> Vec<u32> {
        let p = &self.params;
        let n = path.len() - 1;
        let zero = (int(0), int(0));
        let (theta, ci, cj) = match pair.kind {
            PairKind::H => (&zero, &self.ci, &self.cj),
            PairKind::I => (p.theta.as_ref().unwrap_or(&zero), &self.csi, &self.csj),
        };
        let (l1, u1) = self.forbidden(pair.p1, pair.q, &theta.0, ci, p.i);
        let (l2, u2) = self.forbidden(pair.p2, pair.q, &theta.1, cj, p.j);
        let (x0, y0) = self.corner_fx(path);
        let cols = index_range(&x0, &self.geo.w[n + 1], &l1, &u1, p.cols);
        let rows = index_range(&y0, &self.geo.h[n + 1], &l2, &u2, p.rows);
        let mut out = Vec::new();
        if let (Some((c0, c1)), Some((r0, r1))) = (cols, rows) {
            for r in r0..=r1 {
                for c in c0..=c1 {
                    out.push((r * p.cols + c) as u32);
                }
            }
        }
        out
    }

    /// Partitions `node`, marks bad children, checks the counting bounds and
    /// keeps the first `keep` good children in row-major order.
    pub fn refine(&self, node: &RectNode) -> Result<Refinement, CantorError> {
        self.check_path(&node.path)?;
        if node.level >= self.max_level {
            return Err(CantorError::DepthCap {
                depth: node.level + 1,
                cap: self.max_level,
            });
        }
        let p = &self.params;
        let pairs_h = self.bad_pairs_homog(node);
        let pairs_i = self.bad_pairs_inhom(node);
        if pairs_i.len() > 1 {
            let (a, b) = (&pairs_i[0], &pairs_i[1]);
            let q_star = a.q.abs_diff(b.q);
            return Err(CantorError::InhomPairs {
                path: node.path.clone(),
                pairs: pairs_i.clone(),
                q_star,
                chase_holds: self.chase_holds(node.level, q_star),
            });
        }
        let collect = |pairs: &[BadPair]| {
            let mut v: Vec<u32> = pairs.iter().flat_map(|pr| self.children_hit(&node.path, pr)).collect();
            v.sort_unstable();
            v.dedup();
            v
        };
        let bad_h = collect(&pairs_h);
        let bad_i = collect(&pairs_i);
        if bad_h.len() as u64 > p.bad_h_bound() {
            return Err(CantorError::BadCount {
                kind: PairKind::H,
                path: node.path.clone(),
                count: bad_h.len() as u64,
                bound: p.bad_h_bound(),
            });
        }
        if bad_i.len() > 4 {
            return Err(CantorError::BadCount {
                kind: PairKind::I,
                path: node.path.clone(),
                count: bad_i.len() as u64,
                bound: 4,
            });
        }
        let children = p.children_per_node();
        let union = bad_h.iter().chain(&bad_i).collect::<std::collections::BTreeSet<_>>().len() as u64;
        let good = children - union;
        if good < p.keep {
            return Err(CantorError::Shortfall {
                path: node.path.clone(),
                good,
                keep: p.keep,
            });
        }
        Ok(Refinement {
            path: node.path.clone(),
            children,
            pairs_h,
            pairs_i,
            bad_h,
            bad_i,
            good,
            keep: p.keep,
        })
    }

    /// Whether two inhomogeneous pairs at level `n` with `q* = |q − q̃|` force a
    /// violation of (H): `0 < q* < R^n` and `4R^(n+1−d)·I_n ≤ c^i q*^(−i)` (and
    /// the same along y), which is the differencing argument.
    pub fn chase_holds(&self, n: u32, q_star: u64) -> bool {
        let p = &self.params;
        if q_star == 0 || q_star >= p.r_pow(n as i64) {
            return false;
        }
        let k = n as i64 + 1 - p.d as i64;
        let rk = (p.r as f64).powi(k as i32);
        let lhs_x = 4.0 * rk * self.geo.wf[n as usize];
        let lhs_y = 4.0 * rk * self.geo.hf[n as usize];
        let qs = q_star as f64;
        lhs_x <= self.ci.to_f64() * qs.powf(-r64(&p.i)) && lhs_y <= self.cj.to_f64() * qs.powf(-r64(&p.j))
    }

    fn pick_root(&self, picker: &mut Picker) -> RectNode {
        let p = &self.params;
        let roots: Vec<(u32, u32)> = self.init_level0().iter().map(|n| n.path[0]).collect();
        let (c, r) = picker.pick(&roots, p.grid0.0, p.grid0.1, self.geo.wf[0], self.geo.hf[0]);
        RectNode::root(c, r)
    }

    /// Single-branch descent to level `depth`, then a certified witness.
    pub fn descend(&self, depth: u32, selector: &Selector) -> Result<Descent, CantorError> {
        if depth == 0 {
            return Err(CantorError::ZeroDepth);
        }
        if depth > self.max_level {
            return Err(CantorError::DepthCap {
                depth,
                cap: self.max_level,
            });
        }
        let p = &self.params;
        let mut picker = Picker::new(selector);
        let mut node = self.pick_root(&mut picker);
        let mut levels = Vec::new();
        for n in 0..depth {
            let refinement = self.refine(&node)?;
            let kept: Vec<(u32, u32)> = refinement.kept(p.cols).collect();
            let next = picker.pick(&kept, p.cols, p.rows, self.geo.wf[n as usize + 1], self.geo.hf[n as usize + 1]);
            levels.push(LevelSummary::from_refinement(&refinement));
            node = node.child(next.0, next.1);
        }
        let witness = self.witness(&node.path);
        let certificate = verify_witness(p, &witness, p.r_pow(depth as i64), p.q_i_bound(depth));
        Ok(Descent {
            selector: selector.to_string(),
            node,
            levels,
            witness,
            certificate,
        })
    }

    /// Simplest rational in the central third of the rectangle, per coordinate.
    pub fn witness(&self, path: &[(u32, u32)]) -> RationalPair {
        let n = path.len() - 1;
        let f = self.geo.f;
        let (x0, y0) = self.corner_fx(path);
        let pick = |c: &Fx, w: &Fx| {
            let den = BigInt::one() << f as usize;
            let lo = &c.hi + (&w.hi + 2u32) / 3u32 + 1u32;
            let hi = &c.lo + (&w.lo * 2u32) / 3u32 - 1u32;
            simplest_between(&Rational::new(lo, den.clone()), &Rational::new(hi, den))
        };
        (pick(&x0, &self.geo.w[n]), pick(&y0, &self.geo.h[n]))
    }

    /// Full tree from one root down to `depth` levels of refinement.
    pub fn build_tree(&self, depth: u32, root: (u32, u32)) -> Result<Tree, CantorError> {
        let root = RectNode::root(root.0, root.1);
        self.check_path(&root.path)?;
        if depth > self.max_level {
            return Err(CantorError::DepthCap {
                depth,
                cap: self.max_level,
            });
        }
        let p = &self.params;
        let mut internal: Vec<Vec<Vec<(u32, u32)>>> = vec![vec![root.path.clone()]];
        let mut refinements: Vec<Vec<LevelSummary>> = Vec::new();
        let mut stored: Vec<Vec<Refinement>> = Vec::new();
        for level in 0..depth {
            let nodes = &internal[level as usize];
            let refs: Vec<Refinement> = nodes
                .par_iter()
                .map(|path| {
                    self.refine(&RectNode {
                        level,
                        path: path.clone(),
                        status: NodeStatus::Good,
                    })
                })
                .collect::<Result<_, _>>()?;
            refinements.push(refs.iter().map(LevelSummary::from_refinement).collect());
            if level + 1 < depth {
                let next: Vec<Vec<(u32, u32)>> = refs
                    .iter()
                    .flat_map(|r| {
                        r.kept(p.cols).map(move |(c, w)| {
                            let mut path = r.path.clone();
                            path.push((c, w));
                            path
                        })
                    })
                    .collect();
                internal.push(next);
            }
            stored.push(refs);
        }
        Ok(Tree {
            depth,
            internal,
            last: stored.pop(),
            summaries: refinements,
        })
    }

    /// Refines every level-0 cell; returns per-root summaries.
    pub fn refine_all_roots(&self) -> Result<Vec<LevelSummary>, CantorError> {
        self.init_level0()
            .par_iter()
            .map(|n| self.refine(n).map(|r| LevelSummary::from_refinement(&r)))
            .collect()
    }

    /// Visits every leaf of `tree` as `[x0, y0, w, h]`.
    pub fn for_each_leaf(&self, tree: &Tree, mut f: impl FnMut([f64; 4])) {
        let p = &self.params;
        match &tree.last {
            None => {
                for path in &tree.internal[0] {
                    f(self.rect_f64(path));
                }
            }
            Some(refs) => {
                let n = tree.depth as usize;
                let (w, h) = (self.geo.wf[n], self.geo.hf[n]);
                for r in refs {
                    let (x, y) = self.corner_f64(&r.path);
                    for (c, row) in r.kept(p.cols) {
                        f([x + c as f64 * w, y + row as f64 * h, w, h]);
                    }
                }
            }
        }
    }

    /// Visits every retained node (internal nodes first, then leaves).
    pub fn for_each_node(&self, tree: &Tree, mut f: impl FnMut(u32, Vec<(u32, u32)>, [f64; 4])) {
        for (level, nodes) in tree.internal.iter().enumerate() {
            for path in nodes {
                f(level as u32, path.clone(), self.rect_f64(path));
            }
        }
        if let Some(refs) = &tree.last {
            for r in refs {
                for (c, row) in r.kept(self.params.cols) {
                    let mut path = r.path.clone();
                    path.push((c, row));
                    let rect = self.rect_f64(&path);
                    f(tree.depth, path, rect);
                }
            }
        }
    }

    /// Dyadic exponents `k` with `I_depth ≤ 2^(−k) ≤ I₀`.
    pub fn natural_scales(&self, depth: u32) -> (u32, u32) {
        let k_lo = (-self.geo.wf[0].log2()).ceil() as u32;
        let k_hi = (-self.geo.wf[depth as usize].log2()).floor() as u32;
        (k_lo, k_hi)
    }
}

/// Conservative index range of cells `[x0 + k·w, x0 + (k+1)·w]`, `0 ≤ k < count`,
/// that may meet `[l, u]`.
fn index_range(x0: &Fx, w: &Fx, l: &Fx, u: &Fx, count: u64) -> Option<(u64, u64)> {
    // Cell k is separated on the left iff x0.hi + (k+1)·w.hi < l.lo.
    let lo_num = &l.lo - &x0.hi;
    let k_min = if lo_num.is_positive() {
        lo_num.div_ceil(&w.hi) - 1
    } else {
        BigInt::zero()
    };
    // Cell k is separated on the right iff x0.lo + k·w.lo > u.hi.
    let hi_num = &u.hi - &x0.lo;
    if hi_num.is_negative() {
        return None;
    }
    let k_max = hi_num.div_floor(&w.lo);
    let k_min = k_min.to_u64().unwrap_or(u64::MAX);
    let k_max = k_max.to_u64().unwrap_or(u64::MAX).min(count - 1);
    (k_min <= k_max).then_some((k_min, k_max))
}

/// Per-node counts recorded during descent and tree building.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelSummary {
    pub path: Vec<(u32, u32)>,
    pub pairs_h: usize,
    pub pairs_i: usize,
    pub bad_h: u64,
    pub bad_i: u64,
    pub good: u64,
    pub keep: u64,
}

impl LevelSummary {
    fn from_refinement(r: &Refinement) -> LevelSummary {
        LevelSummary {
            path: r.path.clone(),
            pairs_h: r.pairs_h.len(),
            pairs_i: r.pairs_i.len(),
            bad_h: r.bad_h.len() as u64,
            bad_i: r.bad_i.len() as u64,
            good: r.good,
            keep: r.keep,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Descent {
    pub selector: String,
    pub node: RectNode,
    pub levels: Vec<LevelSummary>,
    #[serde(with = "crate::rational::serde_rational::pair")]
    pub witness: RationalPair,
    pub certificate: WitnessCertificate,
}

/// Retained nodes from one root; leaves are implied by the last refinements.
#[derive(Debug, Clone)]
pub struct Tree {
    pub depth: u32,
    /// Paths of retained nodes at levels `0..depth`.
    pub internal: Vec<Vec<Vec<(u32, u32)>>>,
    last: Option<Vec<Refinement>>,
    /// Per-level refinement summaries.
    pub summaries: Vec<Vec<LevelSummary>>,
}

impl Tree {
    pub fn retained(&self, level: u32) -> u64 {
        if (level as usize) < self.internal.len() {
            self.internal[level as usize].len() as u64
        } else if level == self.depth {
            self.last.as_ref().map_or(0, |rs| rs.iter().map(|r| r.keep).sum())
        } else {
            0
        }
    }

    pub fn refined(&self) -> impl Iterator<Item = &LevelSummary> {
        self.summaries.iter().flatten()
    }
}

/// Exact re-check of conditions (H) and (I) for a rational point.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct WitnessCertificate {
    #[serde(with = "crate::rational::serde_rational")]
    pub x1: Rational,
    #[serde(with = "crate::rational::serde_rational")]
    pub x2: Rational,
    pub c: String,
    pub c_star: String,
    pub c_f64: f64,
    pub c_star_f64: f64,
    #[serde(rename = "Q_H")]
    pub q_h: u64,
    #[serde(rename = "Q_I")]
    pub q_i: u64,
    /// `min_q max{‖qx₁‖^(1/i), ‖qx₂‖^(1/j)}·q` over `0 < q < Q_H`.
    #[serde(rename = "min_margin_H")]
    pub min_margin_h: Option<f64>,
    #[serde(rename = "argmin_H")]
    pub argmin_h: Option<u64>,
    /// The inhomogeneous analogue over `0 < q < Q_I`.
    #[serde(rename = "min_margin_I")]
    pub min_margin_i: Option<f64>,
    #[serde(rename = "argmin_I")]
    pub argmin_i: Option<u64>,
    #[serde(rename = "violation_H")]
    pub violation_h: Option<u64>,
    #[serde(rename = "violation_I")]
    pub violation_i: Option<u64>,
    pub passed: bool,
}

/// Running value of `q·x − θ mod 1` as `s/den`, advanced by repeated addition.
enum Tracker {
    Small { den: u128, step: u128, s: u128 },
    Big { den: BigInt, step: BigInt, s: BigInt },
}

impl Tracker {
    /// State at `q = start − 1`, so the next `advance` yields `q = start`.
    fn new(x: &Rational, shift: &Rational, start: u64) -> Tracker {
        let den = x.denom() * shift.denom();
        let step = (x.numer() * shift.denom()).mod_floor(&den);
        let s0 = (-(shift.numer() * x.denom())).mod_floor(&den);
        let s = (&s0 + &step * BigInt::from(start - 1)).mod_floor(&den);
        match (den.to_u128(), step.to_u128(), s.to_u128()) {
            (Some(d), Some(st), Some(s)) if d < 1u128 << 126 => Tracker::Small { den: d, step: st, s },
            _ => Tracker::Big { den, step, s },
        }
    }

    fn advance(&mut self) {
        match self {
            Tracker::Small { den, step, s } => {
                *s += *step;
                if *s >= *den {
                    *s -= *den;
                }
            }
            Tracker::Big { den, step, s } => {
                *s += &*step;
                if *s >= *den {
                    *s -= &*den;
                }
            }
        }
    }

    fn dist_f64(&self) -> f64 {
        match self {
            Tracker::Small { den, s, .. } => (*s).min(den - s) as f64 / *den as f64,
            Tracker::Big { den, s, .. } => to_f64(&nearest_int_dist(&Rational::new(s.clone(), den.clone()))),
        }
    }

    fn dist_exact(&self) -> Rational {
        match self {
            Tracker::Small { den, s, .. } => Rational::new(BigInt::from((*s).min(den - s)), BigInt::from(*den)),
            Tracker::Big { den, s, .. } => nearest_int_dist(&Rational::new(s.clone(), den.clone())),
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct ChunkResult {
    min_ratio: f64,
    argmin: u64,
    violation: Option<u64>,
}

/// Checks `‖qx₁ − θ₁‖ > (κ/q)^i or ‖qx₂ − θ₂‖ > (κ/q)^j` for `q ∈ [start, end)`.
fn check_range(
    x: &RationalPair,
    theta: &RationalPair,
    kappa: &Monomial,
    w: (Ratio<i64>, Ratio<i64>),
    start: u64,
    end: u64,
) -> ChunkResult {
    let (ki, kj) = (kappa.pow(w.0), kappa.pow(w.1));
    let (kif, kjf) = (ki.to_f64(), kj.to_f64());
    let (wi, wj) = (r64(&w.0), r64(&w.1));
    let half = w.0 == Ratio::new(1, 2);
    let mut t1 = Tracker::new(&x.0, &theta.0, start);
    let mut t2 = Tracker::new(&x.1, &theta.1, start);
    let mut res = ChunkResult {
        min_ratio: f64::INFINITY,
        argmin: 0,
        violation: None,
    };
    let (mut cur_i, mut cur_j) = (f64::INFINITY, f64::INFINITY);
    let exact_gt = |t: &Tracker, k: &Monomial, e: Ratio<i64>, q: u64| {
        let thr = k.clone().times(q, -e);
        thr.cmp_rational(&t.dist_exact()) == std::cmp::Ordering::Greater
    };
    for q in start..end {
        t1.advance();
        t2.advance();
        let qf = q as f64;
        let (qi, qj) = if half {
            let s = qf.sqrt();
            (s, s)
        } else {
            (qf.powf(wi), qf.powf(wj))
        };
        let r1 = t1.dist_f64() * qi / kif;
        let r2 = t2.dist_f64() * qj / kjf;
        let decide = |r: f64, t: &Tracker, k: &Monomial, e: Ratio<i64>| {
            if r > 1.0 + FLOAT_BAND {
                true
            } else if r < 1.0 - FLOAT_BAND {
                false
            } else {
                exact_gt(t, k, e, q)
            }
        };
        if !decide(r1, &t1, &ki, w.0) && !decide(r2, &t2, &kj, w.1) && res.violation.is_none() {
            res.violation = Some(q);
        }
        if r1 < cur_i && r2 < cur_j {
            let m = r1.powf(1.0 / wi).max(r2.powf(1.0 / wj));
            if m < res.min_ratio {
                res.min_ratio = m;
                res.argmin = q;
                cur_i = m.powf(wi);
                cur_j = m.powf(wj);
            }
        }
    }
    res
}

fn check_all(
    x: &RationalPair,
    theta: &RationalPair,
    kappa: &Monomial,
    w: (Ratio<i64>, Ratio<i64>),
    q_max: u64,
) -> Option<ChunkResult> {
    if q_max <= 1 {
        return None;
    }
    let chunk = 1u64 << 20;
    let starts: Vec<u64> = (1..q_max).step_by(chunk as usize).collect();
    let parts: Vec<ChunkResult> = starts
        .into_par_iter()
        .map(|s| check_range(x, theta, kappa, w, s, (s + chunk).min(q_max)))
        .collect();
    let mut out = parts[0];
    for p in &parts[1..] {
        if p.min_ratio < out.min_ratio {
            out.min_ratio = p.min_ratio;
            out.argmin = p.argmin;
        }
        if out.violation.is_none() {
            out.violation = p.violation;
        }
    }
    Some(out)
}

/// Brute-force certificate of (H) over `0 < q < q_h` and, when `θ` is set,
/// of (I) over `0 < q < q_i`. Failures are reported, not raised.
pub fn verify_witness(params: &ConstructionParams, x: &RationalPair, q_h: u64, q_i: u64) -> WitnessCertificate {
    let w = (params.i, params.j);
    let zero = (int(0), int(0));
    let h = check_all(x, &zero, &params.c, w, q_h);
    let inh = params
        .theta
        .as_ref()
        .and_then(|theta| check_all(x, theta, &params.c_star, w, q_i));
    let (cf, csf) = (params.c.to_f64(), params.c_star.to_f64());
    let violation_h = h.and_then(|r| r.violation);
    let violation_i = inh.and_then(|r| r.violation);
    WitnessCertificate {
        x1: x.0.clone(),
        x2: x.1.clone(),
        c: params.c.to_string(),
        c_star: params.c_star.to_string(),
        c_f64: cf,
        c_star_f64: csf,
        q_h,
        q_i: if params.theta.is_some() { q_i } else { 1 },
        min_margin_h: h.map(|r| r.min_ratio * cf),
        argmin_h: h.map(|r| r.argmin),
        min_margin_i: inh.map(|r| r.min_ratio * csf),
        argmin_i: inh.map(|r| r.argmin),
        violation_h,
        violation_i,
        passed: violation_h.is_none() && violation_i.is_none(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rational::rat;
    use proptest::prelude::*;

    fn half() -> Ratio<i64> {
        Ratio::new(1, 2)
    }

    fn theta() -> Option<RationalPair> {
        Some((rat(1, 2), rat(1, 3)))
    }

    #[test]
    fn constants_r11() {
        let p = ConstructionParams::new(11, half(), theta()).unwrap();
        assert_eq!(p.grid0, (145, 145));
        assert_eq!((p.cols, p.rows), (36, 36));
        assert_eq!(p.children_per_node(), 1296);
        assert_eq!(p.keep, 1112);
        assert_eq!(p.d, 6);
        assert_eq!(p.c, Monomial::power(8, Ratio::from_integer(-2)).times(11, Ratio::from_integer(-6)));
        assert_eq!(p.c.to_string(), "8^(-2)·11^(-6)");
        assert_eq!(p.c_star.pow(half()), Monomial::power(8, Ratio::from_integer(-1)).times(11, Ratio::from_integer(-12)));
        assert_eq!(p.width(0), Monomial::power(4, Ratio::from_integer(-1)).times(11, Ratio::new(-3, 2)));
        let hom = ConstructionParams::new(11, half(), None).unwrap();
        assert_eq!(hom.keep, 1148);
        assert_eq!(ConstructionParams::new(17, half(), theta()).unwrap().keep, 4492);
    }

    #[test]
    fn unequal_weights() {
        let p = ConstructionParams::new(11, Ratio::new(1, 3), theta()).unwrap();
        assert_eq!((p.cols, p.rows), (24, 54));
        assert_ne!(p.width(0), p.height(0));
        assert_ne!(p.grid0.0, p.grid0.1);
        assert_eq!(p.d, 9);
    }

    #[test]
    fn parameter_errors() {
        assert_eq!(ConstructionParams::new(10, half(), None), Err(CantorError::RTooSmall(10)));
        assert!(matches!(ConstructionParams::new(11, Ratio::new(2, 3), None), Err(CantorError::BadWeights(_))));
        assert!(matches!(ConstructionParams::new(11, Ratio::zero(), None), Err(CantorError::BadWeights(_))));
        assert!(Selector::parse("seed:x").is_err());
        assert_eq!(Selector::parse("seed:7").unwrap(), Selector::Seed(7));
    }

    #[test]
    fn level0_and_partition() {
        let con = Construction::new(ConstructionParams::new(11, half(), theta()).unwrap(), 3);
        let roots = con.init_level0();
        assert_eq!(roots.len(), 145 * 145);
        assert!(roots.iter().all(|n| n.status == NodeStatus::Good));
        let kids = con.partition(&roots[0]);
        assert_eq!(kids.len(), 1296);
        assert_eq!(con.corner_f64(&kids[0].path), con.corner_f64(&roots[0].path));
        assert!(kids.iter().all(|k| con.nested(&roots[0], k)));
        assert_eq!(kids[1].path[1], (1, 0));
        assert_eq!(kids[36].path[1], (0, 1));
    }

    #[test]
    fn scans_match_direct_oracle() {
        let con = Construction::new(ConstructionParams::new(11, half(), theta()).unwrap(), 3);
        let ci = to_f64(&rat(1, 8 * 1331));
        for root in [(0u32, 0u32), (72, 72), (17, 101), (144, 3)] {
            let node = RectNode::root(root.0, root.1);
            let [x0, y0, w, h] = con.rect_f64(&node.path);
            let mut expected = Vec::new();
            for q in 1..11u64 {
                let hw = ci * (q as f64).powf(-1.5);
                for p1 in 0..=q as i64 {
                    for p2 in 0..=q as i64 {
                        let (cx, cy) = (p1 as f64 / q as f64, p2 as f64 / q as f64);
                        if cx + hw >= x0 && cx - hw <= x0 + w && cy + hw >= y0 && cy - hw <= y0 + h {
                            expected.push((p1, p2, q));
                        }
                    }
                }
            }
            let got: Vec<(i64, i64, u64)> = con.bad_pairs_homog(&node).iter().map(|b| (b.p1, b.p2, b.q)).collect();
            assert_eq!(got, expected, "root {root:?}");
        }
        let origin = con.bad_pairs_homog(&RectNode::root(0, 0));
        assert_eq!(origin.len(), 10);
        assert!(con.bad_pairs_homog(&RectNode::root(40, 90)).is_empty());
    }

    #[test]
    fn inhom_scan_degenerates() {
        let con = Construction::new(ConstructionParams::new(11, half(), theta()).unwrap(), 8);
        let node = RectNode::root(3, 3);
        assert!(con.bad_pairs_inhom(&node).is_empty());
        // With θ = 0 the inhomogeneous scan is a c_*-width homogeneous scan.
        let zero = Construction::new(ConstructionParams::new(11, half(), Some((int(0), int(0)))).unwrap(), 8);
        let mut deep = RectNode::root(0, 0);
        for _ in 0..6 {
            deep = deep.child(0, 0);
        }
        let got = zero.bad_pairs_inhom(&deep);
        let direct = zero.scan(&deep.path, 1, 11, PairKind::I);
        assert_eq!(got, direct);
        assert!(got.iter().all(|b| b.p1 == 0 && b.p2 == 0));
        assert_eq!(got.len(), 10);
    }

    #[test]
    fn refine_counts_and_selection() {
        let con = Construction::new(ConstructionParams::new(11, half(), theta()).unwrap(), 3);
        let quiet = RectNode::root(40, 90);
        let r = con.refine(&quiet).unwrap();
        assert!(r.bad_h.is_empty() && r.bad_i.is_empty());
        let kept: Vec<(u32, u32)> = r.kept(36).collect();
        assert_eq!(kept.len(), 1112);
        assert_eq!(kept[0], (0, 0));
        assert_eq!(kept[1111], (1111 % 36, 1111 / 36));
        let busy = con.refine(&RectNode::root(0, 0)).unwrap();
        assert!(busy.bad_h.contains(&0));
        assert!(busy.bad_h.len() as u64 <= 108);
        assert!(busy.kept(36).all(|(c, w)| busy.status(c, w, 36) == NodeStatus::Good));
    }

    #[test]
    fn shallow_descent_and_determinism() {
        let con = Construction::new(ConstructionParams::new(11, half(), theta()).unwrap(), 4);
        let d1 = con.descend(1, &Selector::First).unwrap();
        assert_eq!(d1.node.level, 1);
        assert_eq!(d1.certificate.q_h, 11);
        assert_eq!(d1.certificate.q_i, 1);
        assert!(d1.certificate.passed);
        let [x0, y0, w, h] = con.rect_f64(&d1.node.path);
        let (wx, wy) = (to_f64(&d1.witness.0), to_f64(&d1.witness.1));
        assert!(wx > x0 + w / 3.0 - 1e-15 && wx < x0 + 2.0 * w / 3.0 + 1e-15);
        assert!(wy > y0 + h / 3.0 - 1e-15 && wy < y0 + 2.0 * h / 3.0 + 1e-15);
        let a = con.descend(3, &Selector::Seed(9)).unwrap();
        let b = con.descend(3, &Selector::Seed(9)).unwrap();
        assert_eq!(a, b);
        assert!(a.certificate.passed);
        let c = con.descend(3, &Selector::Center).unwrap();
        assert!(c.certificate.passed);
        assert!(c.certificate.min_margin_h.unwrap() > c.certificate.c_f64);
        assert_eq!(con.descend(0, &Selector::First), Err(CantorError::ZeroDepth));
        assert!(matches!(con.descend(5, &Selector::First), Err(CantorError::DepthCap { .. })));
    }

    #[test]
    fn verify_examples() {
        let p = ConstructionParams::new(11, half(), None).unwrap();
        let bad = verify_witness(&p, &(rat(1, 3), rat(1, 3)), 10, 1);
        assert_eq!(bad.violation_h, Some(3));
        assert!(!bad.passed);
        let vac = verify_witness(&p, &(rat(1, 3), rat(1, 3)), 1, 1);
        assert!(vac.passed && vac.min_margin_h.is_none());
        let golden = (rat(6765, 10946), rat(4181, 6765));
        let g = verify_witness(&p, &golden, 50, 1);
        assert!(g.passed);
        let oracle = (1..50u64)
            .map(|q| {
                let d1 = to_f64(&nearest_int_dist(&(&golden.0 * int(q as i64))));
                let d2 = to_f64(&nearest_int_dist(&(&golden.1 * int(q as i64))));
                (d1 * d1).max(d2 * d2) * q as f64
            })
            .fold(f64::INFINITY, f64::min);
        assert!((g.min_margin_h.unwrap() - oracle).abs() < 1e-12 * oracle);
    }

    #[test]
    fn tracker_matches_direct() {
        let x = rat(-7, 13);
        let s = rat(2, 9);
        let mut t = Tracker::new(&x, &s, 5);
        for q in 5..40i64 {
            t.advance();
            assert_eq!(t.dist_exact(), nearest_int_dist(&(&x * int(q) - &s)));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn children_nested_and_kept_good(col in 0u32..145, row in 0u32..145, kc in 0u32..36, kr in 0u32..36) {
            let con = Construction::new(ConstructionParams::new(11, half(), theta()).unwrap(), 3);
            let root = RectNode::root(col, row);
            let child = root.child(kc, kr);
            prop_assert!(con.nested(&root, &child));
            let r = con.refine(&root).unwrap();
            prop_assert!(r.bad_h.len() as u64 <= 108 && r.bad_i.len() <= 4);
            prop_assert_eq!(r.kept(36).count(), 1112);
        }

        #[test]
        fn rational_points_fail(a in 1i64..40, b in 1i64..40, q0 in 2i64..40) {
            let p = ConstructionParams::new(11, half(), None).unwrap();
            let x = (rat(a, q0), rat(b, q0));
            let cert = verify_witness(&p, &x, q0 as u64 + 1, 1);
            prop_assert!(cert.violation_h.is_some_and(|q| q <= q0 as u64));
        }
    }
}
