//! Empirical dimension diagnostics: a cover-sum criterion for `H^s = 0` and a
//! box-counting slope estimator. Both are estimates, labelled as such.

use std::collections::HashSet;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::series::least_squares;

/// Default relative-tail tolerance of the cover-sum criterion.
pub const DEFAULT_TAIL_TOL: f64 = 1e-3;
/// Largest bitset (in cells) used before falling back to hashing.
const BITSET_LIMIT: u64 = 1 << 31;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DimError {
    #[error("no points or rectangles to count")]
    EmptyInput,
    #[error("need at least two scales, got {0}")]
    TooFewScales(usize),
    #[error("scales must be positive and strictly decreasing")]
    NotDecreasing,
    #[error("malformed scale grid `{0}`; expected 2^-a..2^-b or a comma list")]
    BadGrid(String),
    #[error("need at least two levels, got {0}")]
    TooFewLevels(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoverSumReport {
    /// Empirical verdict that the cover sums converge, hence `H^s = 0`.
    pub h_s_zero: bool,
    pub label: &'static str,
    pub tol: f64,
    /// Geometric ratio fitted on the last quartile of levels.
    pub ratio: f64,
    /// Estimated tail `v_last·r/(1−r)`, or infinity when `r ≥ 1`.
    pub tail: f64,
    pub relative_tail: f64,
    pub partial_sums: Vec<f64>,
}

/// Per-level s-volumes → verdict: the sums are Cauchy-stable when the last
/// quartile decays geometrically and the extrapolated tail is below `tol`
/// relative to the total.
pub fn cover_sum_criterion(levels: &[f64], tol: f64) -> Result<CoverSumReport, DimError> {
    if levels.len() < 2 {
        return Err(DimError::TooFewLevels(levels.len()));
    }
    let partial_sums: Vec<f64> = levels
        .iter()
        .scan(0.0, |acc, v| {
            *acc += v;
            Some(*acc)
        })
        .collect();
    let total = *partial_sums.last().expect("non-empty");
    let k = levels.len().div_ceil(4).max(2);
    let tail_levels = &levels[levels.len() - k..];
    let (ratio, tail) = if tail_levels.iter().all(|v| *v == 0.0) {
        (0.0, 0.0)
    } else if tail_levels.iter().any(|v| *v <= 0.0) {
        (f64::INFINITY, f64::INFINITY)
    } else {
        let pts: Vec<(f64, f64)> = tail_levels.iter().enumerate().map(|(t, v)| (t as f64, v.ln())).collect();
        let r = least_squares(&pts).0.exp();
        let last = *tail_levels.last().expect("non-empty");
        (r, if r < 1.0 { last * r / (1.0 - r) } else { f64::INFINITY })
    };
    let relative_tail = if tail == 0.0 { 0.0 } else { tail / (total + tail) };
    Ok(CoverSumReport {
        h_s_zero: ratio < 1.0 && relative_tail < tol,
        label: "empirical",
        tol,
        ratio,
        tail,
        relative_tail,
        partial_sums,
    })
}

/// Box side lengths, strictly decreasing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScaleGrid {
    pub scales: Vec<f64>,
}

impl ScaleGrid {
    pub fn new(scales: Vec<f64>) -> Result<Self, DimError> {
        if scales.len() < 2 {
            return Err(DimError::TooFewScales(scales.len()));
        }
        if scales.iter().any(|s| !(*s > 0.0)) || scales.windows(2).any(|w| w[1] >= w[0]) {
            return Err(DimError::NotDecreasing);
        }
        Ok(ScaleGrid { scales })
    }

    /// `2^(−a), …, 2^(−b)` for `a < b`.
    pub fn dyadic(a: u32, b: u32) -> Result<Self, DimError> {
        Self::new((a..=b).map(|k| 0.5f64.powi(k as i32)).collect())
    }
}

impl FromStr for ScaleGrid {
    type Err = DimError;

    /// Parses `2^-a..2^-b` or a comma-separated list of scales.
    fn from_str(text: &str) -> Result<Self, DimError> {
        let bad = || DimError::BadGrid(text.to_string());
        let text = text.trim();
        if let Some((a, b)) = text.split_once("..") {
            let exp = |s: &str| s.trim().strip_prefix("2^-").and_then(|e| e.parse::<u32>().ok());
            let (a, b) = (exp(a).ok_or_else(bad)?, exp(b).ok_or_else(bad)?);
            return Self::dyadic(a, b);
        }
        let scales = text
            .split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(scales)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxRow {
    pub scale: f64,
    pub count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxDimReport {
    /// Least-squares slope of `log N(s)` against `log(1/s)`.
    pub slope: f64,
    pub r2: f64,
    pub label: &'static str,
    pub scale_range: (f64, f64),
    pub table: Vec<BoxRow>,
}

enum Occupancy {
    Bits { x0: i64, y0: i64, nx: u64, words: Vec<u64> },
    Hash(HashSet<(i64, i64)>),
}

impl Occupancy {
    fn insert(&mut self, kx: i64, ky: i64) {
        match self {
            Occupancy::Bits { x0, y0, nx, words } => {
                let idx = (ky - *y0) as u64 * *nx + (kx - *x0) as u64;
                words[(idx / 64) as usize] |= 1 << (idx % 64);
            }
            Occupancy::Hash(set) => {
                set.insert((kx, ky));
            }
        }
    }

    fn count(&self) -> u64 {
        match self {
            Occupancy::Bits { words, .. } => words.iter().map(|w| w.count_ones() as u64).sum(),
            Occupancy::Hash(set) => set.len() as u64,
        }
    }
}

/// Streaming box counter over half-open cells `[k·s, (k+1)·s)`.
pub struct BoxCounter {
    grid: ScaleGrid,
    cells: Vec<Occupancy>,
    items: u64,
}

impl BoxCounter {
    pub fn new(grid: ScaleGrid) -> Self {
        let cells = grid.scales.iter().map(|_| Occupancy::Hash(HashSet::new())).collect();
        BoxCounter { grid, cells, items: 0 }
    }

    /// Counter whose inputs all lie in `[x0, x1] × [y0, y1]`, using bitsets.
    pub fn with_bounds(grid: ScaleGrid, bounds: [f64; 4]) -> Self {
        let [x0, y0, x1, y1] = bounds;
        let cells = grid
            .scales
            .iter()
            .map(|&s| {
                let (kx0, ky0) = ((x0 / s).floor() as i64, (y0 / s).floor() as i64);
                let nx = ((x1 / s).floor() as i64 - kx0 + 1) as u64;
                let ny = ((y1 / s).floor() as i64 - ky0 + 1) as u64;
                if nx * ny <= BITSET_LIMIT {
                    Occupancy::Bits {
                        x0: kx0,
                        y0: ky0,
                        nx,
                        words: vec![0; (nx * ny).div_ceil(64) as usize],
                    }
                } else {
                    Occupancy::Hash(HashSet::new())
                }
            })
            .collect();
        BoxCounter { grid, cells, items: 0 }
    }

    pub fn add_point(&mut self, x: f64, y: f64) {
        self.add_rect([x, y, 0.0, 0.0]);
    }

    /// Marks every cell meeting the closed rectangle `[x, x+w] × [y, y+h]`.
    pub fn add_rect(&mut self, rect: [f64; 4]) {
        let [x, y, w, h] = rect;
        self.items += 1;
        for (s, occ) in self.grid.scales.iter().zip(self.cells.iter_mut()) {
            let (kx0, kx1) = ((x / s).floor() as i64, ((x + w) / s).floor() as i64);
            let (ky0, ky1) = ((y / s).floor() as i64, ((y + h) / s).floor() as i64);
            for ky in ky0..=ky1 {
                for kx in kx0..=kx1 {
                    occ.insert(kx, ky);
                }
            }
        }
    }

    pub fn finish(self) -> Result<BoxDimReport, DimError> {
        if self.items == 0 {
            return Err(DimError::EmptyInput);
        }
        let table: Vec<BoxRow> = self
            .grid
            .scales
            .iter()
            .zip(&self.cells)
            .map(|(&scale, occ)| BoxRow {
                scale,
                count: occ.count(),
            })
            .collect();
        let pts: Vec<(f64, f64)> = table.iter().map(|r| ((1.0 / r.scale).ln(), (r.count as f64).ln())).collect();
        let (slope, _, r2) = least_squares(&pts);
        let scales = &self.grid.scales;
        Ok(BoxDimReport {
            slope,
            r2,
            label: "box-counting estimate",
            scale_range: (scales[0], scales[scales.len() - 1]),
            table,
        })
    }
}

/// Point or rectangle input for [`box_count`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoxInput {
    Points(Vec<[f64; 2]>),
    /// `[x0, y0, width, height]`
    Rects(Vec<[f64; 4]>),
}

pub fn box_count(input: &BoxInput, grid: &ScaleGrid) -> Result<BoxDimReport, DimError> {
    let mut counter = BoxCounter::new(grid.clone());
    match input {
        BoxInput::Points(ps) => ps.iter().for_each(|p| counter.add_point(p[0], p[1])),
        BoxInput::Rects(rs) => rs.iter().for_each(|r| counter.add_rect(*r)),
    }
    counter.finish()
}

/// Intervals of the `level`-th middle-thirds iterate as `(start, length)`.
pub fn middle_thirds(level: u32) -> Vec<(f64, f64)> {
    let mut out = vec![(0.0, 1.0)];
    for _ in 0..level {
        out = out
            .into_iter()
            .flat_map(|(a, l)| [(a, l / 3.0), (a + 2.0 * l / 3.0, l / 3.0)])
            .collect();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cover::s_volume_level;
    use crate::psi::ApproxFn;
    use crate::rational::int;
    use crate::series::{classify_series, SeriesKind, Verdict};
    use proptest::prelude::*;

    #[test]
    fn criterion_examples() {
        let geo: Vec<f64> = (0..30).map(|t| 0.5f64.powi(t)).collect();
        assert!(cover_sum_criterion(&geo, DEFAULT_TAIL_TOL).unwrap().h_s_zero);
        let flat = vec![1.0; 30];
        let r = cover_sum_criterion(&flat, DEFAULT_TAIL_TOL).unwrap();
        assert!(!r.h_s_zero);
        assert_eq!(r.partial_sums[29], 30.0);
        assert!(cover_sum_criterion(&[0.0; 8], DEFAULT_TAIL_TOL).unwrap().h_s_zero);
        assert!(cover_sum_criterion(&[1.0], DEFAULT_TAIL_TOL).is_err());
    }

    #[test]
    fn criterion_on_cover_levels() {
        let psi = ApproxFn::power(int(1), int(3)).unwrap();
        let levels = |t_max: u32| (0..=t_max).map(|t| s_volume_level(t, 1.6, &psi).unwrap()).collect::<Vec<_>>();
        let short = cover_sum_criterion(&levels(12), DEFAULT_TAIL_TOL).unwrap();
        assert!(!short.h_s_zero);
        assert!(short.ratio < 1.0 && short.relative_tail < 0.05);
        assert!(cover_sum_criterion(&levels(40), DEFAULT_TAIL_TOL).unwrap().h_s_zero);
    }

    #[test]
    fn criterion_agrees_with_classification() {
        for tau in [2i64, 3, 5] {
            let psi = ApproxFn::power(int(1), int(tau)).unwrap();
            let crit = (3.0 + tau as f64) / (1.0 + tau as f64);
            for s in [crit - 0.3, crit + 0.25] {
                if !(s > 1.0 && s < 2.0) {
                    continue;
                }
                let levels: Vec<f64> = (0..=40).map(|t| s_volume_level(t, s, &psi).unwrap()).collect();
                let verdict = cover_sum_criterion(&levels, DEFAULT_TAIL_TOL).unwrap().h_s_zero;
                let kind = SeriesKind::MultPlanar {
                    s: crate::rational::from_f64(s).unwrap(),
                };
                let analytic = classify_series(&psi, &kind).unwrap() == Verdict::Convergent;
                assert_eq!(verdict, analytic, "tau = {tau}, s = {s}");
            }
        }
    }

    #[test]
    fn scale_grid_parsing() {
        let g: ScaleGrid = "2^-3..2^-10".parse().unwrap();
        assert_eq!(g.scales.len(), 8);
        assert_eq!(g.scales[0], 0.125);
        let l: ScaleGrid = "0.1, 0.05".parse().unwrap();
        assert_eq!(l.scales, vec![0.1, 0.05]);
        assert!("0.05,0.1".parse::<ScaleGrid>().is_err());
        assert!("2^-3".parse::<ScaleGrid>().is_err());
        assert!("x..y".parse::<ScaleGrid>().is_err());
    }

    #[test]
    fn ambient_and_segment_slopes() {
        let grid = ScaleGrid::dyadic(4, 10).unwrap();
        let pts: Vec<[f64; 2]> = (0..1024)
            .flat_map(|a| (0..1024).map(move |b| [(a as f64 + 0.5) / 1024.0, (b as f64 + 0.5) / 1024.0]))
            .collect();
        let sq = box_count(&BoxInput::Points(pts), &grid).unwrap();
        assert!((sq.slope - 2.0).abs() < 0.05);
        let solid = box_count(&BoxInput::Rects(vec![[0.0, 0.0, 1.0, 1.0]]), &grid).unwrap();
        assert!((solid.slope - 2.0).abs() < 0.05);
        let seg = box_count(&BoxInput::Rects(vec![[0.0, 0.3, 1.0, 0.0]]), &grid).unwrap();
        assert!((seg.slope - 1.0).abs() < 0.05);
        assert_eq!(box_count(&BoxInput::Points(vec![]), &grid), Err(DimError::EmptyInput));
    }

    #[test]
    fn bitset_and_hash_agree() {
        let grid = ScaleGrid::dyadic(2, 9).unwrap();
        let rects: Vec<[f64; 4]> = middle_thirds(5).into_iter().map(|(a, l)| [a, 0.25, l, l]).collect();
        let plain = box_count(&BoxInput::Rects(rects.clone()), &grid).unwrap();
        let mut bounded = BoxCounter::with_bounds(grid, [0.0, 0.25, 1.0, 0.25 + 1.0 / 243.0]);
        rects.iter().for_each(|r| bounded.add_rect(*r));
        assert_eq!(plain, bounded.finish().unwrap());
    }

    #[test]
    fn product_with_interval_adds_one() {
        let grid = ScaleGrid::dyadic(3, 10).unwrap();
        let e = middle_thirds(8);
        let line = box_count(&BoxInput::Rects(e.iter().map(|&(a, l)| [a, 0.0, l, 0.0]).collect()), &grid).unwrap();
        let prod = box_count(&BoxInput::Rects(e.iter().map(|&(a, l)| [a, 0.0, l, 1.0]).collect()), &grid).unwrap();
        assert!((prod.slope - line.slope - 1.0).abs() < 0.1);
        assert!(line.slope > 0.5 && line.slope < 0.8);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn counts_monotone_under_inclusion(pts in prop::collection::vec((0.0f64..1.0, 0.0f64..1.0), 1..200), keep in 1usize..200) {
            let grid = ScaleGrid::dyadic(1, 8).unwrap();
            let all: Vec<[f64; 2]> = pts.iter().map(|&(x, y)| [x, y]).collect();
            let sub: Vec<[f64; 2]> = all.iter().take(keep.min(all.len())).cloned().collect();
            let big = box_count(&BoxInput::Points(all), &grid).unwrap();
            let small = box_count(&BoxInput::Points(sub), &grid).unwrap();
            for (a, b) in small.table.iter().zip(&big.table) {
                prop_assert!(a.count <= b.count);
            }
            prop_assert!(big.table.windows(2).all(|w| w[0].count <= w[1].count));
        }
    }
}
