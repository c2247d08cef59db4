use std::fs;
use std::path::PathBuf;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Subcommand};
use dioph_core::cantor::{DEFAULT_DEPTH_CAP, FULL_TREE_DEPTH_CAP};
use dioph_core::cover::cover_tail;
use dioph_core::curve::{fit_counting_constant, MAX_BITS};
use dioph_core::rational::{display, to_f64};
use dioph_core::series::numerical_verdict;
use dioph_core::{
    classify_series, construct_s1_member, count_near_curve, parse_pair, parse_rational, verify_witness, ApproxFn,
    BoxCounter, Construction, ConstructionParams, CurveFn, CurveSpec, Rational, RationalPair, ScaleGrid, Selector,
    SeriesKind,
};
use num_rational::Ratio;
use serde_json::{json, Map, Value};

use crate::output::{Emitter, Format};
use crate::{Cli, Command, MAX_BITS_ENV};

/// A re-checked artifact disagrees with its recomputation.
#[derive(Debug)]
pub struct Mismatch(pub String);

impl std::fmt::Display for Mismatch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "re-verification mismatch: {}", self.0)
    }
}

impl std::error::Error for Mismatch {}

#[derive(Args, Debug)]
pub struct CoverSumArgs {
    /// `pow:κ,τ`, `powlog:κ,τ,β` or `table:v1,...`
    #[arg(long)]
    pub psi: String,
    /// Exponent in (1, 2), e.g. `3/2`
    #[arg(long)]
    pub s: String,
    #[arg(long)]
    pub t_max: u32,
    #[arg(long, default_value_t = 0)]
    pub t_start: u32,
    /// Shift `a/b,c/d` in the unit square; cell counts do not depend on it
    #[arg(long)]
    pub theta: Option<String>,
}

#[derive(Args, Debug)]
pub struct CountCurveArgs {
    /// `x^2`, `parabola`, `parabola:a,b,c`, `poly:c0,c1,...` or `sqrt:α,β`
    #[arg(long = "fn", default_value = "x^2")]
    pub curve: String,
    #[arg(long, default_value = "0,1")]
    pub interval: String,
    #[arg(long, default_value = "0,0")]
    pub theta: String,
    /// Denominator bound `Q` (the largest `Q` with `--sweep`)
    #[arg(long = "Q")]
    pub q: u64,
    /// Distance bound `δ ≤ 1/2` (the smallest `δ` with `--sweep`)
    #[arg(long)]
    pub delta: String,
    /// Lower curvature bound; estimated from `f''` when omitted
    #[arg(long)]
    pub c1: Option<f64>,
    #[arg(long)]
    pub c2: Option<f64>,
    /// Exponent in the normalizer `δQ² + Q^(1+ε)`
    #[arg(long, default_value = "1/4")]
    pub epsilon: String,
    /// Include up to `--witness-limit` witnesses `(p1, q)`
    #[arg(long)]
    pub witnesses: bool,
    #[arg(long, default_value_t = 1000)]
    pub witness_limit: usize,
    /// Grid over `Q = 2^4, …, Q` and `δ = 1/2, 1/4, …, δ`
    #[arg(long)]
    pub sweep: bool,
    /// Precision cap for irrational curve values (default from DIOPH_MAX_BITS, else 512)
    #[arg(long)]
    pub max_bits: Option<u32>,
}

#[derive(Args, Debug, Clone)]
pub struct CantorParams {
    #[arg(long = "R", default_value_t = 11)]
    pub r: u64,
    /// Weight `i ≤ 1/2`; `j = 1 − i`
    #[arg(long, default_value = "1/2")]
    pub i: String,
    /// Inhomogeneous shift; homogeneous only when omitted
    #[arg(long)]
    pub theta: Option<String>,
    /// Largest allowed depth
    #[arg(long)]
    pub depth_cap: Option<u32>,
}

#[derive(Subcommand, Debug)]
pub enum CantorAction {
    /// Full tree from one level-0 cell, dumping the retained leaves
    Build {
        #[command(flatten)]
        params: CantorParams,
        #[arg(long, default_value_t = 2)]
        depth: u32,
        /// Level-0 cell `col,row`
        #[arg(long, default_value = "0,0")]
        root: String,
        /// Omit the leaf rectangles
        #[arg(long)]
        summary_only: bool,
    },
    /// Single-branch descent ending in a certified witness
    Descend {
        #[command(flatten)]
        params: CantorParams,
        #[arg(long, default_value_t = 6)]
        depth: u32,
        /// `first`, `center`, `seed:<n>`, or `seed` (uses --seed)
        #[arg(long, default_value = "first")]
        selector: String,
    },
    /// Exact check of conditions (H) and (I) for a rational point
    Verify {
        #[command(flatten)]
        params: CantorParams,
        /// Point `a/b,c/d`
        #[arg(long)]
        x: Option<String>,
        #[arg(long = "QH")]
        q_h: Option<u64>,
        #[arg(long = "QI", default_value_t = 1)]
        q_i: u64,
        /// Re-check a certificate written by `cantor descend`
        #[arg(long)]
        certificate: Option<PathBuf>,
    },
}

#[derive(Args, Debug)]
pub struct BoxdimArgs {
    /// JSON with `points` (`[x, y]`) or `rects` (`[x, y, w, h]`), e.g. `cantor build` output
    #[arg(long)]
    pub input: PathBuf,
    /// `2^-a..2^-b` or a comma list of scales
    #[arg(long, default_value = "2^-3..2^-10")]
    pub scales: String,
    /// Bounding box `x0,y0,x1,y1`; read from the input when present there
    #[arg(long)]
    pub bounds: Option<String>,
}

#[derive(Args, Debug)]
pub struct SeriesArgs {
    #[arg(long)]
    pub psi: String,
    /// `jarnik-1d`, `simultaneous-2d`, `gallagher-2d`, `mult-planar` or `curve`
    #[arg(long)]
    pub kind: String,
    #[arg(long)]
    pub s: Option<String>,
    /// Also report dyadic block sums and their fitted slope
    #[arg(long)]
    pub numerical: bool,
    #[arg(long, default_value_t = 20)]
    pub t_max: u32,
    #[arg(long, default_value_t = 0.02)]
    pub eta: f64,
}

#[derive(Args, Debug)]
pub struct S1MemberArgs {
    #[arg(long)]
    pub psi: String,
    #[arg(long, default_value_t = 4)]
    pub depth: usize,
}

pub fn run(cli: Cli) -> Result<()> {
    let g = cli.global;
    let mut emit = Emitter {
        format: g.format.unwrap_or(Format::Json),
        out: g.out,
        seed: g.seed,
    };
    match cli.command {
        Command::CoverSum(a) => {
            emit.format = g.format.unwrap_or(Format::Csv);
            cover_sum(&emit, a)
        }
        Command::CountCurve(a) => {
            emit.format = g.format.unwrap_or(if a.sweep { Format::Csv } else { Format::Json });
            count_curve(&emit, a)
        }
        Command::Cantor { action } => cantor(&mut emit, action),
        Command::Boxdim(a) => boxdim(&emit, a),
        Command::Series(a) => series(&emit, a),
        Command::S1Member(a) => s1_member(&emit, a),
    }
}

fn rational(flag: &str, text: &str) -> Result<Rational> {
    parse_rational(text).with_context(|| format!("--{flag}"))
}

fn pair(flag: &str, text: &str) -> Result<RationalPair> {
    parse_pair(text).with_context(|| format!("--{flag}"))
}

fn psi(text: &str) -> Result<ApproxFn> {
    ApproxFn::parse_spec(text).context("--psi")
}

fn json_only(emit: &Emitter, command: &str) -> Result<()> {
    if emit.format == Format::Csv {
        bail!("{command} has no CSV output; use --format json");
    }
    Ok(())
}

fn pair_json(p: &RationalPair) -> Value {
    json!([display(&p.0), display(&p.1)])
}

fn cover_sum(emit: &Emitter, a: CoverSumArgs) -> Result<()> {
    let psi = psi(&a.psi)?;
    let s = rational("s", &a.s)?;
    let theta = a.theta.as_deref().map(|t| pair("theta", t)).transpose()?;
    if let Some(t) = &theta {
        let unit = |v: &Rational| *v >= Rational::from_integer(0.into()) && *v <= Rational::from_integer(1.into());
        if !unit(&t.0) || !unit(&t.1) {
            bail!("--theta must lie in the unit square");
        }
    }
    let report = cover_tail(a.t_start, a.t_max, to_f64(&s), &psi)?;
    match emit.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = report
                .rows
                .iter()
                .map(|r| {
                    vec![
                        r.t.to_string(),
                        r.cells.to_string(),
                        r.s_volume.to_string(),
                        r.comparison_sum.to_string(),
                    ]
                })
                .collect();
            emit.csv(&["t", "cells", "s_volume", "comparison_sum"], &rows)
        }
        Format::Json => {
            let rows: Vec<Value> = report
                .rows
                .iter()
                .map(|r| {
                    json!({
                        "t": r.t,
                        "cells": r.cells.to_string(),
                        "s_volume": r.s_volume,
                        "cover_sum": r.cover_sum,
                        "comparison_sum": r.comparison_sum,
                    })
                })
                .collect();
            emit.json(
                "cover-sum",
                json!({
                    "psi": psi.to_string(),
                    "s": display(&s),
                    "theta": theta.as_ref().map(pair_json),
                    "rows": rows,
                }),
            )
        }
    }
}

fn max_bits(flag: Option<u32>) -> Result<u32> {
    if let Some(b) = flag {
        return Ok(b);
    }
    match std::env::var(MAX_BITS_ENV) {
        Ok(v) => v.trim().parse().with_context(|| format!("{MAX_BITS_ENV}=`{v}`")),
        Err(_) => Ok(MAX_BITS),
    }
}

fn count_curve(emit: &Emitter, a: CountCurveArgs) -> Result<()> {
    let f = CurveFn::parse(&a.curve)?;
    let (lo, hi) = pair("interval", &a.interval)?;
    let theta = pair("theta", &a.theta)?;
    let delta = rational("delta", &a.delta)?;
    let epsilon = to_f64(&rational("epsilon", &a.epsilon)?);
    let curve = match (a.c1, a.c2) {
        (Some(c1), Some(c2)) => CurveSpec::new(f, lo, hi, c1, c2)?,
        (None, None) => CurveSpec::with_estimated_bounds(f, lo, hi)?,
        _ => bail!("--c1 and --c2 must be given together"),
    }
    .with_max_bits(max_bits(a.max_bits)?);
    let mut meta = Map::new();
    meta.insert("fn".into(), curve.f.to_string().into());
    meta.insert("interval".into(), json!([display(&curve.a), display(&curve.b)]));
    meta.insert("curvature".into(), json!([curve.c1, curve.c2]));
    meta.insert("theta".into(), pair_json(&theta));
    meta.insert("epsilon".into(), epsilon.into());
    meta.insert("max_bits".into(), curve.max_bits.into());
    if a.sweep {
        if a.q < 16 {
            bail!("--sweep needs --Q at least 16");
        }
        let qs: Vec<u64> = (4..64).map(|k| 1u64 << k).take_while(|&q| q <= a.q).collect();
        let mut deltas = vec![Rational::new(1.into(), 2.into())];
        while deltas.last().unwrap() / Rational::from_integer(2.into()) >= delta {
            let next = deltas.last().unwrap() / Rational::from_integer(2.into());
            deltas.push(next);
        }
        let fit = fit_counting_constant(&curve, &theta, &qs, &deltas, epsilon)?;
        return match emit.format {
            Format::Csv => {
                let rows: Vec<Vec<String>> = fit
                    .table
                    .iter()
                    .map(|r| vec![r.q_param.to_string(), display(&r.delta), r.count.to_string(), r.ratio.to_string()])
                    .collect();
                emit.csv(&["Q", "delta", "count", "C_ratio"], &rows)
            }
            Format::Json => {
                let mut body = serde_json::to_value(&fit)?;
                body.as_object_mut().unwrap().extend(meta);
                emit.json("count-curve", body)
            }
        };
    }
    let limit = if a.witnesses { a.witness_limit } else { 0 };
    let n = count_near_curve(&curve, &theta, a.q, &delta, limit)?;
    let qf = a.q as f64;
    let ratio = n.count as f64 / (to_f64(&delta) * qf * qf + qf.powf(1.0 + epsilon));
    match emit.format {
        Format::Csv => emit.csv(
            &["Q", "delta", "count", "C_ratio"],
            &[vec![a.q.to_string(), display(&delta), n.count.to_string(), ratio.to_string()]],
        ),
        Format::Json => {
            let mut body = serde_json::to_value(&n)?;
            let obj = body.as_object_mut().unwrap();
            obj.insert("C_ratio".into(), ratio.into());
            if !a.witnesses {
                obj.remove("witnesses");
                obj.remove("truncated");
            }
            obj.extend(meta);
            emit.json("count-curve", body)
        }
    }
}

fn construction_params(p: &CantorParams) -> Result<ConstructionParams> {
    let i: Ratio<i64> = p.i.parse().map_err(|_| anyhow!("--i: malformed rational `{}`", p.i))?;
    let theta = p.theta.as_deref().map(|t| pair("theta", t)).transpose()?;
    Ok(ConstructionParams::new(p.r, i, theta)?)
}

fn params_json(p: &ConstructionParams) -> Value {
    json!({
        "R": p.r,
        "i": p.i.to_string(),
        "j": p.j.to_string(),
        "theta": p.theta.as_ref().map(pair_json),
        "d": p.d,
        "c": p.c.to_string(),
        "c_star": p.c_star.to_string(),
        "children_per_node": p.children_per_node(),
        "keep": p.keep,
        "grid0": [p.grid0.0, p.grid0.1],
    })
}

fn cantor(emit: &mut Emitter, action: CantorAction) -> Result<()> {
    json_only(emit, "cantor")?;
    match action {
        CantorAction::Build {
            params,
            depth,
            root,
            summary_only,
        } => {
            let p = construction_params(&params)?;
            let cap = params.depth_cap.unwrap_or(FULL_TREE_DEPTH_CAP);
            let (col, row) = root
                .split_once(',')
                .and_then(|(c, r)| Some((c.trim().parse().ok()?, r.trim().parse().ok()?)))
                .ok_or_else(|| anyhow!("--root: expected `col,row`, got `{root}`"))?;
            let con = Construction::new(p.clone(), cap);
            let tree = con.build_tree(depth, (col, row))?;
            let levels: Vec<Value> = tree
                .summaries
                .iter()
                .enumerate()
                .map(|(n, sums)| {
                    json!({
                        "level": n,
                        "refined": sums.len(),
                        "retained_children": tree.retained(n as u32 + 1),
                        "max_bad_H": sums.iter().map(|s| s.bad_h).max().unwrap_or(0),
                        "max_bad_I": sums.iter().map(|s| s.bad_i).max().unwrap_or(0),
                        "min_good": sums.iter().map(|s| s.good).min().unwrap_or(0),
                    })
                })
                .collect();
            let [x, y, w, h] = con.rect_f64(&[(col, row)]);
            let mut body = json!({
                "params": params_json(&p),
                "root": [col, row],
                "depth": depth,
                "levels": levels,
                "leaves": tree.retained(depth),
                "bounds": [x, y, x + w, y + h],
            });
            if !summary_only {
                let mut rects = Vec::new();
                con.for_each_leaf(&tree, |r| rects.push(json!(r)));
                body["rects"] = Value::Array(rects);
            }
            emit.json("cantor build", body)
        }
        CantorAction::Descend {
            params,
            depth,
            selector,
        } => {
            let p = construction_params(&params)?;
            let selector = if selector.trim() == "seed" {
                Selector::Seed(emit.seed.unwrap_or(0))
            } else {
                Selector::parse(&selector)?
            };
            if let Selector::Seed(n) = selector {
                emit.seed = Some(n);
            }
            let cap = params.depth_cap.unwrap_or(DEFAULT_DEPTH_CAP);
            let descent = Construction::new(p.clone(), cap).descend(depth, &selector)?;
            let mut body = serde_json::to_value(&descent.certificate)?;
            let obj = body.as_object_mut().unwrap();
            obj.insert("params".into(), params_json(&p));
            obj.insert("depth".into(), depth.into());
            obj.insert("selector".into(), descent.selector.clone().into());
            obj.insert("path".into(), json!(descent.node.path));
            obj.insert("levels".into(), serde_json::to_value(&descent.levels)?);
            emit.json("cantor descend", body)
        }
        CantorAction::Verify {
            params,
            x,
            q_h,
            q_i,
            certificate,
        } => match certificate {
            Some(path) => reverify(emit, &path),
            None => {
                let p = construction_params(&params)?;
                let x = pair("x", x.as_deref().ok_or_else(|| anyhow!("--x or --certificate is required"))?)?;
                let q_h = q_h.ok_or_else(|| anyhow!("--QH is required with --x"))?;
                let cert = verify_witness(&p, &x, q_h, q_i);
                let mut body = serde_json::to_value(&cert)?;
                body.as_object_mut().unwrap().insert("params".into(), params_json(&p));
                emit.json("cantor verify", body)
            }
        },
    }
}

/// Recomputes a stored certificate from its point, bounds and parameters.
fn reverify(emit: &Emitter, path: &PathBuf) -> Result<()> {
    let text = fs::read_to_string(path).with_context(|| format!("reading `{}`", path.display()))?;
    let stored: Value = serde_json::from_str(&text).context("certificate is not JSON")?;
    let field = |k: &str| stored.get(k).ok_or_else(|| anyhow!("certificate lacks `{k}`"));
    let text_of = |v: &Value| v.as_str().map(str::to_string).unwrap_or_else(|| v.to_string());
    let params = field("params")?;
    let cp = CantorParams {
        r: params.get("R").and_then(Value::as_u64).ok_or_else(|| anyhow!("params lack `R`"))?,
        i: params.get("i").map(text_of).ok_or_else(|| anyhow!("params lack `i`"))?,
        theta: params
            .get("theta")
            .and_then(Value::as_array)
            .map(|t| t.iter().map(text_of).collect::<Vec<_>>().join(",")),
        depth_cap: None,
    };
    let p = construction_params(&cp)?;
    let x = (rational("x1", &text_of(field("x1")?))?, rational("x2", &text_of(field("x2")?))?);
    let bound = |k: &str| field(k).and_then(|v| v.as_u64().ok_or_else(|| anyhow!("`{k}` is not an integer")));
    let cert = verify_witness(&p, &x, bound("Q_H")?, bound("Q_I")?);
    let fresh = serde_json::to_value(&cert)?;
    let fresh_obj = fresh.as_object().unwrap();
    let differing: Vec<&String> = fresh_obj.keys().filter(|k| stored.get(k.as_str()) != fresh_obj.get(*k)).collect();
    if !differing.is_empty() {
        return Err(Mismatch(format!("fields {differing:?} differ from the recomputation")).into());
    }
    let mut body = fresh.clone();
    body.as_object_mut().unwrap().insert("params".into(), params_json(&p));
    body.as_object_mut().unwrap().insert("matches".into(), true.into());
    emit.json("cantor verify", body)
}

fn boxdim(emit: &Emitter, a: BoxdimArgs) -> Result<()> {
    let grid: ScaleGrid = a.scales.parse().context("--scales")?;
    let text = fs::read_to_string(&a.input).with_context(|| format!("reading `{}`", a.input.display()))?;
    let input: Value = serde_json::from_str(&text).context("--input is not JSON")?;
    let bounds = match a.bounds.as_deref() {
        Some(b) => Some(
            b.split(',')
                .map(|v| v.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .ok()
                .and_then(|v| <[f64; 4]>::try_from(v).ok())
                .ok_or_else(|| anyhow!("--bounds: expected `x0,y0,x1,y1`"))?,
        ),
        None => input.get("bounds").map(|b| serde_json::from_value::<[f64; 4]>(b.clone())).transpose()?,
    };
    let mut counter = match bounds {
        Some(b) => BoxCounter::with_bounds(grid, b),
        None => BoxCounter::new(grid),
    };
    if let Some(points) = input.get("points") {
        for [x, y] in serde_json::from_value::<Vec<[f64; 2]>>(points.clone()).context("`points`")? {
            counter.add_point(x, y);
        }
    } else if let Some(rects) = input.get("rects") {
        for r in serde_json::from_value::<Vec<[f64; 4]>>(rects.clone()).context("`rects`")? {
            counter.add_rect(r);
        }
    } else {
        bail!("--input needs a `points` or `rects` array");
    }
    let report = counter.finish()?;
    match emit.format {
        Format::Csv => {
            let rows: Vec<Vec<String>> = report
                .table
                .iter()
                .map(|r| vec![r.scale.to_string(), r.count.to_string()])
                .collect();
            emit.csv(&["scale", "count"], &rows)
        }
        Format::Json => emit.json("boxdim", serde_json::to_value(&report)?),
    }
}

fn series(emit: &Emitter, a: SeriesArgs) -> Result<()> {
    json_only(emit, "series")?;
    let psi = psi(&a.psi)?;
    let s = a.s.as_deref().map(|s| rational("s", s)).transpose()?;
    let kind = SeriesKind::from_name(&a.kind, s.clone())
        .ok_or_else(|| anyhow!("--kind `{}` is unknown or needs --s", a.kind))?;
    let verdict = classify_series(&psi, &kind)?;
    let mut body = serde_json::to_value(&verdict)?;
    let obj = body.as_object_mut().unwrap();
    obj.insert("kind".into(), kind.name().into());
    obj.insert("s".into(), s.as_ref().map(display).into());
    obj.insert("psi".into(), psi.to_string().into());
    if a.numerical {
        let nv = numerical_verdict(&psi, &kind, a.t_max, a.eta)?;
        obj.insert("numerical".into(), serde_json::to_value(&nv)?);
    }
    emit.json("series", body)
}

fn s1_member(emit: &Emitter, a: S1MemberArgs) -> Result<()> {
    json_only(emit, "s1-member")?;
    let psi = psi(&a.psi)?;
    let member = construct_s1_member(&psi, a.depth)?;
    let mut body = serde_json::to_value(&member)?;
    let obj = body.as_object_mut().unwrap();
    obj.insert("verified".into(), member.verify().into());
    obj.insert("psi".into(), psi.to_string().into());
    emit.json("s1-member", body)
}
