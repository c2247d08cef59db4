use criterion::{criterion_group, criterion_main, Criterion};
use dioph_core::cantor::{verify_witness, Construction, ConstructionParams, RectNode, Selector};
use dioph_core::cover::{cover_cells, s_volume_level};
use dioph_core::curve::{count_near_curve, CurveSpec};
use dioph_core::psi::ApproxFn;
use dioph_core::rational::{int, rat};
use num_rational::Ratio;
use std::hint::black_box;

fn cover(c: &mut Criterion) {
    let psi = ApproxFn::power(int(1), int(3)).unwrap();
    let theta = (rat(1, 2), rat(1, 3));
    c.bench_function("cover_cells t=4", |b| {
        b.iter(|| cover_cells(4, &psi, &theta).unwrap().count())
    });
    c.bench_function("s_volume_level t=12", |b| b.iter(|| s_volume_level(black_box(12), 1.5, &psi).unwrap()));
}

fn curve(c: &mut Criterion) {
    let parabola = CurveSpec::unit_parabola();
    let theta = (rat(1, 3), rat(1, 7));
    c.bench_function("count_near_curve Q=256", |b| {
        b.iter(|| count_near_curve(&parabola, &theta, black_box(256), &rat(1, 16), 0).unwrap())
    });
}

fn cantor(c: &mut Criterion) {
    let params = ConstructionParams::new(11, Ratio::new(1, 2), Some((rat(1, 2), rat(1, 3)))).unwrap();
    let con = Construction::new(params.clone(), 6);
    let node = RectNode::root(40, 90);
    c.bench_function("refine level 0", |b| b.iter(|| con.refine(black_box(&node)).unwrap()));
    let descent = con.descend(4, &Selector::First).unwrap();
    c.bench_function("verify_witness Q_H=11^4", |b| {
        b.iter(|| verify_witness(&params, black_box(&descent.witness), 14641, 1))
    });
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = cover, curve, cantor
}
criterion_main!(benches);
