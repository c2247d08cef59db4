//! Cross-module properties checked against independent brute force.

use dioph_core::cantor::{verify_witness, Construction, ConstructionParams, Selector};
use dioph_core::cover::{cover_cell_count, cover_cells};
use dioph_core::curve::{count_near_curve, count_near_curve_multi, CurveFn, CurveSpec};
use dioph_core::psi::ApproxFn;
use dioph_core::rational::{int, nearest_int_dist, rat, Rational};
use num_rational::Ratio;
use proptest::prelude::*;

fn cubic() -> ApproxFn {
    ApproxFn::power(int(1), int(3)).unwrap()
}

/// `‖q·x²‖`-free count for `f(x) = x²` on `[0, 1]`: `|q·f((p1+θ1)/q) − θ2 − p2| < δ` for some `p2`.
fn parabola_count(theta: (Rational, Rational), q_param: u64, delta: &Rational) -> u64 {
    let mut n = 0;
    for q in q_param + 1..=2 * q_param {
        let qr = int(q as i64);
        let lo = (-&theta.0).ceil().to_integer();
        let hi = (&qr - &theta.0).floor().to_integer();
        let mut p1 = lo;
        while p1 <= hi {
            let x = (Rational::from_integer(p1.clone()) + &theta.0) / &qr;
            let v = &qr * &x * &x - &theta.1;
            if nearest_int_dist(&v) < *delta {
                n += 1;
            }
            p1 += 1;
        }
    }
    n
}

#[test]
fn parabola_counts_match_brute_force() {
    let curve = CurveSpec::unit_parabola();
    for theta in [(int(0), int(0)), (rat(1, 3), rat(1, 7)), (rat(1, 2), rat(0, 1))] {
        for q in [1u64, 3, 8, 17] {
            for delta in [rat(1, 2), rat(1, 5), rat(1, 16)] {
                let fast = count_near_curve(&curve, &theta, q, &delta, 0).unwrap().count;
                assert_eq!(fast, parabola_count(theta.clone(), q, &delta), "θ={theta:?} Q={q} δ={delta}");
            }
        }
    }
}

#[test]
fn descent_certificate_serializes_and_recomputes() {
    let params = ConstructionParams::new(11, Ratio::new(1, 2), Some((rat(1, 2), rat(1, 3)))).unwrap();
    let descent = Construction::new(params.clone(), 6).descend(3, &Selector::Seed(11)).unwrap();
    let cert = &descent.certificate;
    assert!(cert.passed);
    let again = verify_witness(&params, &descent.witness, cert.q_h, cert.q_i);
    assert_eq!(&again, cert);
    let v = serde_json::to_value(&descent).unwrap();
    assert_eq!(v["certificate"]["Q_H"], 1331);
    assert_eq!(v["selector"], "seed:11");
    assert_eq!(v["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn cover_stream_matches_count() {
    let psi = cubic();
    for t in 0..=3 {
        let streamed = cover_cells(t, &psi, &(rat(1, 2), rat(1, 3))).unwrap().count() as u128;
        assert_eq!(streamed, cover_cell_count(t, &psi).unwrap());
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn counts_are_monotone_in_delta(q in 1u64..40, a in 0i64..5, b in 0i64..5) {
        let curve = CurveSpec::new(CurveFn::parse("poly:0,1,1").unwrap(), int(0), int(1), 2.0, 2.0).unwrap();
        let theta = (rat(a, 5), rat(b, 5));
        let deltas: Vec<Rational> = (1..=6).map(|k| rat(1, 1 << k)).collect();
        let counts = count_near_curve_multi(&curve, &theta, q, &deltas).unwrap();
        prop_assert!(counts.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn rationals_with_small_denominators_fail_condition_h(num in 1i64..50, den in 2i64..50) {
        let params = ConstructionParams::new(11, Ratio::new(1, 2), None).unwrap();
        let x = (rat(num, den), rat(1, 2));
        let cert = verify_witness(&params, &x, 100, 1);
        // q = lcm of the denominators makes both distances vanish.
        let lcm = num_integer::lcm(x.0.denom().clone(), num_bigint::BigInt::from(2));
        prop_assert!(!cert.passed || lcm >= num_bigint::BigInt::from(100));
    }
}
