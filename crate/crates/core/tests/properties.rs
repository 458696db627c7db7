use proptest::prelude::*;

use tatonnement::demand::{aggregate_demand, nested_demand};
use tatonnement::engine::distorted_prices;
use tatonnement::equilibrium::f_bound;
use tatonnement::lyapunov::span;
use tatonnement::market::{Buyer, Good, MarketSpec, UtilityTree};
use tatonnement::planner::zone_of;
use tatonnement::trace::{read_trace, RecordKind, TraceFormat, TraceRecord, TraceSink, TraceWriter};

fn tree(n: usize) -> impl Strategy<Value = UtilityTree> {
    let weights = prop::collection::vec(0.1f64..10.0, n);
    let flat = (-5.0f64..0.95, weights.clone()).prop_map(|(rho, w)| UtilityTree::ces(rho, &w));
    let nested = (-5.0f64..-0.01, 0.01f64..0.95, weights).prop_map(move |(root, group, w)| {
        let split = n / 2;
        let leaf = |i: usize| UtilityTree::leaf(i, w[i]);
        UtilityTree::aggregate(
            root,
            vec![
                UtilityTree::aggregate(group, (0..split).map(leaf).collect()),
                UtilityTree::aggregate(group, (split..n).map(leaf).collect()),
            ],
        )
    });
    if n >= 2 {
        prop_oneof![flat, nested].boxed()
    } else {
        flat.boxed()
    }
}

fn buyer_and_prices() -> impl Strategy<Value = (Buyer, Vec<f64>)> {
    (1usize..6).prop_flat_map(|n| {
        (0.01f64..100.0, tree(n), prop::collection::vec(-8.0f64..8.0, n))
            .prop_map(|(b, t, lp)| (Buyer::new(0, b, t), lp.into_iter().map(f64::exp).collect()))
    })
}

proptest! {
    #[test]
    fn budget_is_exhausted((buyer, prices) in buyer_and_prices()) {
        let x = nested_demand(&buyer, &prices).unwrap().quantities;
        let spent: f64 = x.iter().zip(&prices).map(|(x, p)| x * p).sum();
        prop_assert!((spent - buyer.budget).abs() <= 1e-9 * buyer.budget);
        prop_assert!(x.iter().all(|&q| q >= 0.0 && q.is_finite()));
    }

    #[test]
    fn demand_is_homogeneous((buyer, prices) in buyer_and_prices(), c in 0.01f64..100.0) {
        let x = nested_demand(&buyer, &prices).unwrap().quantities;
        let scaled: Vec<f64> = prices.iter().map(|p| p * c).collect();
        let richer = Buyer::new(0, buyer.budget * c, buyer.utility.clone());
        let y = nested_demand(&richer, &scaled).unwrap().quantities;
        for (a, b) in x.iter().zip(&y) {
            prop_assert!((a - b).abs() <= 1e-9 * a.abs().max(b.abs()) + 1e-300);
        }
    }

    #[test]
    fn aggregate_is_sum_of_buyers((buyer, prices) in buyer_and_prices(), b2 in 0.1f64..10.0) {
        let n = prices.len();
        let other = Buyer::new(1, b2, UtilityTree::ces(0.0, &vec![1.0; n]));
        let spec = MarketSpec::new((0..n).map(|i| Good::new(i, 1.0, 1024.0)).collect(), vec![buyer.clone(), other.clone()]);
        let total = aggregate_demand(&spec, &prices).unwrap();
        let a = nested_demand(&buyer, &prices).unwrap().quantities;
        let b = nested_demand(&other, &prices).unwrap().quantities;
        for i in 0..n {
            prop_assert!((total.quantities[i] - a[i] - b[i]).abs() <= 1e-12 * total.quantities[i]);
        }
    }

    #[test]
    fn span_is_symmetric(a in -1e6f64..1e6, b in -1e6f64..1e6, c in -1e6f64..1e6) {
        let s = span(a, b, c);
        prop_assert_eq!(s, span(c, a, b));
        prop_assert_eq!(s, span(b, a, c));
        prop_assert!(s >= (a - b).abs() && s >= 0.0);
    }

    #[test]
    fn distorted_prices_hit_the_bound(p in prop::collection::vec(0.01f64..100.0, 1..8), f in 1.0f64..16.0, seed: u64) {
        let q = distorted_prices(&p, f, seed);
        let got = f_bound(&q, &p);
        prop_assert!((got - f).abs() <= 1e-12 * f, "{} vs {}", got, f);
    }

    #[test]
    fn zones_are_monotone(chi in 1.0f64..1e6, a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let (zl, zh) = (zone_of(lo * chi, chi), zone_of(hi * chi, chi));
        prop_assert!(zl.index <= zh.index);
        prop_assert_eq!(zone_of(a * chi, chi).safe, (0.25..=0.75).contains(&a));
    }

    #[test]
    fn traces_round_trip(
        t in 0.0f64..1e5,
        prices in prop::collection::vec(1e-9f64..1e9, 3),
        x in prop::collection::vec(0.0f64..1e3, 3),
        v in prop::collection::vec(0.0f64..1e4, 3),
        phi in 0.0f64..10.0,
        ongoing: bool,
        csv: bool,
    ) {
        let rec = TraceRecord {
            t,
            kind: RecordKind::Update,
            good: Some(2),
            prices,
            v: if ongoing { v } else { Vec::new() },
            x,
            x_bar: ongoing.then_some(phi / 3.0),
            w_tilde: ongoing.then_some(phi / 7.0),
            z_bar: ongoing.then_some(-phi / 11.0),
            delta_t: Some(t / 13.0),
            old_price: Some(phi * 1.1),
            phi,
            misspending: phi * 0.3,
            f: 1.0 + phi,
            zones: if ongoing { vec![0, 4, 7] } else { Vec::new() },
            message: None,
        };
        let format = if csv { TraceFormat::Csv } else { TraceFormat::Jsonl };
        let mut w = TraceWriter::new(Vec::new(), format);
        w.record(&rec).unwrap();
        let bytes = w.into_inner();
        prop_assert_eq!(read_trace(&bytes[..]).unwrap(), vec![rec]);
    }
}
