//! Property tests for the invariants the library promises.

use chrono::NaiveDate;
use proptest::prelude::*;
use stlf_core::boosting::{self, BaseKind, BoostParams};
use stlf_core::data::{make_windows, split_train_test, HolidayCalendar, HourlyLoadSeries, NormalizerState};
use stlf_core::eval::{mae, mape, rmse};
use stlf_core::experiment::persist::{from_json, to_json};
use stlf_core::forest::weighted_median;
use stlf_core::linear::{fit_elasticnet, soft_threshold, ElasticNetGrid};
use stlf_core::tree::{self, TreeParams};
use stlf_core::{Matrix, RegressionTree};

fn design(max_n: usize, max_d: usize) -> impl Strategy<Value = (Matrix, Vec<f64>)> {
    (2..=max_n, 1..=max_d).prop_flat_map(|(n, d)| {
        (
            prop::collection::vec(-10.0..10.0f64, n * d),
            prop::collection::vec(-10.0..10.0f64, n),
        )
            .prop_map(move |(x, y)| (Matrix::from_vec(n, d, x).unwrap(), y))
    })
}

fn blocks() -> impl Strategy<Value = (Matrix, Matrix)> {
    (1..12usize, 1..30usize).prop_flat_map(|(n, t)| {
        (
            prop::collection::vec(0.5..100.0f64, n * t),
            prop::collection::vec(-100.0..100.0f64, n * t),
        )
            .prop_map(move |(a, b)| (Matrix::from_vec(n, t, a).unwrap(), Matrix::from_vec(n, t, b).unwrap()))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn metrics_equal_double_loop((truth, pred) in blocks()) {
        let (n, t) = (truth.rows(), truth.cols());
        let (mut ape, mut ae, mut rt) = (0.0, 0.0, 0.0);
        for i in 0..n {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for j in 0..t {
                let e = truth.get(i, j) - pred.get(i, j);
                a += e.abs() / truth.get(i, j).abs();
                b += e.abs();
                c += e * e;
            }
            ape += a / t as f64;
            ae += b / t as f64;
            rt += (c / t as f64).sqrt();
        }
        prop_assert!((mape(&truth, &pred).unwrap() - 100.0 * ape / n as f64).abs() <= 1e-12 * (1.0 + ape));
        prop_assert!((mae(&truth, &pred).unwrap() - ae / n as f64).abs() <= 1e-12 * (1.0 + ae));
        prop_assert!((rmse(&truth, &pred).unwrap() - rt / n as f64).abs() <= 1e-12 * (1.0 + rt));
    }

    #[test]
    fn rmse_dominates_mae((truth, pred) in blocks()) {
        prop_assert!(rmse(&truth, &pred).unwrap() >= mae(&truth, &pred).unwrap() - 1e-12);
    }

    #[test]
    fn mape_is_scale_free((truth, pred) in blocks(), c in 0.01..100.0f64) {
        let scale = |m: &Matrix| Matrix::from_vec(m.rows(), m.cols(), m.as_slice().iter().map(|v| v * c).collect()).unwrap();
        let a = mape(&truth, &pred).unwrap();
        let b = mape(&scale(&truth), &scale(&pred)).unwrap();
        prop_assert!((a - b).abs() <= 1e-9 * (1.0 + a));
    }

    #[test]
    fn tree_predictions_stay_in_target_range((x, y) in design(40, 4), depth in 1..6usize, probe in prop::collection::vec(-20.0..20.0f64, 4)) {
        let lo = y.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = y.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let params = TreeParams::default().with_depth(Some(depth));
        for t in [tree::fit_cart(&x, &y, &params).unwrap(), tree::fit_extratree(&x, &y, &params).unwrap()] {
            prop_assert!(t.depth() <= depth);
            let v = t.predict_row(&probe[..x.cols()]);
            prop_assert!(v >= lo - 1e-9 && v <= hi + 1e-9);
        }
    }

    #[test]
    fn tree_roundtrips_through_json((x, y) in design(30, 3), seed in 0..1000u64) {
        let t = tree::fit_extratree(&x, &y, &TreeParams::unlimited().with_seed(seed)).unwrap();
        let back: RegressionTree = from_json(&to_json(&t).unwrap()).unwrap();
        prop_assert_eq!(&back, &t);
        for r in x.iter_rows() {
            prop_assert_eq!(back.predict_row(r).to_bits(), t.predict_row(r).to_bits());
        }
    }

    #[test]
    fn soft_threshold_shrinks_toward_zero(z in -100.0..100.0f64, g in 0.0..50.0f64) {
        let s = soft_threshold(z, g);
        prop_assert!(s.abs() <= z.abs());
        prop_assert_eq!(soft_threshold(-z, g), -s);
        prop_assert!((s.abs() - (z.abs() - g).max(0.0)).abs() < 1e-12);
    }

    #[test]
    fn elasticnet_beats_the_mean_predictor((x, y) in design(40, 5), alpha in 0.0..2.0f64, rho in 0.0..=1.0f64) {
        let m = fit_elasticnet(&x, &y, alpha, rho, 5_000, 1e-9).unwrap();
        let mut null = m.clone();
        null.coef.iter_mut().for_each(|w| *w = 0.0);
        null.intercept = y.iter().sum::<f64>() / y.len() as f64;
        prop_assert!(m.objective(&x, &y) <= null.objective(&x, &y) + 1e-9);
    }

    #[test]
    fn full_sample_boosting_is_monotone((x, y) in design(40, 3), seed in 0..100u64, cart in any::<bool>()) {
        let params = BoostParams {
            max_stages: 15,
            subsample: 1.0,
            base_kind: if cart { BaseKind::Cart } else { BaseKind::ExtratreeBag },
            bag_size: if cart { 1 } else { 3 },
            seed,
            elastic_grid: ElasticNetGrid::single(0.1, 0.5),
            ..BoostParams::default()
        };
        let m = if cart { boosting::fit_sgtb(&x, &y, &params) } else { boosting::fit_wgtb(&x, &y, &params) }.unwrap();
        for w in m.train_curve().windows(2) {
            prop_assert!(w[1] <= w[0] + 1e-9);
        }
    }

    #[test]
    fn weighted_median_is_a_member(pairs in prop::collection::vec((-50.0..50.0f64, 0.01..5.0f64), 1..20)) {
        let (v, w): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let m = weighted_median(&v, &w);
        prop_assert!(v.contains(&m));
        let below: f64 = v.iter().zip(&w).filter(|(a, _)| **a < m).map(|(_, b)| b).sum();
        prop_assert!(below <= 0.5 * w.iter().sum::<f64>() + 1e-12);
    }

    #[test]
    fn normalizer_roundtrips(values in prop::collection::vec(-1e4..1e4f64, 2..50)) {
        prop_assume!(values.iter().any(|v| *v != values[0]));
        let n = NormalizerState::fit(&values).unwrap();
        for &v in &values {
            let u = n.normalize(v);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&u));
            prop_assert!((n.denormalize(u) - v).abs() <= 1e-9 * (1.0 + v.abs()));
        }
    }

    #[test]
    fn window_counts_and_split_boundary(days in 9..60usize, train_days in 8..60usize) {
        let start = NaiveDate::from_ymd_opt(2020, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let values: Vec<f64> = (0..days * 24).map(|i| 50.0 + (i as f64 * 0.3).sin()).collect();
        let s = HourlyLoadSeries::new(start, values, &HolidayCalendar::default()).unwrap();
        let w = make_windows(&s, 168, 24, 24).unwrap();
        prop_assert_eq!(w.len(), (days * 24 - 192) / 24 + 1);
        // Enumerate spans against the boundary directly.
        let expected = w.samples.iter().filter(|x| x.input_start + 192 <= train_days * 24).count();
        match split_train_test(&w, train_days) {
            Ok((tr, te)) => {
                prop_assert_eq!(tr.len(), expected);
                prop_assert_eq!(tr.len() + te.len(), w.len());
            }
            Err(_) => prop_assert!(expected == 0 || expected == w.len()),
        }
    }
}
