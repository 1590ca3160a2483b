//! Boosting primitives against numeric oracles, plus stage-wise behaviour of
//! full SGTB and WGTB fits.

use rand::Rng;
use stlf_core::boosting::{
    self, early_stop_scan, line_search_gamma, negative_gradient, BaseKind, BoostParams, EarlyStopping,
};
use stlf_core::linear::ElasticNetGrid;
use stlf_core::rng;
use stlf_core::Matrix;

fn fixture(seed: u64, n: usize) -> (Matrix, Vec<f64>) {
    let mut r = rng::stream(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..4).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|x| 2.0 * x[0] + (3.0 * x[1]).sin() + x[2] * x[3] + r.random_range(-0.3..0.3))
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn loss(y: &[f64], f: &[f64]) -> f64 {
    y.iter().zip(f).map(|(a, b)| 0.5 * (a - b).powi(2)).sum()
}

#[test]
fn negative_gradient_matches_central_differences() {
    let mut r = rng::stream(1);
    for _ in 0..20 {
        let y: Vec<f64> = (0..30).map(|_| r.random_range(-5.0..5.0)).collect();
        let f: Vec<f64> = (0..30).map(|_| r.random_range(-5.0..5.0)).collect();
        let g = negative_gradient(&y, &f).unwrap();
        let h = 1e-5;
        for i in 0..30 {
            let mut plus = f.clone();
            plus[i] += h;
            let mut minus = f.clone();
            minus[i] -= h;
            let fd = -(loss(&y, &plus) - loss(&y, &minus)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{fd} vs {}", g[i]);
        }
    }
}

/// Golden-section minimizer on `[lo, hi]`, narrowed until the bracket is
/// below `tol`.
fn golden_section(phi: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64, tol: f64) -> f64 {
    let inv = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = hi - inv * (hi - lo);
    let mut d = lo + inv * (hi - lo);
    let (mut fc, mut fd) = (phi(c), phi(d));
    while hi - lo > tol {
        if fc < fd {
            hi = d;
            d = c;
            fd = fc;
            c = hi - inv * (hi - lo);
            fc = phi(c);
        } else {
            lo = c;
            c = d;
            fc = fd;
            d = lo + inv * (hi - lo);
            fd = phi(d);
        }
    }
    0.5 * (lo + hi)
}

#[test]
fn line_search_matches_golden_section() {
    let mut r = rng::stream(2);
    for k in 0..100 {
        let n = r.random_range(5..60);
        let f: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let target_gamma = r.random_range(-5.0..5.0);
        let noise = [1e-3, 1e-2, 1e-1][k % 3];
        let y: Vec<f64> = (0..n)
            .map(|i| f[i] + target_gamma * h[i] + noise * r.random_range(-1.0..1.0))
            .collect();
        let gamma = line_search_gamma(&y, &f, &h).unwrap();
        let phi = |g: f64| (0..n).map(|i| 0.5 * (y[i] - f[i] - g * h[i]).powi(2)).sum::<f64>();
        let numeric = golden_section(phi, -50.0, 50.0, 1e-12);
        assert!((gamma - numeric).abs() < 1e-8, "fixture {k}: {gamma} vs {numeric}");
    }
}

fn full_rate(kind: BaseKind, seed: u64) -> BoostParams {
    BoostParams {
        shrinkage: 0.05,
        max_stages: 70,
        subsample: 1.0,
        base_kind: kind,
        bag_size: if kind == BaseKind::Cart { 1 } else { 10 },
        seed,
        elastic_grid: ElasticNetGrid::single(0.01, 0.5),
        ..BoostParams::default()
    }
}

#[test]
fn full_sample_stages_never_raise_training_error() {
    for seed in 0..5 {
        let (x, y) = fixture(seed, 150);
        for model in [
            boosting::fit_sgtb(&x, &y, &full_rate(BaseKind::Cart, seed)).unwrap(),
            boosting::fit_wgtb(&x, &y, &full_rate(BaseKind::ExtratreeBag, seed)).unwrap(),
        ] {
            let c = model.train_curve();
            assert_eq!(c.len(), 71);
            for w in c.windows(2) {
                assert!(w[1] <= w[0] + 1e-9, "{} -> {}", w[0], w[1]);
            }
            assert!(c[70] < c[0]);
        }
    }
}

#[test]
fn zero_stage_wgtb_is_its_warm_start() {
    let (x, y) = fixture(3, 120);
    let params = BoostParams {
        max_stages: 0,
        validation_fraction: 0.2,
        ..full_rate(BaseKind::ExtratreeBag, 0)
    };
    let warm = boosting::fit_warm_start(&x, &y, 0.2, &params.elastic_grid).unwrap();
    let model = boosting::fit_wgtb(&x, &y, &params).unwrap();
    for r in x.iter_rows() {
        assert_eq!(model.predict_row(r).to_bits(), warm.predict_row(r).to_bits());
    }
}

#[test]
fn scan_with_large_patience_finds_global_minimum() {
    // Falls, climbs over a hump, then falls below the first dip.
    let hump: Vec<f64> = (0..120)
        .map(|k| {
            let t = k as f64;
            1.0 - 0.3 * (-(t - 10.0).powi(2) / 20.0).exp() + 0.4 * (-(t - 40.0).powi(2) / 200.0).exp() - 0.006 * t
        })
        .collect();
    let argmin = |c: &[f64]| (0..c.len()).fold(0, |b, i| if c[i] < c[b] { i } else { b });
    assert_eq!(early_stop_scan(&hump, hump.len()).unwrap(), argmin(&hump));
    assert!(early_stop_scan(&hump, 5).unwrap() < argmin(&hump));

    // A recorded CART-variant validation curve.
    let (x, y) = fixture(11, 200);
    let params = BoostParams {
        max_stages: 80,
        subsample: 0.8,
        validation_fraction: 0.25,
        ..full_rate(BaseKind::Cart, 4)
    };
    let curve = boosting::fit_sgtb(&x, &y, &params).unwrap().validation_curve().unwrap();
    assert_eq!(early_stop_scan(&curve, curve.len()).unwrap(), argmin(&curve));
}

#[test]
fn early_stopping_keeps_the_best_prefix() {
    let (x, y) = fixture(5, 200);
    let open = BoostParams {
        max_stages: 150,
        shrinkage: 0.3,
        validation_fraction: 0.2,
        ..full_rate(BaseKind::Cart, 1)
    };
    let stopped = BoostParams {
        early_stop: Some(EarlyStopping { patience: 10 }),
        ..open.clone()
    };
    let full = boosting::fit_sgtb(&x, &y, &open).unwrap();
    let short = boosting::fit_sgtb(&x, &y, &stopped).unwrap();
    let best = early_stop_scan(&full.validation_curve().unwrap(), 10).unwrap();
    assert_eq!(short.n_stages(), best);
    for r in x.iter_rows().take(20) {
        assert_eq!(short.predict_row(r).to_bits(), full.predict_truncated(r, best).to_bits());
    }
}
