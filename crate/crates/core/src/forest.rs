//! Conventional tree ensembles used as comparison hybrids: bagging,
//! ExtraTrees, random forest and AdaBoost.R2.
//!
//! Member `i` of a forest fitted with master seed `s` always draws from the
//! substream `rng::derive(s, i)`, so forests are identical however the
//! members are scheduled across threads.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;
use crate::tree::{self, check_xy, RegressionTree, SplitRule, TreeParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ForestKind {
    Bagging,
    RandomForest,
    ExtraTrees,
    Adaboost,
}

impl ForestKind {
    pub fn is_uniform(self) -> bool {
        !matches!(self, ForestKind::Adaboost)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaseLearner {
    Cart,
    ExtraTree,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Forest {
    kind: ForestKind,
    trees: Vec<RegressionTree>,
    weights: Vec<f64>,
}

impl Forest {
    /// Uniformly weighted forest from already fitted trees.
    pub fn uniform(kind: ForestKind, trees: Vec<RegressionTree>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::EmptyInput("forest has no trees".into()));
        }
        let weights = vec![1.0; trees.len()];
        Ok(Self {
            kind,
            trees,
            weights,
        })
    }

    pub fn kind(&self) -> ForestKind {
        self.kind
    }

    pub fn trees(&self) -> &[RegressionTree] {
        &self.trees
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.trees.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trees.is_empty()
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features() {
            return Err(Error::DimensionMismatch {
                expected: self.n_features(),
                actual: x.len(),
            });
        }
        Ok(self.predict_row(x))
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        if self.kind.is_uniform() {
            let sum: f64 = self.trees.iter().map(|t| t.predict_row(x)).sum();
            sum / self.trees.len() as f64
        } else {
            let preds: Vec<f64> = self.trees.iter().map(|t| t.predict_row(x)).collect();
            weighted_median(&preds, &self.weights)
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

/// Smallest value whose cumulative weight reaches half the total weight.
pub fn weighted_median(values: &[f64], weights: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let total: f64 = weights.iter().sum();
    let mut acc = 0.0;
    for &i in &order {
        acc += weights[i];
        if acc >= 0.5 * total {
            return values[i];
        }
    }
    values[*order.last().expect("non-empty")]
}

fn bootstrap(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    (0..n).map(|_| rng.random_range(0..n)).collect()
}

/// `n_trees` trees on bootstrap resamples (or the full sample), averaged.
pub fn fit_bag(
    x: &Matrix,
    y: &[f64],
    n_trees: usize,
    base: BaseLearner,
    use_bootstrap: bool,
    params: &TreeParams,
    seed: u64,
) -> Result<Forest> {
    check_xy(x, y)?;
    if n_trees == 0 {
        return Err(Error::hyper("n_trees", "must be at least 1"));
    }
    let rule = match base {
        BaseLearner::Cart => SplitRule::Exact,
        BaseLearner::ExtraTree => SplitRule::Random(params.n_candidate_features.unwrap_or(x.cols())),
    };
    let kind = match base {
        BaseLearner::Cart => ForestKind::Bagging,
        BaseLearner::ExtraTree => ForestKind::ExtraTrees,
    };
    let trees = fit_members(x, y, n_trees, rule, use_bootstrap, params, seed)?;
    Forest::uniform(kind, trees)
}

/// Canonical ExtraTrees forest: full sample, no bootstrap.
pub fn fit_extratrees(x: &Matrix, y: &[f64], n_trees: usize, params: &TreeParams, seed: u64) -> Result<Forest> {
    fit_bag(x, y, n_trees, BaseLearner::ExtraTree, false, params, seed)
}

/// Bootstrap resamples plus `max_features` random features per node.
pub fn fit_random_forest(
    x: &Matrix,
    y: &[f64],
    n_trees: usize,
    max_features: usize,
    params: &TreeParams,
    seed: u64,
) -> Result<Forest> {
    fit_random_forest_with(x, y, n_trees, max_features, true, params, seed)
}

pub fn fit_random_forest_with(
    x: &Matrix,
    y: &[f64],
    n_trees: usize,
    max_features: usize,
    use_bootstrap: bool,
    params: &TreeParams,
    seed: u64,
) -> Result<Forest> {
    check_xy(x, y)?;
    if n_trees == 0 {
        return Err(Error::hyper("n_trees", "must be at least 1"));
    }
    let trees = fit_members(
        x,
        y,
        n_trees,
        SplitRule::ExactSubset(max_features),
        use_bootstrap,
        params,
        seed,
    )?;
    Forest::uniform(ForestKind::RandomForest, trees)
}

fn fit_members(
    x: &Matrix,
    y: &[f64],
    n_trees: usize,
    rule: SplitRule,
    use_bootstrap: bool,
    params: &TreeParams,
    seed: u64,
) -> Result<Vec<RegressionTree>> {
    let n = x.rows();
    (0..n_trees)
        .into_par_iter()
        .map(|i| {
            let member_seed = rng::derive(seed, i as u64);
            let indices = if use_bootstrap {
                bootstrap(n, &mut rng::stream(rng::derive_named(member_seed, "bootstrap")))
            } else {
                (0..n).collect()
            };
            let p = params.with_seed(member_seed);
            tree::fit_on_indices(x, y, &indices, rule, &p)
        })
        .collect()
}

/// Per-round trace of an AdaBoost.R2 fit.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaboostTrace {
    pub average_loss: Vec<f64>,
    /// Training MAE of the ensemble after each accepted round.
    pub train_mae: Vec<f64>,
    /// Set when the loop stopped on an average loss of at least 0.5.
    pub degenerate: Option<(usize, f64)>,
}

/// AdaBoost.R2 (linear loss). Each round resamples the training set by the
/// current sample weights, fits a tree, and reweights by `beta^(1 - loss)`.
/// The confidence of round `m` is `ln(1 / beta_m)`, with `beta` floored at
/// 1e-10 so a perfect round gets a finite weight and ends the loop.
pub fn fit_adaboost_r2(
    x: &Matrix,
    y: &[f64],
    n_rounds: usize,
    params: &TreeParams,
    seed: u64,
) -> Result<Forest> {
    fit_adaboost_r2_traced(x, y, n_rounds, params, seed).map(|(f, _)| f)
}

pub fn fit_adaboost_r2_traced(
    x: &Matrix,
    y: &[f64],
    n_rounds: usize,
    params: &TreeParams,
    seed: u64,
) -> Result<(Forest, AdaboostTrace)> {
    check_xy(x, y)?;
    let n = x.rows();
    if n < 2 {
        return Err(Error::EmptyInput("AdaBoost.R2 needs at least 2 samples".into()));
    }
    if n_rounds == 0 {
        return Err(Error::hyper("n_rounds", "must be at least 1"));
    }
    let mut sample_w = vec![1.0 / n as f64; n];
    let mut trees = Vec::new();
    let mut weights = Vec::new();
    let mut trace = AdaboostTrace {
        average_loss: Vec::new(),
        train_mae: Vec::new(),
        degenerate: None,
    };
    let mut member_preds: Vec<Vec<f64>> = Vec::new();

    for round in 0..n_rounds {
        let round_seed = rng::derive(seed, round as u64);
        let mut r = rng::stream(rng::derive_named(round_seed, "resample"));
        let indices = weighted_resample(&sample_w, n, &mut r);
        let tree = tree::fit_on_indices(x, y, &indices, SplitRule::Exact, &params.with_seed(round_seed))?;
        let preds = tree.predict_matrix(x);
        let abs_err: Vec<f64> = preds.iter().zip(y).map(|(p, t)| (p - t).abs()).collect();
        let max_err = abs_err.iter().copied().fold(0.0, f64::max);
        let loss: Vec<f64> = if max_err > 0.0 {
            abs_err.iter().map(|e| e / max_err).collect()
        } else {
            vec![0.0; n]
        };
        let avg: f64 = loss.iter().zip(&sample_w).map(|(l, w)| l * w).sum();
        trace.average_loss.push(avg);
        if avg >= 0.5 {
            trace.degenerate = Some((round, avg));
            if trees.is_empty() {
                return Err(Error::DegenerateLoss { round, loss: avg });
            }
            break;
        }
        let beta = (avg / (1.0 - avg)).max(1e-10);
        trees.push(tree);
        weights.push((1.0 / beta).ln());
        member_preds.push(preds);

        let mae = (0..n)
            .map(|i| {
                let p: Vec<f64> = member_preds.iter().map(|m| m[i]).collect();
                (weighted_median(&p, &weights) - y[i]).abs()
            })
            .sum::<f64>()
            / n as f64;
        trace.train_mae.push(mae);

        if avg <= 0.0 {
            break;
        }
        for (w, l) in sample_w.iter_mut().zip(&loss) {
            *w *= beta.powf(1.0 - l);
        }
        let total: f64 = sample_w.iter().sum();
        for w in &mut sample_w {
            *w /= total;
        }
    }
    Ok((
        Forest {
            kind: ForestKind::Adaboost,
            trees,
            weights,
        },
        trace,
    ))
}

fn weighted_resample(weights: &[f64], count: usize, r: &mut impl Rng) -> Vec<usize> {
    let mut cdf = Vec::with_capacity(weights.len());
    let mut acc = 0.0;
    for w in weights {
        acc += w;
        cdf.push(acc);
    }
    (0..count)
        .map(|_| {
            let u = r.random::<f64>() * acc;
            cdf.partition_point(|&c| c <= u).min(weights.len() - 1)
        })
        .collect()
}
