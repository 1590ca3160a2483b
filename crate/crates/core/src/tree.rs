//! Axis-aligned binary regression trees.
//!
//! Three split rules share one builder:
//!
//! - exact CART: every feature, every midpoint between consecutive distinct
//!   sorted values, minimizing the summed child squared error;
//! - random-subset CART (random forest): the exact search restricted to a
//!   per-node random subset of features;
//! - ExtraTree: `K` random non-constant features, one uniform threshold each
//!   in the node's `(min, max)` range, best of the `K` kept.
//!
//! Routing goes left iff `x[feature] <= threshold`. Ties between equally good
//! splits go to the lowest feature index, then the lowest threshold.

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng::{self, StreamRng};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeParams {
    /// `None` grows until the other stopping rules fire. Written as
    /// `"unlimited"` in config and model files.
    #[serde(with = "depth_serde")]
    pub max_depth: Option<usize>,
    pub min_samples_split: usize,
    pub min_samples_leaf: usize,
    /// Candidate features per node for ExtraTree; `None` means all of them.
    pub n_candidate_features: Option<usize>,
    pub seed: u64,
}

mod depth_serde {
    use serde::{Deserialize, Deserializer, Serializer};

    const UNLIMITED: &str = "unlimited";

    pub fn serialize<S: Serializer>(depth: &Option<usize>, s: S) -> Result<S::Ok, S::Error> {
        match depth {
            Some(d) => s.serialize_u64(*d as u64),
            None => s.serialize_str(UNLIMITED),
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Depth(usize),
        Word(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<usize>, D::Error> {
        match Raw::deserialize(d)? {
            Raw::Depth(v) => Ok(Some(v)),
            Raw::Word(w) if w == UNLIMITED => Ok(None),
            Raw::Word(w) => Err(serde::de::Error::custom(format!(
                "max_depth must be a count or \"{UNLIMITED}\", got \"{w}\""
            ))),
        }
    }
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: Some(3),
            min_samples_split: 2,
            min_samples_leaf: 1,
            n_candidate_features: None,
            seed: 0,
        }
    }
}

impl TreeParams {
    /// Fully grown tree: no depth limit, leaves of one sample.
    pub fn unlimited() -> Self {
        Self {
            max_depth: None,
            ..Self::default()
        }
    }

    pub fn with_depth(mut self, depth: Option<usize>) -> Self {
        self.max_depth = depth;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn validate(&self, n_features: usize) -> Result<()> {
        if self.max_depth == Some(0) {
            return Err(Error::hyper("max_depth", "must be at least 1"));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::hyper("min_samples_leaf", "must be at least 1"));
        }
        if let Some(k) = self.n_candidate_features {
            if k == 0 || k > n_features {
                return Err(Error::hyper(
                    "n_candidate_features",
                    format!("must be in 1..={n_features}, got {k}"),
                ));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Node {
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    Leaf {
        value: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionTree {
    nodes: Vec<Node>,
    n_features: usize,
    params: TreeParams,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum SplitRule {
    Exact,
    ExactSubset(usize),
    Random(usize),
}

impl RegressionTree {
    /// A single-leaf tree.
    pub fn constant(value: f64, n_features: usize) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
            n_features,
            params: TreeParams::default(),
        }
    }

    pub fn from_nodes(nodes: Vec<Node>, n_features: usize, params: TreeParams) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::EmptyInput("tree nodes".into()));
        }
        for n in &nodes {
            if let Node::Split {
                feature,
                left,
                right,
                ..
            } = *n
            {
                if feature >= n_features || left >= nodes.len() || right >= nodes.len() {
                    return Err(Error::CorruptFile("tree node references out of range".into()));
                }
            }
        }
        Ok(Self {
            nodes,
            n_features,
            params,
        })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn params(&self) -> &TreeParams {
        &self.params
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    /// Length of the longest root-to-leaf path, in edges.
    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::DimensionMismatch {
                expected: self.n_features,
                actual: x.len(),
            });
        }
        Ok(self.predict_row(x))
    }

    /// Prediction without the dimension check.
    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if x[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }
}

pub fn fit_cart(x: &Matrix, y: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    let indices: Vec<usize> = (0..x.rows()).collect();
    fit_on_indices(x, y, &indices, SplitRule::Exact, params)
}

pub fn fit_extratree(x: &Matrix, y: &[f64], params: &TreeParams) -> Result<RegressionTree> {
    let indices: Vec<usize> = (0..x.rows()).collect();
    let k = params.n_candidate_features.unwrap_or(x.cols());
    fit_on_indices(x, y, &indices, SplitRule::Random(k), params)
}

/// CART restricted to `max_features` random features per node.
pub fn fit_random_subspace_cart(
    x: &Matrix,
    y: &[f64],
    max_features: usize,
    params: &TreeParams,
) -> Result<RegressionTree> {
    let indices: Vec<usize> = (0..x.rows()).collect();
    fit_on_indices(x, y, &indices, SplitRule::ExactSubset(max_features), params)
}

pub(crate) fn check_xy(x: &Matrix, y: &[f64]) -> Result<()> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::EmptyInput(format!(
            "design matrix is {}x{}",
            x.rows(),
            x.cols()
        )));
    }
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("training data".into()));
    }
    Ok(())
}

/// Fits on the rows listed in `indices` (duplicates allowed, as in bootstrap
/// resamples).
pub(crate) fn fit_on_indices(
    x: &Matrix,
    y: &[f64],
    indices: &[usize],
    rule: SplitRule,
    params: &TreeParams,
) -> Result<RegressionTree> {
    check_xy(x, y)?;
    if indices.is_empty() {
        return Err(Error::EmptyInput("no training rows selected".into()));
    }
    params.validate(x.cols())?;
    match rule {
        SplitRule::ExactSubset(k) | SplitRule::Random(k) if k == 0 || k > x.cols() => {
            return Err(Error::hyper(
                "n_candidate_features",
                format!("must be in 1..={}, got {k}", x.cols()),
            ));
        }
        _ => {}
    }
    let mut builder = Builder {
        x,
        y,
        rule,
        params,
        rng: rng::stream(params.seed),
        nodes: Vec::new(),
        scratch: Vec::with_capacity(indices.len()),
    };
    let mut idx = indices.to_vec();
    builder.grow(&mut idx, 0);
    Ok(RegressionTree {
        nodes: builder.nodes,
        n_features: x.cols(),
        params: *params,
    })
}

struct Builder<'a> {
    x: &'a Matrix,
    y: &'a [f64],
    rule: SplitRule,
    params: &'a TreeParams,
    rng: StreamRng,
    nodes: Vec<Node>,
    scratch: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Builder<'_> {
    fn grow(&mut self, idx: &mut [usize], depth: usize) -> usize {
        let n = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / n as f64;
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let node_id = self.nodes.len();
        self.nodes.push(Node::Leaf { value: mean });

        let p = self.params;
        let depth_exhausted = p.max_depth.is_some_and(|d| depth >= d);
        let scale = idx.iter().map(|&i| self.y[i] * self.y[i]).sum::<f64>();
        if depth_exhausted
            || n < p.min_samples_split.max(2)
            || n < 2 * p.min_samples_leaf
            || sse <= 1e-24 * scale.max(f64::MIN_POSITIVE)
        {
            return node_id;
        }

        let best = match self.rule {
            SplitRule::Exact => {
                let features: Vec<usize> = (0..self.x.cols()).collect();
                self.best_exact(idx, mean, &features)
            }
            SplitRule::ExactSubset(k) => {
                let mut features = index::sample(&mut self.rng, self.x.cols(), k).into_vec();
                features.sort_unstable();
                self.best_exact(idx, mean, &features)
            }
            SplitRule::Random(k) => self.best_random(idx, mean, k),
        };
        let Some(best) = best else {
            return node_id;
        };
        if best.gain <= 1e-12 * sse {
            return node_id;
        }

        let split = partition(idx, |i| self.x.get(i, best.feature) <= best.threshold);
        let (left_idx, right_idx) = idx.split_at_mut(split);
        let left = self.grow(left_idx, depth + 1);
        let right = self.grow(right_idx, depth + 1);
        self.nodes[node_id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        node_id
    }

    /// Exhaustive midpoint search over `features` (ascending).
    fn best_exact(&mut self, idx: &[usize], mean: f64, features: &[usize]) -> Option<Candidate> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Candidate> = None;
        for &f in features {
            self.scratch.clear();
            self.scratch
                .extend(idx.iter().map(|&i| (self.x.get(i, f), self.y[i] - mean)));
            self.scratch
                .sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite features"));
            let mut left_sum = 0.0;
            for pos in 0..n - 1 {
                left_sum += self.scratch[pos].1;
                let n_left = pos + 1;
                let n_right = n - n_left;
                if n_left < min_leaf {
                    continue;
                }
                if n_right < min_leaf {
                    break;
                }
                let (a, b) = (self.scratch[pos].0, self.scratch[pos + 1].0);
                if a >= b {
                    continue;
                }
                // Centered targets: the SSE reduction is S_left^2 * n / (n_left * n_right).
                let gain = left_sum * left_sum * n as f64 / (n_left as f64 * n_right as f64);
                if best.is_none_or(|c| gain > c.gain) {
                    best = Some(Candidate {
                        feature: f,
                        threshold: midpoint(a, b),
                        gain,
                    });
                }
            }
        }
        best
    }

    fn best_random(&mut self, idx: &[usize], mean: f64, k: usize) -> Option<Candidate> {
        let d = self.x.cols();
        let mut ranges = Vec::with_capacity(d);
        for f in 0..d {
            let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                let v = self.x.get(i, f);
                (lo.min(v), hi.max(v))
            });
            if hi > lo {
                ranges.push((f, lo, hi));
            }
        }
        if ranges.is_empty() {
            return None;
        }
        let k = k.min(ranges.len());
        let mut picks = index::sample(&mut self.rng, ranges.len(), k).into_vec();
        // Thresholds are drawn in pick order; evaluation order is by feature
        // so that ties resolve to the lowest index.
        let mut draws: Vec<(usize, f64)> = picks
            .drain(..)
            .map(|p| {
                let (f, lo, hi) = ranges[p];
                let u: f64 = self.rng.random();
                let mut t = lo + u * (hi - lo);
                if t >= hi {
                    t = lo;
                }
                (f, t)
            })
            .collect();
        draws.sort_by_key(|&(f, _)| f);

        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut best: Option<Candidate> = None;
        for (f, t) in draws {
            let mut left_sum = 0.0;
            let mut n_left = 0usize;
            for &i in idx {
                if self.x.get(i, f) <= t {
                    left_sum += self.y[i] - mean;
                    n_left += 1;
                }
            }
            let n_right = n - n_left;
            if n_left < min_leaf || n_right < min_leaf {
                continue;
            }
            let gain = left_sum * left_sum * n as f64 / (n_left as f64 * n_right as f64);
            if best.is_none_or(|c| gain > c.gain) {
                best = Some(Candidate {
                    feature: f,
                    threshold: t,
                    gain,
                });
            }
        }
        best
    }
}

/// Midpoint of `a < b` that still separates them after rounding.
pub(crate) fn midpoint(a: f64, b: f64) -> f64 {
    let m = a + (b - a) * 0.5;
    if m >= b || m < a {
        a
    } else {
        m
    }
}

/// Stable in-place partition; returns the number of elements satisfying `pred`.
fn partition(idx: &mut [usize], pred: impl Fn(usize) -> bool) -> usize {
    let (left, right): (Vec<usize>, Vec<usize>) = idx.iter().partition(|&&i| pred(i));
    let k = left.len();
    idx[..k].copy_from_slice(&left);
    idx[k..].copy_from_slice(&right);
    k
}
