//! Extreme learning machine: one frozen random sigmoid layer, output weights
//! by ridge least squares.
//!
//! Hidden weights and biases are drawn uniform in `[−1, 1]` neuron by neuron
//! from one stream, so a network with `L` neurons is a prefix of the network
//! with `L' > L` under the same seed.

use nalgebra::DMatrix;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_window, ensure_finite, flat_features, Forecaster};
use crate::data::{NormalizerState, SupervisedWindowSet, WindowSample, HORIZON, LOOKBACK};
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElmParams {
    pub hidden: usize,
    pub ridge: f64,
    /// Candidate ridges scored on the trailing holdout; empty keeps `ridge`.
    pub ridge_grid: Vec<f64>,
    pub holdout_fraction: f64,
    /// Append the target-day holiday flag to the 168 loads.
    pub holiday: bool,
    pub seed: u64,
}

impl Default for ElmParams {
    fn default() -> Self {
        Self {
            hidden: 1800,
            ridge: 1e-6,
            ridge_grid: vec![1e-6, 1e-4, 1e-2, 1e-1, 1.0, 10.0],
            holdout_fraction: 0.1,
            holiday: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElmModel {
    /// `d × L` input weights.
    pub weights: Matrix,
    pub biases: Vec<f64>,
    /// `L × T` output weights.
    pub output: Matrix,
    pub ridge: f64,
    pub holiday: bool,
    pub normalizer: NormalizerState,
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// Row-major `C = A·B`.
pub(crate) fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * n];
    if m == 0 || n == 0 || k == 0 {
        return c;
    }
    // SAFETY: slices sized m·k, k·n and m·n with row-major strides.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), k as isize, 1,
            b.as_ptr(), n as isize, 1,
            0.0,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
    c
}

impl ElmModel {
    /// Random hidden layer with zero output weights.
    pub fn init(n_inputs: usize, n_outputs: usize, params: &ElmParams, normalizer: NormalizerState) -> Result<Self> {
        if params.hidden == 0 {
            return Err(Error::hyper("hidden", "must be at least 1"));
        }
        if !(params.ridge >= 0.0) {
            return Err(Error::hyper("ridge", format!("must be >= 0, got {}", params.ridge)));
        }
        let l = params.hidden;
        let mut r = rng::stream(rng::derive_named(params.seed, "elm-hidden"));
        let mut weights = Matrix::zeros(n_inputs, l);
        let mut biases = vec![0.0; l];
        for i in 0..l {
            for j in 0..n_inputs {
                weights.set(j, i, r.random_range(-1.0..=1.0));
            }
            biases[i] = r.random_range(-1.0..=1.0);
        }
        Ok(Self {
            weights,
            biases,
            output: Matrix::zeros(l, n_outputs),
            ridge: params.ridge,
            holiday: params.holiday,
            normalizer,
        })
    }

    pub fn n_hidden(&self) -> usize {
        self.biases.len()
    }

    /// `σ(X·A + e)`, `N × L`.
    pub fn hidden(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.weights.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.weights.rows(),
                actual: x.cols(),
            });
        }
        let l = self.n_hidden();
        let mut h = matmul(x.as_slice(), self.weights.as_slice(), x.rows(), x.cols(), l);
        for row in h.chunks_mut(l) {
            for (v, b) in row.iter_mut().zip(&self.biases) {
                *v = sigmoid(*v + b);
            }
        }
        Matrix::from_vec(x.rows(), l, h)
    }

    /// Solves the output weights; the hidden layer is left untouched.
    pub fn fit_output(&mut self, x: &Matrix, y: &Matrix) -> Result<()> {
        if x.rows() == 0 {
            return Err(Error::EmptyInput("ELM training set".into()));
        }
        if x.rows() != y.rows() {
            return Err(Error::LengthMismatch {
                left: x.rows(),
                right: y.rows(),
            });
        }
        let h = self.hidden(x)?;
        let (n, l, t) = (h.rows(), h.cols(), y.cols());
        let hm = DMatrix::from_row_slice(n, l, h.as_slice());
        let ym = DMatrix::from_row_slice(n, t, y.as_slice());
        let beta = if n >= l {
            let mut gram = hm.transpose() * &hm;
            for i in 0..l {
                gram[(i, i)] += self.ridge;
            }
            let rhs = hm.transpose() * &ym;
            gram.cholesky()
                .ok_or_else(|| Error::SingularSystem(format!("ELM normal equations, ridge {}", self.ridge)))?
                .solve(&rhs)
        } else {
            // Dual form: β = Hᵀ (HHᵀ + λI)⁻¹ Y.
            let mut gram = &hm * hm.transpose();
            for i in 0..n {
                gram[(i, i)] += self.ridge;
            }
            let z = gram
                .cholesky()
                .ok_or_else(|| Error::SingularSystem(format!("ELM kernel system, ridge {}", self.ridge)))?
                .solve(&ym);
            hm.transpose() * z
        };
        let mut out = Matrix::zeros(l, t);
        for i in 0..l {
            for j in 0..t {
                out.set(i, j, beta[(i, j)]);
            }
        }
        if !out.is_finite() {
            return Err(Error::NonFinite("ELM output weights".into()));
        }
        self.output = out;
        Ok(())
    }

    /// Scaled outputs for a batch of feature rows.
    pub fn predict_scaled(&self, x: &Matrix) -> Result<Matrix> {
        let h = self.hidden(x)?;
        let t = self.output.cols();
        let o = matmul(h.as_slice(), self.output.as_slice(), h.rows(), h.cols(), t);
        Matrix::from_vec(x.rows(), t, o)
    }

    pub fn fit(train: &SupervisedWindowSet, params: &ElmParams) -> Result<Self> {
        let (x, y) = design(train, params.holiday)?;
        let n = x.rows();
        let n_hold = ((n as f64 * params.holdout_fraction).round() as usize).min(n.saturating_sub(1));
        let ridge = if params.ridge_grid.is_empty() || n_hold == 0 {
            params.ridge
        } else {
            let cut = n - n_hold;
            let (xf, yf) = (x.slice_rows(0, cut), y.slice_rows(0, cut));
            let (xv, yv) = (x.slice_rows(cut, n), y.slice_rows(cut, n));
            let mut best = (f64::INFINITY, params.ridge_grid[0]);
            for &lambda in &params.ridge_grid {
                let p = ElmParams { ridge: lambda, ..params.clone() };
                let mut m = Self::init(x.cols(), y.cols(), &p, train.normalizer)?;
                m.fit_output(&xf, &yf)?;
                let pv = m.predict_scaled(&xv)?;
                let err: f64 = pv.as_slice().iter().zip(yv.as_slice()).map(|(a, b)| (a - b).powi(2)).sum();
                // Ties keep the larger ridge.
                if err <= best.0 {
                    best = (err, lambda);
                }
            }
            best.1
        };
        let p = ElmParams { ridge, ..params.clone() };
        let mut m = Self::init(x.cols(), y.cols(), &p, train.normalizer)?;
        m.fit_output(&x, &y)?;
        Ok(m)
    }
}

/// Scaled features and targets for every window.
pub(crate) fn design(set: &SupervisedWindowSet, holiday: bool) -> Result<(Matrix, Matrix)> {
    if set.is_empty() {
        return Err(Error::EmptyInput("training windows".into()));
    }
    let rows: Vec<Vec<f64>> = set.samples.iter().map(|w| flat_features(w, &set.normalizer, holiday)).collect();
    let targets: Vec<Vec<f64>> = (0..set.len()).map(|i| set.normalized_target(i)).collect();
    Ok((Matrix::from_rows(&rows)?, Matrix::from_rows(&targets)?))
}

impl Forecaster for ElmModel {
    fn name(&self) -> &'static str {
        "ELM"
    }

    fn predict(&self, window: &WindowSample) -> Result<Vec<f64>> {
        check_window(window, LOOKBACK)?;
        let x = flat_features(window, &self.normalizer, self.holiday);
        let x = Matrix::from_vec(1, x.len(), x)?;
        let o = self.predict_scaled(&x)?;
        let out: Vec<f64> = o.row(0).iter().map(|&u| self.normalizer.denormalize(u)).collect();
        debug_assert_eq!(out.len(), HORIZON);
        ensure_finite(self.name(), &out)?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random(seed: u64, n: usize, d: usize) -> Matrix {
        let mut r = rng::stream(seed);
        Matrix::from_vec(n, d, (0..n * d).map(|_| r.random::<f64>()).collect()).unwrap()
    }

    fn norm() -> NormalizerState {
        NormalizerState { min: 0.0, max: 1.0 }
    }

    #[test]
    fn hidden_layers_are_nested() {
        let small = ElmModel::init(4, 2, &ElmParams { hidden: 5, ..Default::default() }, norm()).unwrap();
        let big = ElmModel::init(4, 2, &ElmParams { hidden: 9, ..Default::default() }, norm()).unwrap();
        for j in 0..4 {
            for i in 0..5 {
                assert_eq!(small.weights.get(j, i), big.weights.get(j, i));
            }
        }
        assert_eq!(small.biases[..], big.biases[..5]);
    }

    #[test]
    fn training_leaves_hidden_layer_alone() {
        let x = random(1, 30, 4);
        let y = random(2, 30, 3);
        let mut m = ElmModel::init(4, 3, &ElmParams { hidden: 20, ..Default::default() }, norm()).unwrap();
        let (w, b) = (m.weights.clone(), m.biases.clone());
        m.fit_output(&x, &y).unwrap();
        assert_eq!(m.weights, w);
        assert_eq!(m.biases, b);
    }

    #[test]
    fn targets_in_hidden_span_are_fit() {
        let x = random(3, 60, 4);
        let mut m = ElmModel::init(4, 2, &ElmParams { hidden: 10, ridge: 1e-12, ..Default::default() }, norm()).unwrap();
        let h = m.hidden(&x).unwrap();
        let w = random(4, 10, 2);
        let y = Matrix::from_vec(60, 2, matmul(h.as_slice(), w.as_slice(), 60, 10, 2)).unwrap();
        m.fit_output(&x, &y).unwrap();
        let p = m.predict_scaled(&x).unwrap();
        let mse: f64 = p.as_slice().iter().zip(y.as_slice()).map(|(a, b)| (a - b).powi(2)).sum::<f64>() / 120.0;
        assert!(mse < 1e-8, "mse {mse}");
    }

    #[test]
    fn dual_branch_matches_primal_normal_equations() {
        let x = random(5, 8, 3);
        let y = random(6, 8, 2);
        let params = ElmParams { hidden: 12, ridge: 1e-3, ..Default::default() };
        let mut m = ElmModel::init(3, 2, &params, norm()).unwrap();
        m.fit_output(&x, &y).unwrap();
        let h = m.hidden(&x).unwrap();
        let hm = DMatrix::from_row_slice(8, 12, h.as_slice());
        let ym = DMatrix::from_row_slice(8, 2, y.as_slice());
        let gram = hm.transpose() * &hm + DMatrix::identity(12, 12) * 1e-3;
        let beta = gram.lu().solve(&(hm.transpose() * ym)).unwrap();
        for i in 0..12 {
            for j in 0..2 {
                assert!((beta[(i, j)] - m.output.get(i, j)).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn zero_output_predicts_normalizer_min() {
        let m = ElmModel::init(2, 3, &ElmParams { hidden: 4, ..Default::default() }, NormalizerState { min: 10.0, max: 20.0 }).unwrap();
        let o = m.predict_scaled(&random(7, 1, 2)).unwrap();
        assert!(o.as_slice().iter().all(|&v| v == 0.0));
        assert_eq!(m.normalizer.denormalize(0.0), 10.0);
    }
}
