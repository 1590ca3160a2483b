//! ElasticNet regression by cyclic coordinate descent.
//!
//! Objective, over standardized features `x̃` with an unpenalized intercept:
//!
//! ```text
//! 1/(2N) ‖y − b − x̃·w‖² + α·ρ·‖w‖₁ + α·(1−ρ)·‖w‖₂²
//! ```
//!
//! Columns of `x̃` are centered, so the optimal intercept is `mean(y)` and
//! each coordinate update is a soft threshold:
//! `w_j ← S(z_j, αρ) / (a_j + 2α(1−ρ))`, with `a_j = mean(x̃_j²)` and
//! `z_j = mean(x̃_j · r) + a_j·w_j`. The correlations `mean(x̃ · r)` are
//! maintained through the Gram matrix, so a sweep costs O(d²) rather than
//! O(N·d).

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Per-feature centering and scaling (population standard deviation; constant
/// features get scale 1).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

impl Standardizer {
    pub fn fit(x: &Matrix) -> Self {
        let n = x.rows() as f64;
        let d = x.cols();
        let mut means = vec![0.0; d];
        for row in x.iter_rows() {
            for (m, v) in means.iter_mut().zip(row) {
                *m += v;
            }
        }
        for m in &mut means {
            *m /= n;
        }
        let mut scales = vec![0.0; d];
        for row in x.iter_rows() {
            for ((s, v), m) in scales.iter_mut().zip(row).zip(&means) {
                *s += (v - m) * (v - m);
            }
        }
        for s in &mut scales {
            *s = (*s / n).sqrt();
            if *s <= 1e-12 {
                *s = 1.0;
            }
        }
        Self { means, scales }
    }

    pub fn identity(d: usize) -> Self {
        Self {
            means: vec![0.0; d],
            scales: vec![1.0; d],
        }
    }

    #[inline]
    pub fn apply(&self, j: usize, v: f64) -> f64 {
        (v - self.means[j]) / self.scales[j]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ElasticNetModel {
    /// Coefficients on standardized features.
    pub coef: Vec<f64>,
    pub intercept: f64,
    pub alpha: f64,
    pub rho: f64,
    pub standardizer: Standardizer,
    pub n_sweeps: usize,
    pub converged: bool,
}

impl ElasticNetModel {
    pub fn n_features(&self) -> usize {
        self.coef.len()
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.coef.len() {
            return Err(Error::DimensionMismatch {
                expected: self.coef.len(),
                actual: x.len(),
            });
        }
        Ok(self.predict_row(x))
    }

    #[inline]
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut acc = self.intercept;
        for (j, (&v, &w)) in x.iter().zip(&self.coef).enumerate() {
            acc += self.standardizer.apply(j, v) * w;
        }
        acc
    }

    pub fn predict_matrix(&self, x: &Matrix) -> Vec<f64> {
        x.iter_rows().map(|r| self.predict_row(r)).collect()
    }

    /// Coefficients and intercept in the original feature units.
    pub fn raw_coefficients(&self) -> (Vec<f64>, f64) {
        let w: Vec<f64> = self
            .coef
            .iter()
            .zip(&self.standardizer.scales)
            .map(|(c, s)| c / s)
            .collect();
        let b = self.intercept
            - w.iter()
                .zip(&self.standardizer.means)
                .map(|(w, m)| w * m)
                .sum::<f64>();
        (w, b)
    }

    /// The training objective evaluated on `(x, y)`.
    pub fn objective(&self, x: &Matrix, y: &[f64]) -> f64 {
        let n = y.len() as f64;
        let sse: f64 = x
            .iter_rows()
            .zip(y)
            .map(|(r, t)| (t - self.predict_row(r)).powi(2))
            .sum();
        sse / (2.0 * n) + penalty(&self.coef, self.alpha, self.rho)
    }
}

fn penalty(w: &[f64], alpha: f64, rho: f64) -> f64 {
    let l1: f64 = w.iter().map(|v| v.abs()).sum();
    let l2: f64 = w.iter().map(|v| v * v).sum();
    alpha * rho * l1 + alpha * (1.0 - rho) * l2
}

#[inline]
pub fn soft_threshold(z: f64, gamma: f64) -> f64 {
    if z > gamma {
        z - gamma
    } else if z < -gamma {
        z + gamma
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            max_iters: 10_000,
            tol: 1e-6,
        }
    }
}

pub fn fit_elasticnet(
    x: &Matrix,
    y: &[f64],
    alpha: f64,
    rho: f64,
    max_iters: usize,
    tol: f64,
) -> Result<ElasticNetModel> {
    fit_elasticnet_traced(x, y, alpha, rho, max_iters, tol).map(|(m, _)| m)
}

/// Like [`fit_elasticnet`], also returning the objective after every sweep.
pub fn fit_elasticnet_traced(
    x: &Matrix,
    y: &[f64],
    alpha: f64,
    rho: f64,
    max_iters: usize,
    tol: f64,
) -> Result<(ElasticNetModel, Vec<f64>)> {
    fit_elasticnet_from(x, y, alpha, rho, max_iters, tol, None)
}

/// Coordinate descent started from `init` (standardized coefficients)
/// instead of zero.
pub fn fit_elasticnet_from(
    x: &Matrix,
    y: &[f64],
    alpha: f64,
    rho: f64,
    max_iters: usize,
    tol: f64,
    init: Option<&[f64]>,
) -> Result<(ElasticNetModel, Vec<f64>)> {
    if x.rows() == 0 || x.cols() == 0 {
        return Err(Error::EmptyInput("ElasticNet design matrix".into()));
    }
    if y.len() != x.rows() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    if !x.is_finite() || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("ElasticNet training data".into()));
    }
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::hyper("alpha", format!("must be finite and >= 0, got {alpha}")));
    }
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::hyper("rho", format!("must lie in [0, 1], got {rho}")));
    }
    let n = x.rows();
    let d = x.cols();
    let nf = n as f64;
    let standardizer = Standardizer::fit(x);
    // Column-major standardized copy for cheap coordinate access.
    let mut cols = vec![0.0; n * d];
    for (i, row) in x.iter_rows().enumerate() {
        for (j, &v) in row.iter().enumerate() {
            cols[j * n + i] = standardizer.apply(j, v);
        }
    }
    // Gram matrix of the standardized columns, scaled by 1/N.
    let mut gram = vec![0.0; d * d];
    // SAFETY: `cols` is d×n row-major, read once as is and once transposed
    // through swapped strides; `gram` is d×d.
    unsafe {
        matrixmultiply::dgemm(
            d, n, d, 1.0 / nf,
            cols.as_ptr(), n as isize, 1,
            cols.as_ptr(), 1, n as isize,
            0.0,
            gram.as_mut_ptr(), d as isize, 1,
        );
    }
    let sq: Vec<f64> = (0..d).map(|j| gram[j * d + j]).collect();
    let intercept = y.iter().sum::<f64>() / nf;
    let centered: Vec<f64> = y.iter().map(|v| v - intercept).collect();
    let yy = centered.iter().map(|v| v * v).sum::<f64>() / nf;
    // c = x̃ᵀ(y − b)/N, and q = x̃ᵀr/N is kept equal to c − G·w throughout.
    let c: Vec<f64> = (0..d)
        .map(|j| cols[j * n..(j + 1) * n].iter().zip(&centered).map(|(a, r)| a * r).sum::<f64>() / nf)
        .collect();
    let mut q = c.clone();
    let mut w = vec![0.0; d];
    if let Some(w0) = init {
        if w0.len() != d {
            return Err(Error::DimensionMismatch { expected: d, actual: w0.len() });
        }
        for (j, &wj) in w0.iter().enumerate() {
            if wj != 0.0 {
                for (qk, g) in q.iter_mut().zip(&gram[j * d..(j + 1) * d]) {
                    *qk -= g * wj;
                }
            }
        }
        w.copy_from_slice(w0);
    }
    let l1 = alpha * rho;
    let l2 = 2.0 * alpha * (1.0 - rho);
    // ‖r‖²/N = ‖y − b‖²/N − wᵀc − wᵀq, since wᵀGw = wᵀ(c − q).
    let objective = |q: &[f64], w: &[f64]| {
        let fit: f64 = w.iter().zip(c.iter().zip(q)).map(|(wj, (cj, qj))| wj * (cj + qj)).sum();
        (yy - fit).max(0.0) / 2.0 + penalty(w, alpha, rho)
    };
    let mut trace = Vec::new();
    let mut converged = false;
    let mut sweeps = 0;
    while sweeps < max_iters {
        sweeps += 1;
        let mut max_delta: f64 = 0.0;
        for j in 0..d {
            if sq[j] == 0.0 {
                continue;
            }
            let z = q[j] + sq[j] * w[j];
            let new = soft_threshold(z, l1) / (sq[j] + l2);
            let delta = new - w[j];
            if delta != 0.0 {
                for (qk, g) in q.iter_mut().zip(&gram[j * d..(j + 1) * d]) {
                    *qk -= g * delta;
                }
                w[j] = new;
                max_delta = max_delta.max(delta.abs());
            }
        }
        trace.push(objective(&q, &w));
        if max_delta < tol {
            converged = true;
            break;
        }
    }
    Ok((
        ElasticNetModel {
            coef: w,
            intercept,
            alpha,
            rho,
            standardizer,
            n_sweeps: sweeps,
            converged,
        },
        trace,
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ElasticNetGrid {
    pub alphas: Vec<f64>,
    pub rhos: Vec<f64>,
    pub solver: SolverOptions,
}

impl Default for ElasticNetGrid {
    fn default() -> Self {
        Self {
            alphas: vec![0.001, 0.01, 0.1, 1.0, 10.0, 100.0],
            rhos: vec![0.1, 0.3, 0.5, 0.7, 0.9],
            solver: SolverOptions::default(),
        }
    }
}

impl ElasticNetGrid {
    pub fn single(alpha: f64, rho: f64) -> Self {
        Self {
            alphas: vec![alpha],
            rhos: vec![rho],
            solver: SolverOptions::default(),
        }
    }
}

/// Validation MSE for every `(alpha, rho)` cell, indexed `[alpha][rho]`.
pub type GridScores = Vec<Vec<f64>>;

/// Exhaustive search over the grid; the cell with the lowest validation MSE
/// wins, ties going to the larger α and then the larger ρ.
pub fn grid_search_elasticnet(
    x_train: &Matrix,
    y_train: &[f64],
    x_val: &Matrix,
    y_val: &[f64],
    grid: &ElasticNetGrid,
) -> Result<(ElasticNetModel, GridScores)> {
    if grid.alphas.is_empty() || grid.rhos.is_empty() {
        return Err(Error::EmptyGrid);
    }
    if x_val.rows() == 0 || x_val.rows() != y_val.len() {
        return Err(Error::EmptyInput("validation set".into()));
    }
    // One warm-started path per ρ, from the largest α down.
    let mut by_alpha: Vec<usize> = (0..grid.alphas.len()).collect();
    by_alpha.sort_by(|&a, &b| grid.alphas[b].total_cmp(&grid.alphas[a]));
    let paths: Vec<Vec<(usize, ElasticNetModel, f64)>> = (0..grid.rhos.len())
        .into_par_iter()
        .map(|r| {
            let mut prev: Option<Vec<f64>> = None;
            let mut out = Vec::with_capacity(by_alpha.len());
            for &a in &by_alpha {
                let (m, _) = fit_elasticnet_from(
                    x_train,
                    y_train,
                    grid.alphas[a],
                    grid.rhos[r],
                    grid.solver.max_iters,
                    grid.solver.tol,
                    prev.as_deref(),
                )?;
                let mse = m
                    .predict_matrix(x_val)
                    .iter()
                    .zip(y_val)
                    .map(|(p, t)| (p - t).powi(2))
                    .sum::<f64>()
                    / y_val.len() as f64;
                prev = Some(m.coef.clone());
                out.push((a, m, mse));
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;
    let mut cells: Vec<(usize, usize)> = Vec::new();
    let mut fits: Vec<(ElasticNetModel, f64)> = Vec::new();
    for (r, path) in paths.into_iter().enumerate() {
        for (a, m, mse) in path {
            cells.push((a, r));
            fits.push((m, mse));
        }
    }
    let mut scores = vec![vec![0.0; grid.rhos.len()]; grid.alphas.len()];
    let mut best: Option<usize> = None;
    for (k, &(a, r)) in cells.iter().enumerate() {
        let mse = fits[k].1;
        scores[a][r] = mse;
        let better = match best {
            None => true,
            Some(b) => {
                let (bm, bmse) = (&fits[b].0, fits[b].1);
                let (m, _) = &fits[k];
                mse < bmse
                    || (mse == bmse && (m.alpha > bm.alpha || (m.alpha == bm.alpha && m.rho > bm.rho)))
            }
        };
        if better {
            best = Some(k);
        }
    }
    let best = best.expect("non-empty grid");
    let model = fits.into_iter().nth(best).expect("index in range").0;
    Ok((model, scores))
}
