//! ν-support vector regression with an RBF kernel.
//!
//! Dual over `2N` variables `(α, α*)`:
//!
//! ```text
//! min ½ βᵀKβ − yᵀβ,   β = α − α*
//! s.t. 0 ≤ α_i, α*_i ≤ C/N,   Σα = Σα* = Cν/2
//! ```
//!
//! Solved by pairwise SMO restricted to pairs inside the same group, which
//! keeps both sums fixed; working pairs use second-order selection. The
//! prediction is `Σ β_i K(x_i, x) + b`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{check_window, ensure_finite, flat_features, Forecaster};
use crate::data::{NormalizerState, SupervisedWindowSet, WindowSample, HORIZON};
use crate::error::{Error, Result};
use crate::matrix::Matrix;

const TAU: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NusvrParams {
    pub nu: f64,
    /// Candidate regularization factors; each hour keeps the one with the
    /// lowest holdout error. A single entry skips the holdout.
    pub c_grid: Vec<f64>,
    /// RBF width; `None` uses `1 / (d · Var(X))`.
    pub gamma: Option<f64>,
    pub tol: f64,
    pub max_iter: usize,
    pub holdout_fraction: f64,
}

impl Default for NusvrParams {
    fn default() -> Self {
        Self {
            nu: 0.1,
            c_grid: vec![1.0, 10.0, 100.0, 1000.0],
            gamma: None,
            tol: 1e-3,
            max_iter: 2_000_000,
            holdout_fraction: 0.1,
        }
    }
}

/// Converged dual variables.
#[derive(Debug, Clone, PartialEq)]
pub struct SvrDual {
    pub alpha: Vec<f64>,
    pub alpha_star: Vec<f64>,
    pub bias: f64,
    pub violation: f64,
    pub iterations: usize,
}

impl SvrDual {
    pub fn coef(&self) -> Vec<f64> {
        self.alpha.iter().zip(&self.alpha_star).map(|(a, b)| a - b).collect()
    }
}

/// `1 / (d · variance of all entries)`, the usual scale heuristic.
pub fn scale_gamma(x: &Matrix) -> f64 {
    let v = x.as_slice();
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let var = v.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (x.cols() as f64 * var)
    } else {
        1.0
    }
}

#[inline]
fn rbf(a: &[f64], b: &[f64], gamma: f64) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum();
    (-gamma * d2).exp()
}

/// Row-major `N×N` kernel matrix.
pub fn rbf_kernel_matrix(x: &Matrix, gamma: f64) -> Vec<f64> {
    let n = x.rows();
    let mut k = vec![0.0; n * n];
    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|i| (0..n).map(|j| if j < i { 0.0 } else { rbf(x.row(i), x.row(j), gamma) }).collect())
        .collect();
    for i in 0..n {
        for j in i..n {
            k[i * n + j] = rows[i][j];
            k[j * n + i] = rows[i][j];
        }
    }
    k
}

/// `½ βᵀKβ − yᵀβ`.
pub fn dual_objective(kernel: &[f64], y: &[f64], coef: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        let row = &kernel[i * n..(i + 1) * n];
        quad += coef[i] * row.iter().zip(coef).map(|(k, b)| k * b).sum::<f64>();
    }
    0.5 * quad - y.iter().zip(coef).map(|(a, b)| a * b).sum::<f64>()
}

/// Largest first-order KKT violation, recomputed from scratch.
pub fn kkt_violation(kernel: &[f64], y: &[f64], alpha: &[f64], alpha_star: &[f64], c: f64) -> f64 {
    let n = y.len();
    let ub = c / n as f64;
    let coef: Vec<f64> = alpha.iter().zip(alpha_star).map(|(a, b)| a - b).collect();
    let kb: Vec<f64> = (0..n)
        .map(|i| kernel[i * n..(i + 1) * n].iter().zip(&coef).map(|(k, b)| k * b).sum())
        .collect();
    // Gradients: ∂/∂α_i = Kβ_i − y_i, ∂/∂α*_i = −(Kβ_i − y_i).
    let mut up_p = f64::NEG_INFINITY;
    let mut low_p = f64::NEG_INFINITY;
    let mut up_n = f64::NEG_INFINITY;
    let mut low_n = f64::NEG_INFINITY;
    for i in 0..n {
        let g = kb[i] - y[i];
        if alpha[i] < ub {
            up_p = up_p.max(-g);
        }
        if alpha[i] > 0.0 {
            low_p = low_p.max(g);
        }
        let gs = -g;
        if alpha_star[i] < ub {
            up_n = up_n.max(-gs);
        }
        if alpha_star[i] > 0.0 {
            low_n = low_n.max(gs);
        }
    }
    (up_p + low_p).max(up_n + low_n).max(0.0)
}

/// SMO on a precomputed kernel.
pub fn solve_nusvr_dual(
    kernel: &[f64],
    y: &[f64],
    nu: f64,
    c: f64,
    tol: f64,
    max_iter: usize,
) -> Result<SvrDual> {
    let l = y.len();
    if l < 2 {
        return Err(Error::SeriesTooShort { required: 2, actual: l });
    }
    if kernel.len() != l * l {
        return Err(Error::ShapeMismatch(format!("kernel has {} entries for {l} samples", kernel.len())));
    }
    if !(nu > 0.0 && nu <= 1.0) {
        return Err(Error::hyper("nu", format!("must lie in (0, 1], got {nu}")));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::hyper("c", format!("must be positive, got {c}")));
    }
    for i in 0..l {
        let d = kernel[i * l + i];
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::NonPositiveDefiniteKernel(d));
        }
    }
    let ub = c / l as f64;
    let n2 = 2 * l;
    let sign = |s: usize| if s < l { 1.0 } else { -1.0 };
    let kq = |s: usize, t: usize| sign(s) * sign(t) * kernel[(s % l) * l + t % l];
    let mut alpha = vec![0.0; n2];
    let mut sum = c * nu / 2.0;
    for i in 0..l {
        let a = sum.min(ub);
        alpha[i] = a;
        alpha[i + l] = a;
        sum -= a;
    }
    let mut grad: Vec<f64> = (0..n2).map(|s| if s < l { -y[s] } else { y[s - l] }).collect();
    for t in 0..n2 {
        if alpha[t] != 0.0 {
            for s in 0..n2 {
                grad[s] += kq(s, t) * alpha[t];
            }
        }
    }
    let upper = |a: f64| a >= ub;
    let lower = |a: f64| a <= 0.0;
    let mut iter = 0;
    let violation;
    loop {
        // Working-set selection inside each sign group.
        let (mut gmaxp, mut ip) = (f64::NEG_INFINITY, usize::MAX);
        let (mut gmaxn, mut inn) = (f64::NEG_INFINITY, usize::MAX);
        for t in 0..n2 {
            if t < l {
                if !upper(alpha[t]) && -grad[t] >= gmaxp {
                    gmaxp = -grad[t];
                    ip = t;
                }
            } else if !lower(alpha[t]) && grad[t] >= gmaxn {
                gmaxn = grad[t];
                inn = t;
            }
        }
        let mut gmaxp2 = f64::NEG_INFINITY;
        let mut gmaxn2 = f64::NEG_INFINITY;
        let mut jbest = usize::MAX;
        let mut obj_min = f64::INFINITY;
        for j in 0..n2 {
            if j < l {
                if !lower(alpha[j]) {
                    let diff = gmaxp + grad[j];
                    gmaxp2 = gmaxp2.max(grad[j]);
                    if diff > 0.0 && ip != usize::MAX {
                        let mut quad = kq(ip, ip) + kq(j, j) - 2.0 * kq(ip, j);
                        if quad <= 0.0 {
                            quad = TAU;
                        }
                        let obj = -diff * diff / quad;
                        if obj <= obj_min {
                            obj_min = obj;
                            jbest = j;
                        }
                    }
                }
            } else if !upper(alpha[j]) {
                let diff = gmaxn - grad[j];
                gmaxn2 = gmaxn2.max(-grad[j]);
                if diff > 0.0 && inn != usize::MAX {
                    let mut quad = kq(inn, inn) + kq(j, j) - 2.0 * kq(inn, j);
                    if quad <= 0.0 {
                        quad = TAU;
                    }
                    let obj = -diff * diff / quad;
                    if obj <= obj_min {
                        obj_min = obj;
                        jbest = j;
                    }
                }
            }
        }
        let gap = (gmaxp + gmaxp2).max(gmaxn + gmaxn2);
        if gap < tol || jbest == usize::MAX {
            violation = gap.max(0.0);
            break;
        }
        if iter >= max_iter {
            return Err(Error::NoConvergence(iter));
        }
        iter += 1;
        let i = if jbest < l { ip } else { inn };
        let j = jbest;
        let mut quad = kq(i, i) + kq(j, j) - 2.0 * kq(i, j);
        if quad <= 0.0 {
            quad = TAU;
        }
        let (old_i, old_j) = (alpha[i], alpha[j]);
        let delta = (grad[i] - grad[j]) / quad;
        let total = old_i + old_j;
        let (mut ai, mut aj) = (old_i - delta, old_j + delta);
        if total > ub {
            if ai > ub {
                ai = ub;
                aj = total - ub;
            }
        } else if aj < 0.0 {
            aj = 0.0;
            ai = total;
        }
        if total > ub {
            if aj > ub {
                aj = ub;
                ai = total - ub;
            }
        } else if ai < 0.0 {
            ai = 0.0;
            aj = total;
        }
        alpha[i] = ai;
        alpha[j] = aj;
        let (di, dj) = (ai - old_i, aj - old_j);
        for s in 0..n2 {
            grad[s] += kq(i, s) * di + kq(j, s) * dj;
        }
    }
    // Bias from the gradients of free variables in each group.
    let mut side = [(f64::INFINITY, f64::NEG_INFINITY, 0usize, 0.0f64); 2];
    for t in 0..n2 {
        let g = if t < l { 0 } else { 1 };
        let e = &mut side[g];
        if upper(alpha[t]) {
            e.1 = e.1.max(grad[t]);
        } else if lower(alpha[t]) {
            e.0 = e.0.min(grad[t]);
        } else {
            e.2 += 1;
            e.3 += grad[t];
        }
    }
    let r = |(ubv, lbv, nfree, sfree): (f64, f64, usize, f64)| {
        if nfree > 0 {
            sfree / nfree as f64
        } else if ubv.is_finite() && lbv.is_finite() {
            (ubv + lbv) / 2.0
        } else if ubv.is_finite() {
            ubv
        } else {
            lbv
        }
    };
    let rho = (r(side[0]) - r(side[1])) / 2.0;
    Ok(SvrDual {
        alpha: alpha[..l].to_vec(),
        alpha_star: alpha[l..].to_vec(),
        bias: -rho,
        violation,
        iterations: iter,
    })
}

/// A single scalar ν-SVR.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NuSvr {
    pub support: Matrix,
    pub coef: Vec<f64>,
    pub bias: f64,
    pub gamma: f64,
}

impl NuSvr {
    pub fn predict_row(&self, x: &[f64]) -> f64 {
        self.support
            .iter_rows()
            .zip(&self.coef)
            .map(|(s, b)| b * rbf(s, x, self.gamma))
            .sum::<f64>()
            + self.bias
    }
}

pub fn fit_nusvr(x: &Matrix, y: &[f64], nu: f64, c: f64, gamma: Option<f64>, tol: f64) -> Result<NuSvr> {
    if x.rows() != y.len() {
        return Err(Error::LengthMismatch {
            left: x.rows(),
            right: y.len(),
        });
    }
    let gamma = gamma.unwrap_or_else(|| scale_gamma(x));
    let k = rbf_kernel_matrix(x, gamma);
    let dual = solve_nusvr_dual(&k, y, nu, c, tol, NusvrParams::default().max_iter)?;
    let coef = dual.coef();
    let keep: Vec<usize> = (0..y.len()).filter(|&i| coef[i] != 0.0).collect();
    Ok(NuSvr {
        support: x.select_rows(&keep),
        coef: keep.iter().map(|&i| coef[i]).collect(),
        bias: dual.bias,
        gamma,
    })
}

/// 24 per-hour ν-SVRs sharing one training input matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NusvrModel {
    pub inputs: Matrix,
    pub gamma: f64,
    /// `coef[h][i]` multiplies `K(inputs_i, x)` for target hour `h`.
    pub coef: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
    pub chosen_c: Vec<f64>,
    pub normalizer: NormalizerState,
}

impl NusvrModel {
    pub fn fit(train: &SupervisedWindowSet, params: &NusvrParams) -> Result<Self> {
        if params.c_grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        let n = train.len();
        let rows: Vec<Vec<f64>> = train
            .samples
            .iter()
            .map(|w| flat_features(w, &train.normalizer, false))
            .collect();
        let x = Matrix::from_rows(&rows)?;
        let targets: Vec<Vec<f64>> = (0..n).map(|i| train.normalized_target(i)).collect();
        let gamma = params.gamma.unwrap_or_else(|| scale_gamma(&x));
        let k = rbf_kernel_matrix(&x, gamma);
        let n_hold = ((n as f64 * params.holdout_fraction).round() as usize).min(n.saturating_sub(2));
        let cut = n - n_hold;
        let sub_k: Vec<f64> = if params.c_grid.len() > 1 && n_hold > 0 {
            (0..cut).flat_map(|i| k[i * n..i * n + cut].iter().copied()).collect()
        } else {
            Vec::new()
        };
        let fits: Vec<(f64, SvrDual)> = (0..HORIZON)
            .into_par_iter()
            .map(|h| {
                let y: Vec<f64> = targets.iter().map(|t| t[h]).collect();
                let c = if sub_k.is_empty() {
                    params.c_grid[0]
                } else {
                    let mut best = (f64::INFINITY, params.c_grid[0]);
                    for &c in &params.c_grid {
                        let d = solve_nusvr_dual(&sub_k, &y[..cut], params.nu, c, params.tol, params.max_iter)?;
                        let beta = d.coef();
                        let err: f64 = (cut..n)
                            .map(|i| {
                                let p: f64 =
                                    (0..cut).map(|j| beta[j] * k[i * n + j]).sum::<f64>() + d.bias;
                                (p - y[i]).powi(2)
                            })
                            .sum();
                        if err < best.0 {
                            best = (err, c);
                        }
                    }
                    best.1
                };
                let d = solve_nusvr_dual(&k, &y, params.nu, c, params.tol, params.max_iter)?;
                Ok((c, d))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            inputs: x,
            gamma,
            coef: fits.iter().map(|(_, d)| d.coef()).collect(),
            bias: fits.iter().map(|(_, d)| d.bias).collect(),
            chosen_c: fits.iter().map(|(c, _)| *c).collect(),
            normalizer: train.normalizer,
        })
    }
}

impl Forecaster for NusvrModel {
    fn name(&self) -> &'static str {
        "NuSVR"
    }

    fn predict(&self, window: &WindowSample) -> Result<Vec<f64>> {
        check_window(window, self.inputs.cols())?;
        let x = flat_features(window, &self.normalizer, false);
        let kv: Vec<f64> = self.inputs.iter_rows().map(|s| rbf(s, &x, self.gamma)).collect();
        let out: Vec<f64> = self
            .coef
            .iter()
            .zip(&self.bias)
            .map(|(beta, b)| {
                let u = beta.iter().zip(&kv).map(|(a, k)| a * k).sum::<f64>() + b;
                self.normalizer.denormalize(u)
            })
            .collect();
        ensure_finite(self.name(), &out)?;
        Ok(out)
    }
}
