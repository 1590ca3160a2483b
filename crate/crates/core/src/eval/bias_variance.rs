//! Monte-Carlo bias–variance estimation against the generator's known mean.
//!
//! Training sets are fresh noise draws on a fixed grid of hours, featurized
//! as `[hour, weekday, holiday]`. At each evaluation point the lab estimates
//! the mean prediction `f̄`, the variance around it (a `1/K` moment), the
//! squared bias `(f_B − f̄)²` and the total error against fresh test noise.
//! The noise term `σ²` comes straight from the spec.

use chrono::{Datelike, NaiveDateTime, Timelike};
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::synthetic::SyntheticLoadSpec;
use crate::error::{Error, Result};
use crate::forest;
use crate::matrix::Matrix;
use crate::rng;
use crate::tree::TreeParams;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BiasVarianceReport {
    pub noise: f64,
    pub bias2: f64,
    pub variance: f64,
    pub total: f64,
    pub k_resamples: usize,
    pub m_bag: usize,
    pub n_eval: usize,
    pub total_se: f64,
    pub bias2_se: f64,
    pub variance_se: f64,
    /// `total − (noise + bias2 + variance)`.
    pub additivity_gap: f64,
    /// Monte-Carlo standard error of the gap, from per-resample terms.
    pub additivity_se: f64,
}

impl BiasVarianceReport {
    pub fn additivity_within(&self, n_se: f64) -> bool {
        self.additivity_gap.abs() < n_se * self.additivity_se
    }

    /// `(component, value, se)` rows for CSV output.
    pub fn rows(&self) -> Vec<(&'static str, f64, f64)> {
        vec![
            ("noise", self.noise, 0.0),
            ("bias2", self.bias2, self.bias2_se),
            ("variance", self.variance, self.variance_se),
            ("total", self.total, self.total_se),
            ("additivity_gap", self.additivity_gap, self.additivity_se),
        ]
    }
}

/// One bag size of the nested sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BagVarianceRow {
    pub m: usize,
    /// `data_term + seed_term`.
    pub total_variance: f64,
    /// Variance over data draws of the seed-averaged prediction.
    pub data_term: f64,
    pub data_term_se: f64,
    /// Expected variance over seeds for a fixed data draw.
    pub seed_term: f64,
    pub seed_term_se: f64,
    /// Grand mean prediction per evaluation point and its standard error.
    pub point_means: Vec<f64>,
    pub point_se: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BiasVarianceLab {
    pub spec: SyntheticLoadSpec,
    pub train_hours: usize,
    pub n_eval: usize,
}

impl Default for BiasVarianceLab {
    fn default() -> Self {
        Self {
            spec: SyntheticLoadSpec::default(),
            train_hours: 24 * 28,
            n_eval: 64,
        }
    }
}

/// Model factory: `(x_train, y_train, x_eval, seed) -> predictions at x_eval`.
pub trait Factory: Fn(&Matrix, &[f64], &Matrix, u64) -> Result<Vec<f64>> + Sync {}
impl<F: Fn(&Matrix, &[f64], &Matrix, u64) -> Result<Vec<f64>> + Sync> Factory for F {}

pub struct Design {
    pub x_train: Matrix,
    pub mean_train: Vec<f64>,
    pub x_eval: Matrix,
    pub mean_eval: Vec<f64>,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// Standard error of the mean of `v`.
fn se(v: &[f64]) -> f64 {
    let n = v.len() as f64;
    if v.len() < 2 {
        return 0.0;
    }
    let m = mean(v);
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0) / n).sqrt()
}

impl BiasVarianceLab {
    pub fn features(ts: NaiveDateTime) -> [f64; 3] {
        [
            ts.hour() as f64,
            ts.weekday().num_days_from_monday() as f64,
            if SyntheticLoadSpec::is_holiday(ts.date()) { 1.0 } else { 0.0 },
        ]
    }

    fn validate(&self) -> Result<()> {
        self.spec.validate()?;
        if self.train_hours == 0 || self.n_eval == 0 {
            return Err(Error::hyper("bias_variance", "train_hours and n_eval must be positive"));
        }
        if self.n_eval > self.train_hours {
            return Err(Error::hyper("n_eval", "cannot exceed train_hours"));
        }
        Ok(())
    }

    /// Fixed training grid and quasi-uniform evaluation points on it.
    pub fn design(&self) -> Result<Design> {
        self.validate()?;
        let ts: Vec<NaiveDateTime> = (0..self.train_hours).map(|i| self.spec.timestamp(i)).collect();
        let rows: Vec<[f64; 3]> = ts.iter().map(|&t| Self::features(t)).collect();
        let eval_idx: Vec<usize> = (0..self.n_eval)
            .map(|j| ((j as f64 + 0.5) * self.train_hours as f64 / self.n_eval as f64) as usize)
            .collect();
        Ok(Design {
            x_train: Matrix::from_rows(&rows)?,
            mean_train: ts.iter().map(|&t| self.spec.mean_at(t)).collect(),
            x_eval: Matrix::from_rows(&eval_idx.iter().map(|&i| rows[i]).collect::<Vec<_>>())?,
            mean_eval: eval_idx.iter().map(|&i| self.spec.mean_at(ts[i])).collect(),
        })
    }

    fn noisy(&self, mean: &[f64], seed: u64, name: &str) -> Result<Vec<f64>> {
        let normal = Normal::new(0.0, self.spec.noise).map_err(|e| Error::hyper("noise", e.to_string()))?;
        let mut r = rng::stream(rng::derive_named(seed, name));
        Ok(mean.iter().map(|m| m + normal.sample(&mut r)).collect())
    }

    /// Bias–variance decomposition for an arbitrary fit procedure.
    pub fn estimate(&self, factory: impl Factory, k: usize) -> Result<BiasVarianceReport> {
        self.estimate_bag(factory, k, 1)
    }

    /// As [`estimate`](Self::estimate), recording `m_bag` in the report.
    pub fn estimate_bag(&self, factory: impl Factory, k: usize, m_bag: usize) -> Result<BiasVarianceReport> {
        if k < 2 {
            return Err(Error::hyper("k", "at least two resamples are needed"));
        }
        let d = self.design()?;
        let draws: Vec<(Vec<f64>, Vec<f64>)> = (0..k)
            .into_par_iter()
            .map(|i| {
                let s = rng::derive(self.spec.seed, i as u64);
                let y = self.noisy(&d.mean_train, s, "train-noise")?;
                let pred = factory(&d.x_train, &y, &d.x_eval, rng::derive_named(s, "fit"))
                    .map_err(|e| Error::FactoryFailure { index: i, source: Box::new(e) })?;
                if pred.len() != d.x_eval.rows() {
                    return Err(Error::FactoryFailure {
                        index: i,
                        source: Box::new(Error::DimensionMismatch {
                            expected: d.x_eval.rows(),
                            actual: pred.len(),
                        }),
                    });
                }
                let test = self.noisy(&d.mean_eval, s, "test-noise")?;
                Ok((pred, test))
            })
            .collect::<Result<_>>()?;
        let n = d.x_eval.rows();
        let kf = k as f64;
        let sigma2 = self.spec.noise_variance();
        let fbar: Vec<f64> = (0..n).map(|j| draws.iter().map(|(p, _)| p[j]).sum::<f64>() / kf).collect();
        let bias2_pt: Vec<f64> = (0..n).map(|j| (d.mean_eval[j] - fbar[j]).powi(2)).collect();
        // Per-resample averages over evaluation points.
        let mut var_k = Vec::with_capacity(k);
        let mut tot_k = Vec::with_capacity(k);
        let mut gap_k = Vec::with_capacity(k);
        for (p, t) in &draws {
            let mut v = 0.0;
            let mut e = 0.0;
            let mut g = 0.0;
            for j in 0..n {
                let dev = (p[j] - fbar[j]).powi(2);
                let err = (t[j] - p[j]).powi(2);
                v += dev;
                e += err;
                g += err - (sigma2 + bias2_pt[j] + dev);
            }
            var_k.push(v / n as f64);
            tot_k.push(e / n as f64);
            gap_k.push(g / n as f64);
        }
        let variance = mean(&var_k);
        let bias2 = mean(&bias2_pt);
        let total = mean(&tot_k);
        // Delta-method SE of the squared bias: Var(f̄) = variance / K per point.
        let var_pt: Vec<f64> = (0..n)
            .map(|j| draws.iter().map(|(p, _)| (p[j] - fbar[j]).powi(2)).sum::<f64>() / kf)
            .collect();
        let bias2_se = ((0..n).map(|j| 4.0 * bias2_pt[j] * var_pt[j] / kf).sum::<f64>()).sqrt() / n as f64;
        Ok(BiasVarianceReport {
            noise: sigma2,
            bias2,
            variance,
            total,
            k_resamples: k,
            m_bag,
            n_eval: n,
            total_se: se(&tot_k),
            bias2_se,
            variance_se: se(&var_k),
            additivity_gap: total - (sigma2 + bias2 + variance),
            additivity_se: se(&gap_k),
        })
    }

    /// Nested resampling for bags of ExtraTrees: `outer` data draws, each with
    /// `inner` independently seeded bags of every size in `bag_sizes`.
    ///
    /// The data draws are shared across bag sizes.
    pub fn bag_variance_sweep(
        &self,
        bag_sizes: &[usize],
        outer: usize,
        inner: usize,
        tree: &TreeParams,
    ) -> Result<Vec<BagVarianceRow>> {
        if outer < 2 || inner < 2 {
            return Err(Error::hyper("resamples", "outer and inner counts must be at least 2"));
        }
        if bag_sizes.contains(&0) {
            return Err(Error::hyper("bag_sizes", "every bag size must be at least 1"));
        }
        let d = self.design()?;
        let n = d.x_eval.rows();
        let ys: Vec<Vec<f64>> = (0..outer)
            .map(|o| self.noisy(&d.mean_train, rng::derive(self.spec.seed, o as u64), "train-noise"))
            .collect::<Result<_>>()?;
        let mut rows = Vec::with_capacity(bag_sizes.len());
        for &m in bag_sizes {
            // preds[o][r][j]
            let preds: Vec<Vec<Vec<f64>>> = (0..outer)
                .into_par_iter()
                .map(|o| {
                    (0..inner)
                        .map(|r| {
                            let s = rng::derive_named(
                                rng::derive(rng::derive(self.spec.seed, o as u64), r as u64),
                                &format!("bag-{m}"),
                            );
                            let f = forest::fit_extratrees(&d.x_train, &ys[o], m, tree, s)
                                .map_err(|e| Error::FactoryFailure { index: o, source: Box::new(e) })?;
                            Ok(f.predict_matrix(&d.x_eval))
                        })
                        .collect::<Result<Vec<_>>>()
                })
                .collect::<Result<_>>()?;
            let rf = inner as f64;
            // Per data draw: seed-averaged prediction and unbiased seed variance.
            let mu: Vec<Vec<f64>> = preds
                .iter()
                .map(|pr| (0..n).map(|j| pr.iter().map(|p| p[j]).sum::<f64>() / rf).collect())
                .collect();
            let s2: Vec<Vec<f64>> = preds
                .iter()
                .zip(&mu)
                .map(|(pr, m)| {
                    (0..n)
                        .map(|j| pr.iter().map(|p| (p[j] - m[j]).powi(2)).sum::<f64>() / (rf - 1.0))
                        .collect()
                })
                .collect();
            let of = outer as f64;
            let grand: Vec<f64> = (0..n).map(|j| mu.iter().map(|m| m[j]).sum::<f64>() / of).collect();
            let seed_o: Vec<f64> = s2.iter().map(|s| mean(s)).collect();
            // Var_D of the seed mean, minus the inner-sampling share s²/R.
            let data_o: Vec<f64> = mu
                .iter()
                .zip(&seed_o)
                .map(|(m, s)| {
                    (0..n).map(|j| (m[j] - grand[j]).powi(2)).sum::<f64>() / n as f64 * of / (of - 1.0) - s / rf
                })
                .collect();
            let seed_term = mean(&seed_o);
            let data_term = mean(&data_o);
            let point_se: Vec<f64> = (0..n)
                .map(|j| se(&mu.iter().map(|m| m[j]).collect::<Vec<_>>()))
                .collect();
            rows.push(BagVarianceRow {
                m,
                total_variance: data_term + seed_term,
                data_term,
                data_term_se: se(&data_o),
                seed_term,
                seed_term_se: se(&seed_o),
                point_means: grand,
                point_se,
            });
        }
        Ok(rows)
    }
}
