//! Stacked LSTM with a fully connected head, trained by BPTT and Adam.
//!
//! Per timestep the input is the scaled load `v_t` followed by the calendar
//! one-hots of hour `t + 24`, so the last 24 input steps describe the day
//! being forecast. The top layer's final hidden state feeds a `tanh` hidden
//! layer and a linear output of width 24. Loss is the MSE on scaled targets.
//!
//! All parameters live in one flat vector; [`TensorSpec`] records the name,
//! shape and offset of each tensor. Gate order inside a layer is
//! input, forget, cell, output.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_window, ensure_finite, Forecaster};
use crate::data::{InputFeatures, NormalizerState, SupervisedWindowSet, WindowSample, HORIZON, LOOKBACK};
use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub layers: usize,
    pub hidden: usize,
    pub fc_hidden: usize,
    pub epochs_phase1: usize,
    pub epochs_phase2: usize,
    pub lr_phase1: f64,
    pub lr_phase2: f64,
    pub batch_size: usize,
    pub features: InputFeatures,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            layers: 2,
            hidden: 32,
            fc_hidden: 32,
            epochs_phase1: 30,
            epochs_phase2: 30,
            lr_phase1: 1e-3,
            lr_phase2: 1e-4,
            batch_size: 16,
            features: InputFeatures {
                weekday: true,
                holiday: true,
                hour: false,
            },
            seed: 0,
        }
    }
}

impl LstmConfig {
    /// Two layers of 128 units, 100 + 130 epochs.
    pub fn full_scale() -> Self {
        Self {
            hidden: 128,
            fc_hidden: 128,
            epochs_phase1: 100,
            epochs_phase2: 130,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("layers", self.layers),
            ("hidden", self.hidden),
            ("fc_hidden", self.fc_hidden),
            ("batch_size", self.batch_size),
        ] {
            if v == 0 {
                return Err(Error::hyper(name, "must be at least 1"));
            }
        }
        for (name, v) in [("lr_phase1", self.lr_phase1), ("lr_phase2", self.lr_phase2)] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::hyper(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }

    pub fn input_dim(&self) -> usize {
        1 + self.features.width()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorSpec {
    pub name: String,
    pub shape: Vec<usize>,
    pub offset: usize,
}

impl TensorSpec {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// The bare network: shapes plus a flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmNet {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    pub fc_hidden: usize,
    pub output_dim: usize,
    pub tensors: Vec<TensorSpec>,
    pub params: Vec<f64>,
}

/// `C = A·B + beta·C` with optional transposes, row-major storage.
#[allow(clippy::too_many_arguments)]
fn gemm(m: usize, k: usize, n: usize, a: &[f64], ta: bool, b: &[f64], tb: bool, beta: f64, c: &mut [f64]) {
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        for v in c.iter_mut() {
            *v *= beta;
        }
        return;
    }
    let (rsa, csa) = if ta { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if tb { (1, k as isize) } else { (n as isize, 1) };
    debug_assert!(a.len() >= m * k && b.len() >= k * n && c.len() >= m * n);
    // SAFETY: bounds checked above; strides describe the stated layouts.
    unsafe {
        matrixmultiply::dgemm(
            m, k, n, 1.0,
            a.as_ptr(), rsa, csa,
            b.as_ptr(), rsb, csb,
            beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

#[inline]
fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

struct LayerCache {
    /// `(T+1)·B·H`, slot 0 is the zero initial state.
    h: Vec<f64>,
    c: Vec<f64>,
    /// `T·B·4H` activated gates.
    gates: Vec<f64>,
    /// `T·B·H` of `tanh(c_t)`.
    tc: Vec<f64>,
}

struct Cache {
    layers: Vec<LayerCache>,
    z: Vec<f64>,
    out: Vec<f64>,
}

impl LstmNet {
    pub fn new(input_dim: usize, hidden: usize, layers: usize, fc_hidden: usize, output_dim: usize) -> Self {
        let mut tensors = Vec::new();
        let mut offset = 0;
        let mut push = |name: String, shape: Vec<usize>| {
            let t = TensorSpec { name, shape, offset };
            offset += t.len();
            tensors.push(t);
        };
        for l in 0..layers {
            let in_l = if l == 0 { input_dim } else { hidden };
            push(format!("lstm{l}.wx"), vec![in_l, 4 * hidden]);
            push(format!("lstm{l}.wh"), vec![hidden, 4 * hidden]);
            push(format!("lstm{l}.b"), vec![4 * hidden]);
        }
        push("fc.w".into(), vec![hidden, fc_hidden]);
        push("fc.b".into(), vec![fc_hidden]);
        push("out.w".into(), vec![fc_hidden, output_dim]);
        push("out.b".into(), vec![output_dim]);
        Self {
            input_dim,
            hidden,
            layers,
            fc_hidden,
            output_dim,
            params: vec![0.0; offset],
            tensors,
        }
    }

    /// Weights uniform in `±1/√fan_in`, biases zero except the forget gate at 1.
    pub fn init_random(&mut self, seed: u64) {
        let mut r = rng::stream(seed);
        let h = self.hidden;
        for t in self.tensors.clone() {
            let slice = &mut self.params[t.range()];
            if t.shape.len() == 2 {
                let bound = 1.0 / (t.shape[0] as f64).sqrt();
                for v in slice.iter_mut() {
                    *v = r.random_range(-bound..=bound);
                }
            } else if t.name.ends_with(".b") && t.name.starts_with("lstm") {
                slice.fill(0.0);
                slice[h..2 * h].fill(1.0);
            } else {
                slice.fill(0.0);
            }
        }
    }

    pub fn n_params(&self) -> usize {
        self.params.len()
    }

    fn t(&self, name: &str) -> &TensorSpec {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .expect("tensor names are fixed at construction")
    }

    fn p(&self, name: &str) -> &[f64] {
        &self.params[self.t(name).range()]
    }

    /// `xs` is time-major: `T × B × input_dim`.
    fn forward(&self, xs: &[f64], b: usize, steps: usize) -> Cache {
        let hd = self.hidden;
        let g4 = 4 * hd;
        let mut layers: Vec<LayerCache> = Vec::with_capacity(self.layers);
        for l in 0..self.layers {
            let (input, in_dim): (&[f64], usize) = if l == 0 {
                (xs, self.input_dim)
            } else {
                (&layers[l - 1].h[b * hd..], hd)
            };
            let wx = self.p(&format!("lstm{l}.wx"));
            let wh = self.p(&format!("lstm{l}.wh"));
            let bias = self.p(&format!("lstm{l}.b"));
            let mut pre = vec![0.0; steps * b * g4];
            gemm(steps * b, in_dim, g4, input, false, wx, false, 0.0, &mut pre);
            let mut h = vec![0.0; (steps + 1) * b * hd];
            let mut c = vec![0.0; (steps + 1) * b * hd];
            let mut tc = vec![0.0; steps * b * hd];
            for t in 0..steps {
                let a = &mut pre[t * b * g4..(t + 1) * b * g4];
                gemm(b, hd, g4, &h[t * b * hd..(t + 1) * b * hd], false, wh, false, 1.0, a);
                for s in 0..b {
                    let row = &mut a[s * g4..(s + 1) * g4];
                    for (v, bb) in row.iter_mut().zip(bias) {
                        *v += bb;
                    }
                    for j in 0..hd {
                        row[j] = sigmoid(row[j]);
                        row[hd + j] = sigmoid(row[hd + j]);
                        row[2 * hd + j] = row[2 * hd + j].tanh();
                        row[3 * hd + j] = sigmoid(row[3 * hd + j]);
                    }
                    let base_prev = t * b * hd + s * hd;
                    let base = (t + 1) * b * hd + s * hd;
                    for j in 0..hd {
                        let cv = row[hd + j] * c[base_prev + j] + row[j] * row[2 * hd + j];
                        c[base + j] = cv;
                        let th = cv.tanh();
                        tc[t * b * hd + s * hd + j] = th;
                        h[base + j] = row[3 * hd + j] * th;
                    }
                }
            }
            layers.push(LayerCache { h, c, gates: pre, tc });
        }
        let top = &layers[self.layers - 1].h[steps * b * hd..(steps + 1) * b * hd];
        let f = self.fc_hidden;
        let mut z = vec![0.0; b * f];
        gemm(b, hd, f, top, false, self.p("fc.w"), false, 0.0, &mut z);
        let fb = self.p("fc.b");
        for row in z.chunks_mut(f) {
            for (v, bb) in row.iter_mut().zip(fb) {
                *v = (*v + bb).tanh();
            }
        }
        let o = self.output_dim;
        let mut out = vec![0.0; b * o];
        gemm(b, f, o, &z, false, self.p("out.w"), false, 0.0, &mut out);
        let ob = self.p("out.b");
        for row in out.chunks_mut(o) {
            for (v, bb) in row.iter_mut().zip(ob) {
                *v += bb;
            }
        }
        Cache { layers, z, out }
    }

    /// `B × output_dim` predictions for a time-major batch.
    pub fn predict_batch(&self, xs: &[f64], b: usize, steps: usize) -> Vec<f64> {
        self.forward(xs, b, steps).out
    }

    /// Mean squared error over all `B × output_dim` entries and its gradient.
    pub fn loss_and_grad(&self, xs: &[f64], ys: &[f64], b: usize, steps: usize) -> (f64, Vec<f64>) {
        let cache = self.forward(xs, b, steps);
        let o = self.output_dim;
        let f = self.fc_hidden;
        let hd = self.hidden;
        let g4 = 4 * hd;
        let scale = 1.0 / (b * o) as f64;
        let mut loss = 0.0;
        let mut dout = vec![0.0; b * o];
        for ((d, p), y) in dout.iter_mut().zip(&cache.out).zip(ys) {
            let e = p - y;
            loss += e * e;
            *d = 2.0 * e * scale;
        }
        loss *= scale;
        let mut grad = vec![0.0; self.params.len()];
        let off = |name: &str| self.t(name).range();

        // Output and hidden dense layers.
        gemm(f, b, o, &cache.z, true, &dout, false, 0.0, &mut grad[off("out.w")]);
        for row in dout.chunks(o) {
            for (g, d) in grad[off("out.b")].iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut dz = vec![0.0; b * f];
        gemm(b, o, f, &dout, false, self.p("out.w"), true, 0.0, &mut dz);
        for (d, z) in dz.iter_mut().zip(&cache.z) {
            *d *= 1.0 - z * z;
        }
        let top = &cache.layers[self.layers - 1].h[steps * b * hd..];
        gemm(hd, b, f, top, true, &dz, false, 0.0, &mut grad[off("fc.w")]);
        for row in dz.chunks(f) {
            for (g, d) in grad[off("fc.b")].iter_mut().zip(row) {
                *g += d;
            }
        }
        // Gradient flowing into each layer's hidden states from above.
        let mut dh_above = vec![0.0; steps * b * hd];
        gemm(b, f, hd, &dz, false, self.p("fc.w"), true, 0.0, &mut dh_above[(steps - 1) * b * hd..]);

        for l in (0..self.layers).rev() {
            let lc = &cache.layers[l];
            let in_dim = if l == 0 { self.input_dim } else { hd };
            let wx = self.p(&format!("lstm{l}.wx"));
            let wh = self.p(&format!("lstm{l}.wh"));
            let mut da = vec![0.0; steps * b * g4];
            let mut dh_next = vec![0.0; b * hd];
            let mut dc_next = vec![0.0; b * hd];
            for t in (0..steps).rev() {
                let gates = &lc.gates[t * b * g4..(t + 1) * b * g4];
                let dat = &mut da[t * b * g4..(t + 1) * b * g4];
                for s in 0..b {
                    let gr = &gates[s * g4..(s + 1) * g4];
                    let dr = &mut dat[s * g4..(s + 1) * g4];
                    for j in 0..hd {
                        let k = s * hd + j;
                        let dh = dh_above[t * b * hd + k] + dh_next[k];
                        let (ig, fg, gg, og) = (gr[j], gr[hd + j], gr[2 * hd + j], gr[3 * hd + j]);
                        let th = lc.tc[t * b * hd + k];
                        let dc = dc_next[k] + dh * og * (1.0 - th * th);
                        let c_prev = lc.c[t * b * hd + k];
                        dr[j] = dc * gg * ig * (1.0 - ig);
                        dr[hd + j] = dc * c_prev * fg * (1.0 - fg);
                        dr[2 * hd + j] = dc * ig * (1.0 - gg * gg);
                        dr[3 * hd + j] = dh * th * og * (1.0 - og);
                        dc_next[k] = dc * fg;
                    }
                }
                gemm(b, g4, hd, dat, false, wh, true, 0.0, &mut dh_next);
            }
            let input: &[f64] = if l == 0 { xs } else { &cache.layers[l - 1].h[b * hd..] };
            gemm(in_dim, steps * b, g4, input, true, &da, false, 0.0, &mut grad[off(&format!("lstm{l}.wx"))]);
            gemm(hd, steps * b, g4, &lc.h[..steps * b * hd], true, &da, false, 0.0, &mut grad[off(&format!("lstm{l}.wh"))]);
            let gb = off(&format!("lstm{l}.b"));
            for row in da.chunks(g4) {
                for (g, d) in grad[gb.clone()].iter_mut().zip(row) {
                    *g += d;
                }
            }
            if l > 0 {
                gemm(steps * b, g4, hd, &da, false, wx, true, 0.0, &mut dh_above);
            }
        }
        (loss, grad)
    }
}

/// Adam state over a flat parameter vector.
#[derive(Debug, Clone)]
struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
    t: i32,
}

impl Adam {
    const B1: f64 = 0.9;
    const B2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn new(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
            t: 0,
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::B1.powi(self.t);
        let c2 = 1.0 - Self::B2.powi(self.t);
        for i in 0..params.len() {
            self.m[i] = Self::B1 * self.m[i] + (1.0 - Self::B1) * grad[i];
            self.v[i] = Self::B2 * self.v[i] + (1.0 - Self::B2) * grad[i] * grad[i];
            let mh = self.m[i] / c1;
            let vh = self.v[i] / c2;
            params[i] -= lr * mh / (vh.sqrt() + Self::EPS);
        }
    }
}

/// Per-timestep inputs for one window: `T × input_dim`, row-major.
pub fn sequence_inputs(window: &WindowSample, norm: &NormalizerState, features: InputFeatures) -> Vec<f64> {
    let mut out = Vec::with_capacity(window.input.len() * (1 + features.width()));
    for (t, &v) in window.input.iter().enumerate() {
        out.push(norm.normalize(v));
        window.shifted_calendar(t).encode_into(features, &mut out);
    }
    out
}

/// Rearranges per-sample `T × D` sequences into one time-major `T × B × D` block.
fn time_major(seqs: &[&[f64]], steps: usize, dim: usize) -> Vec<f64> {
    let b = seqs.len();
    let mut out = vec![0.0; steps * b * dim];
    for (s, seq) in seqs.iter().enumerate() {
        for t in 0..steps {
            out[(t * b + s) * dim..(t * b + s + 1) * dim].copy_from_slice(&seq[t * dim..(t + 1) * dim]);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub config: LstmConfig,
    pub net: LstmNet,
    pub normalizer: NormalizerState,
    /// Mean training loss per epoch.
    pub epoch_loss: Vec<f64>,
}

impl LstmModel {
    pub fn fit(train: &SupervisedWindowSet, config: &LstmConfig) -> Result<Self> {
        config.validate()?;
        if train.is_empty() {
            return Err(Error::EmptyInput("LSTM training windows".into()));
        }
        let d = config.input_dim();
        let steps = train.lookback;
        let seqs: Vec<Vec<f64>> = train
            .samples
            .iter()
            .map(|w| sequence_inputs(w, &train.normalizer, config.features))
            .collect();
        let targets: Vec<Vec<f64>> = (0..train.len()).map(|i| train.normalized_target(i)).collect();
        let mut net = LstmNet::new(d, config.hidden, config.layers, config.fc_hidden, train.horizon);
        net.init_random(rng::derive_named(config.seed, "lstm-init"));
        let mut adam = Adam::new(net.n_params());
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut shuffle = rng::stream(rng::derive_named(config.seed, "lstm-shuffle"));
        let total = config.epochs_phase1 + config.epochs_phase2;
        let mut epoch_loss = Vec::with_capacity(total);
        for epoch in 0..total {
            let lr = if epoch < config.epochs_phase1 {
                config.lr_phase1
            } else {
                config.lr_phase2
            };
            order.shuffle(&mut shuffle);
            let mut acc = 0.0;
            for (batch, chunk) in order.chunks(config.batch_size).enumerate() {
                let xs = time_major(&chunk.iter().map(|&i| seqs[i].as_slice()).collect::<Vec<_>>(), steps, d);
                let ys: Vec<f64> = chunk.iter().flat_map(|&i| targets[i].iter().copied()).collect();
                let (loss, grad) = net.loss_and_grad(&xs, &ys, chunk.len(), steps);
                if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                    return Err(Error::NonFiniteLoss { epoch, batch });
                }
                adam.step(&mut net.params, &grad, lr);
                acc += loss * chunk.len() as f64;
            }
            epoch_loss.push(acc / train.len() as f64);
        }
        Ok(Self {
            config: config.clone(),
            net,
            normalizer: train.normalizer,
            epoch_loss,
        })
    }

    fn predict_windows(&self, windows: &[&WindowSample]) -> Result<Vec<Vec<f64>>> {
        let d = self.net.input_dim;
        let seqs: Vec<Vec<f64>> = windows
            .iter()
            .map(|w| {
                check_window(w, LOOKBACK)?;
                Ok(sequence_inputs(w, &self.normalizer, self.config.features))
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&[f64]> = seqs.iter().map(|s| s.as_slice()).collect();
        let xs = time_major(&refs, LOOKBACK, d);
        let out = self.net.predict_batch(&xs, windows.len(), LOOKBACK);
        let o = self.net.output_dim;
        let rows: Vec<Vec<f64>> = out
            .chunks(o)
            .map(|r| r.iter().map(|&u| self.normalizer.denormalize(u)).collect())
            .collect();
        for r in &rows {
            ensure_finite("LSTM", r)?;
        }
        Ok(rows)
    }
}

impl Forecaster for LstmModel {
    fn name(&self) -> &'static str {
        "LSTM"
    }

    fn predict(&self, window: &WindowSample) -> Result<Vec<f64>> {
        let mut rows = self.predict_windows(&[window])?;
        debug_assert_eq!(rows[0].len(), HORIZON);
        Ok(rows.remove(0))
    }

    fn predict_many(&self, windows: &[WindowSample]) -> Result<crate::matrix::Matrix> {
        let mut rows = Vec::with_capacity(windows.len());
        for chunk in windows.chunks(64) {
            let refs: Vec<&WindowSample> = chunk.iter().collect();
            rows.extend(self.predict_windows(&refs)?);
        }
        if rows.is_empty() {
            return Ok(crate::matrix::Matrix::zeros(0, 0));
        }
        crate::matrix::Matrix::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_weights_output_the_bias() {
        let mut net = LstmNet::new(3, 4, 2, 5, 6);
        let ob = net.t("out.b").range();
        for (k, i) in ob.enumerate() {
            net.params[i] = k as f64 * 0.5;
        }
        let xs: Vec<f64> = (0..7 * 2 * 3).map(|i| i as f64 * 0.1).collect();
        let out = net.predict_batch(&xs, 2, 7);
        for row in out.chunks(6) {
            for (k, v) in row.iter().enumerate() {
                assert_eq!(*v, k as f64 * 0.5);
            }
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut net = LstmNet::new(2, 2, 2, 3, 2);
        net.init_random(5);
        let mut r = rng::stream(6);
        for p in &mut net.params {
            *p += r.random_range(-0.5..0.5);
        }
        let (b, steps) = (2, 3);
        let xs: Vec<f64> = (0..steps * b * 2).map(|_| r.random_range(-1.0..1.0)).collect();
        let ys: Vec<f64> = (0..b * 2).map(|_| r.random_range(-1.0..1.0)).collect();
        let (_, grad) = net.loss_and_grad(&xs, &ys, b, steps);
        let h = 1e-5;
        for i in 0..net.n_params() {
            let mut plus = net.clone();
            plus.params[i] += h;
            let mut minus = net.clone();
            minus.params[i] -= h;
            let fd = (plus.loss_and_grad(&xs, &ys, b, steps).0 - minus.loss_and_grad(&xs, &ys, b, steps).0) / (2.0 * h);
            let rel = (fd - grad[i]).abs() / fd.abs().max(grad[i].abs()).max(1e-6);
            assert!(rel < 1e-4, "param {i}: analytic {} vs fd {fd}", grad[i]);
        }
    }

    #[test]
    fn gates_stay_in_unit_interval() {
        let mut net = LstmNet::new(2, 3, 1, 2, 2);
        net.init_random(1);
        let xs: Vec<f64> = (0..5 * 4 * 2).map(|i| (i as f64 * 0.37).sin() * 10.0).collect();
        let cache = net.forward(&xs, 4, 5);
        let hd = 3;
        for row in cache.layers[0].gates.chunks(4 * hd) {
            for j in 0..hd {
                for g in [row[j], row[hd + j], row[3 * hd + j]] {
                    assert!((0.0..=1.0).contains(&g));
                }
            }
        }
    }
}
