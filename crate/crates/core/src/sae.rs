// SPDX-License-Identifier: MIT OR Apache-2.0

//! One-layer sparse autoencoder.
//!
//! Encoder `f = ReLU(W_e·(x − b_d) + b_e)` (the `− b_d` term is the optional
//! pre-encoder bias), decoder `x̂ = W_d·f + b_d`, and loss
//! `Σ_rows ‖x − x̂‖² + λ·Σ_j f_j^p` with `0 < p ≤ 1`.
//!
//! Training is full-batch Adam (optionally with decoupled weight decay) under
//! a linear learning-rate warmup. Row chunks are processed in parallel with a
//! fixed chunk size and an ordered reduction, so results do not depend on the
//! number of worker threads.

use std::fs;
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::npy;
use crate::numerics::{axpy, dot, norm, Matrix};
use crate::synth::{gaussian, seeded_rng};

/// Activations at or below this value count as inactive.
pub const ALIVE_THRESHOLD: f64 = 1e-6;

const CHUNK_ROWS: usize = 128;
const ADAM_BETA1: f64 = 0.9;
const ADAM_BETA2: f64 = 0.999;
const ADAM_EPS: f64 = 1e-8;

/// Weights of a one-layer sparse autoencoder with `m` dictionary elements
/// over `d`-dimensional inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeParams {
    /// m×d
    pub w_enc: Matrix,
    pub b_enc: Vec<f64>,
    /// d×m; columns are the dictionary elements.
    pub w_dec: Matrix,
    pub b_dec: Vec<f64>,
    pub use_pre_encoder_bias: bool,
}

impl SaeParams {
    /// Random unit-norm dictionary, tied encoder, zero biases.
    pub fn init(d: usize, m: usize, use_pre_encoder_bias: bool, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        let mut w_dec = Matrix::zeros(d, m);
        for j in 0..m {
            let mut col: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
            let n = norm(&col).max(f64::MIN_POSITIVE);
            col.iter_mut().for_each(|v| *v /= n);
            w_dec.set_column(j, &col);
        }
        Self {
            w_enc: w_dec.transpose(),
            b_enc: vec![0.0; m],
            w_dec,
            b_dec: vec![0.0; d],
            use_pre_encoder_bias,
        }
    }

    pub fn from_parts(
        w_enc: Matrix,
        b_enc: Vec<f64>,
        w_dec: Matrix,
        b_dec: Vec<f64>,
        use_pre_encoder_bias: bool,
    ) -> Result<Self> {
        let (m, d) = w_enc.shape();
        if w_dec.shape() != (d, m) || b_enc.len() != m || b_dec.len() != d {
            return Err(shape(format!(
                "inconsistent SAE shapes: W_e {:?}, b_e {}, W_d {:?}, b_d {}",
                w_enc.shape(),
                b_enc.len(),
                w_dec.shape(),
                b_dec.len()
            )));
        }
        let finite = w_enc.is_finite()
            && w_dec.is_finite()
            && b_enc.iter().chain(&b_dec).all(|v| v.is_finite());
        if !finite {
            return Err(invalid("SAE parameters contain non-finite values"));
        }
        Ok(Self {
            w_enc,
            b_enc,
            w_dec,
            b_dec,
            use_pre_encoder_bias,
        })
    }

    /// Number of dictionary elements.
    pub fn m(&self) -> usize {
        self.w_enc.rows()
    }

    /// Input dimension.
    pub fn d(&self) -> usize {
        self.w_enc.cols()
    }

    pub fn dictionary(&self) -> &Matrix {
        &self.w_dec
    }

    fn pre_activation(&self, x: &[f64]) -> Vec<f64> {
        let shifted: Vec<f64>;
        let input = if self.use_pre_encoder_bias {
            shifted = x.iter().zip(&self.b_dec).map(|(a, b)| a - b).collect();
            &shifted
        } else {
            x
        };
        self.w_enc
            .row_iter()
            .zip(&self.b_enc)
            .map(|(w, b)| dot(w, input) + b)
            .collect()
    }

    pub fn encode(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d() {
            return Err(shape(format!(
                "encode: input has length {}, SAE expects {}",
                x.len(),
                self.d()
            )));
        }
        let mut f = self.pre_activation(x);
        f.iter_mut().for_each(|v| *v = v.max(0.0));
        Ok(f)
    }

    pub fn decode(&self, f: &[f64]) -> Result<Vec<f64>> {
        if f.len() != self.m() {
            return Err(shape(format!(
                "decode: code has length {}, SAE expects {}",
                f.len(),
                self.m()
            )));
        }
        let mut out = self.b_dec.clone();
        for (r, o) in out.iter_mut().enumerate() {
            *o += dot(self.w_dec.row(r), f);
        }
        Ok(out)
    }

    /// Encodes every row (n×m).
    pub fn encode_matrix(&self, x: &Matrix) -> Result<Matrix> {
        if x.cols() != self.d() {
            return Err(shape(format!(
                "encode: input has {} columns, SAE expects {}",
                x.cols(),
                self.d()
            )));
        }
        let m = self.m();
        let rows: Vec<Vec<f64>> = (0..x.rows())
            .into_par_iter()
            .map(|r| {
                let mut f = self.pre_activation(x.row(r));
                f.iter_mut().for_each(|v| *v = v.max(0.0));
                f
            })
            .collect();
        Matrix::from_vec(x.rows(), m, rows.concat())
    }

    /// Features whose maximum activation over `x` exceeds [`ALIVE_THRESHOLD`].
    pub fn alive_mask(&self, x: &Matrix) -> Result<Vec<bool>> {
        Ok(alive_from_activations(&self.encode_matrix(x)?))
    }

    pub fn save(&self, dir: &Path, meta: &SaeMeta) -> Result<()> {
        fs::create_dir_all(dir)?;
        npy::write_matrix_f64(&dir.join("W_e.npy"), &self.w_enc)?;
        npy::write_vector_f64(&dir.join("b_e.npy"), &self.b_enc)?;
        npy::write_matrix_f64(&dir.join("W_d.npy"), &self.w_dec)?;
        npy::write_vector_f64(&dir.join("b_d.npy"), &self.b_dec)?;
        let mut text = serde_json::to_string_pretty(meta)?;
        text.push('\n');
        fs::write(dir.join("meta.json"), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<(Self, SaeMeta)> {
        let meta: SaeMeta = serde_json::from_slice(&fs::read(dir.join("meta.json"))?)?;
        let params = Self::from_parts(
            npy::read_matrix(&dir.join("W_e.npy"))?,
            npy::read_vector(&dir.join("b_e.npy"))?,
            npy::read_matrix(&dir.join("W_d.npy"))?,
            npy::read_vector(&dir.join("b_d.npy"))?,
            meta.use_pre_encoder_bias,
        )?;
        if params.m() != meta.m || params.d() != meta.d {
            return Err(shape(format!(
                "meta.json declares m={}, d={} but weights are m={}, d={}",
                meta.m,
                meta.d,
                params.m(),
                params.d()
            )));
        }
        Ok((params, meta))
    }
}

/// Sidecar written next to persisted SAE weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaeMeta {
    pub m: usize,
    pub d: usize,
    pub use_pre_encoder_bias: bool,
    pub config: SaeTrainConfig,
    pub seed: u64,
    pub initial_loss: f64,
    pub final_loss: f64,
}

pub fn alive_from_activations(acts: &Matrix) -> Vec<bool> {
    let mut alive = vec![false; acts.cols()];
    for row in acts.row_iter() {
        for (a, &v) in alive.iter_mut().zip(row) {
            *a |= v > ALIVE_THRESHOLD;
        }
    }
    alive
}

/// Training hyperparameters. Defaults follow the toy circle experiments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SaeTrainConfig {
    pub lambda: f64,
    /// Sparsity exponent in (0, 1].
    pub p: f64,
    pub lr: f64,
    pub steps: usize,
    pub warmup_steps: usize,
    pub resample_times: usize,
    /// Rescale every input row to this norm before training.
    pub normalize_input_norm: Option<f64>,
    pub use_pre_encoder_bias: bool,
    /// Project decoder columns back to unit norm after every step.
    pub unit_norm_decoder: bool,
    /// Decoupled (AdamW-style) weight decay on the weight matrices.
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SaeTrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.1,
            p: 1.0,
            lr: 1e-3,
            steps: 20_000,
            warmup_steps: 1_000,
            resample_times: 0,
            normalize_input_norm: None,
            use_pre_encoder_bias: true,
            unit_norm_decoder: true,
            weight_decay: 0.0,
            seed: 0,
        }
    }
}

impl SaeTrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p > 0.0 && self.p <= 1.0) {
            return Err(invalid(format!(
                "sparsity exponent p must lie in (0, 1], got {}",
                self.p
            )));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(invalid(format!(
                "lambda must be finite and nonnegative, got {}",
                self.lambda
            )));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(invalid(format!(
                "learning rate must be positive, got {}",
                self.lr
            )));
        }
        if self.steps < self.warmup_steps {
            return Err(invalid(format!(
                "steps ({}) must be at least warmup_steps ({})",
                self.steps, self.warmup_steps
            )));
        }
        if let Some(t) = self.normalize_input_norm {
            if !(t > 0.0 && t.is_finite()) {
                return Err(invalid(format!(
                    "normalization target must be positive, got {t}"
                )));
            }
        }
        if !(self.weight_decay >= 0.0) {
            return Err(invalid("weight decay must be nonnegative"));
        }
        Ok(())
    }

    /// Steps (0-based, executed after the update of that step) at which dead
    /// features are resampled: evenly spaced strictly inside the run.
    pub fn resample_schedule(&self) -> Vec<usize> {
        (1..=self.resample_times)
            .map(|k| k * self.steps / (self.resample_times + 1))
            .filter(|&s| s > 0 && s < self.steps)
            .collect()
    }
}

/// Loss split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub sparsity: f64,
}

impl LossBreakdown {
    fn zero() -> Self {
        Self {
            total: 0.0,
            reconstruction: 0.0,
            sparsity: 0.0,
        }
    }

    fn accumulate(&mut self, other: &Self) {
        self.total += other.total;
        self.reconstruction += other.reconstruction;
        self.sparsity += other.sparsity;
    }
}

/// Gradient of the summed loss with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SaeGradient {
    pub w_enc: Matrix,
    pub b_enc: Vec<f64>,
    pub w_dec: Matrix,
    pub b_dec: Vec<f64>,
}

impl SaeGradient {
    fn zeros(d: usize, m: usize) -> Self {
        Self {
            w_enc: Matrix::zeros(m, d),
            b_enc: vec![0.0; m],
            w_dec: Matrix::zeros(d, m),
            b_dec: vec![0.0; d],
        }
    }

    fn accumulate(&mut self, other: &Self) {
        add_into(self.w_enc.as_mut_slice(), other.w_enc.as_slice());
        add_into(&mut self.b_enc, &other.b_enc);
        add_into(self.w_dec.as_mut_slice(), other.w_dec.as_slice());
        add_into(&mut self.b_dec, &other.b_dec);
    }
}

fn add_into(acc: &mut [f64], x: &[f64]) {
    for (a, b) in acc.iter_mut().zip(x) {
        *a += b;
    }
}

fn sparsity_penalty(f: f64, p: f64) -> f64 {
    if f <= 0.0 {
        0.0
    } else if p == 1.0 {
        f
    } else {
        f.powf(p)
    }
}

/// Derivative of `f^p`; for p < 1 it is only evaluated above the alive threshold.
fn sparsity_slope(f: f64, p: f64) -> f64 {
    if p == 1.0 {
        if f > 0.0 {
            1.0
        } else {
            0.0
        }
    } else if f > ALIVE_THRESHOLD {
        p * f.powf(p - 1.0)
    } else {
        0.0
    }
}

/// Summed loss over all rows of `x`.
pub fn sae_loss(params: &SaeParams, x: &Matrix, lambda: f64, p: f64) -> Result<LossBreakdown> {
    Ok(loss_and_gradient_impl(params, x, lambda, p, false)?.0)
}

/// Summed loss and its analytic gradient.
pub fn loss_and_gradient(
    params: &SaeParams,
    x: &Matrix,
    lambda: f64,
    p: f64,
) -> Result<(LossBreakdown, SaeGradient)> {
    let (loss, grad) = loss_and_gradient_impl(params, x, lambda, p, true)?;
    Ok((loss, grad.expect("gradient requested")))
}

fn loss_and_gradient_impl(
    params: &SaeParams,
    x: &Matrix,
    lambda: f64,
    p: f64,
    want_grad: bool,
) -> Result<(LossBreakdown, Option<SaeGradient>)> {
    if !(p > 0.0 && p <= 1.0) {
        return Err(invalid(format!(
            "sparsity exponent p must lie in (0, 1], got {p}"
        )));
    }
    if x.cols() != params.d() {
        return Err(shape(format!(
            "loss: input has {} columns, SAE expects {}",
            x.cols(),
            params.d()
        )));
    }
    let (d, m) = (params.d(), params.m());
    // dictionary elements as contiguous rows
    let dec_t = params.w_dec.transpose();
    let n_chunks = x.rows().div_ceil(CHUNK_ROWS);
    let partials: Vec<(LossBreakdown, Option<SaeGradient>)> = (0..n_chunks)
        .into_par_iter()
        .map(|c| {
            let start = c * CHUNK_ROWS;
            let end = (start + CHUNK_ROWS).min(x.rows());
            let mut loss = LossBreakdown::zero();
            let mut grad = want_grad.then(|| SaeGradient::zeros(d, m));
            // decoder gradient accumulated transposed, one row per element
            let mut grad_dec_t = if want_grad {
                vec![0.0; m * d]
            } else {
                Vec::new()
            };
            let mut shifted = vec![0.0; d];
            let mut active: Vec<(usize, f64)> = Vec::with_capacity(m);
            let mut resid = vec![0.0; d];
            for r in start..end {
                let xr = x.row(r);
                for i in 0..d {
                    shifted[i] = if params.use_pre_encoder_bias {
                        xr[i] - params.b_dec[i]
                    } else {
                        xr[i]
                    };
                }
                active.clear();
                for j in 0..m {
                    let pre = dot(params.w_enc.row(j), &shifted) + params.b_enc[j];
                    if pre > 0.0 {
                        active.push((j, pre));
                    }
                }
                for i in 0..d {
                    resid[i] = params.b_dec[i] - xr[i];
                }
                let mut sparsity = 0.0;
                for &(j, fj) in &active {
                    axpy(fj, dec_t.row(j), &mut resid);
                    sparsity += sparsity_penalty(fj, p);
                }
                loss.reconstruction += dot(&resid, &resid);
                loss.sparsity += lambda * sparsity;

                if let Some(g) = grad.as_mut() {
                    // dL/dx̂ = 2·resid
                    for i in 0..d {
                        g.b_dec[i] += 2.0 * resid[i];
                    }
                    for &(j, fj) in &active {
                        let elem = dec_t.row(j);
                        axpy(2.0 * fj, &resid, &mut grad_dec_t[j * d..(j + 1) * d]);
                        let dpre = lambda * sparsity_slope(fj, p) + 2.0 * dot(elem, &resid);
                        if dpre == 0.0 {
                            continue;
                        }
                        g.b_enc[j] += dpre;
                        axpy(dpre, &shifted, g.w_enc.row_mut(j));
                        if params.use_pre_encoder_bias {
                            axpy(-dpre, params.w_enc.row(j), &mut g.b_dec);
                        }
                    }
                }
            }
            if let Some(g) = grad.as_mut() {
                g.w_dec = Matrix::from_vec(m, d, grad_dec_t)
                    .expect("sized above")
                    .transpose();
            }
            loss.total = loss.reconstruction + loss.sparsity;
            (loss, grad)
        })
        .collect();

    let mut loss = LossBreakdown::zero();
    let mut grad = want_grad.then(|| SaeGradient::zeros(d, m));
    for (l, g) in &partials {
        loss.accumulate(l);
        if let (Some(acc), Some(g)) = (grad.as_mut(), g.as_ref()) {
            acc.accumulate(g);
        }
    }
    Ok((loss, grad))
}

/// Rescales every nonzero row to `target` norm.
pub fn normalize_rows(x: &Matrix, target: f64) -> Matrix {
    let mut out = x.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = norm(row);
        if n > 0.0 {
            let s = target / n;
            row.iter_mut().for_each(|v| *v *= s);
        }
    }
    out
}

/// Features with no activation above threshold anywhere in the window.
pub fn dead_features(window_activations: &Matrix) -> Vec<usize> {
    alive_from_activations(window_activations)
        .iter()
        .enumerate()
        .filter_map(|(j, &a)| (!a).then_some(j))
        .collect()
}

/// Reinitializes dead features toward the inputs the SAE reconstructs worst.
///
/// Dead feature `k` (in index order) is pointed at the `k`-th worst input
/// (cycling if there are more dead features than inputs): its decoder column
/// becomes the unit direction of that input (after the pre-encoder shift), its
/// encoder row the same direction scaled to 0.2× the mean alive encoder norm,
/// and its encoder bias zero. Alive features are untouched.
pub fn resample_dead_features(
    params: &SaeParams,
    x: &Matrix,
    window_activations: &Matrix,
) -> Result<SaeParams> {
    Ok(resample_impl(params, x, window_activations)?.0)
}

fn resample_impl(
    params: &SaeParams,
    x: &Matrix,
    window_activations: &Matrix,
) -> Result<(SaeParams, Vec<usize>)> {
    if window_activations.cols() != params.m() {
        return Err(shape(format!(
            "window activations have {} features, SAE has {}",
            window_activations.cols(),
            params.m()
        )));
    }
    if x.cols() != params.d() {
        return Err(shape(format!(
            "input has {} columns, SAE expects {}",
            x.cols(),
            params.d()
        )));
    }
    let dead = dead_features(window_activations);
    if dead.is_empty() || x.rows() == 0 {
        return Ok((params.clone(), Vec::new()));
    }

    let shift = |row: &[f64]| -> Vec<f64> {
        if params.use_pre_encoder_bias {
            row.iter().zip(&params.b_dec).map(|(a, b)| a - b).collect()
        } else {
            row.to_vec()
        }
    };
    // rank inputs by reconstruction error, worst first; only usable directions
    let mut candidates: Vec<(f64, usize)> = (0..x.rows())
        .filter(|&r| norm(&shift(x.row(r))) > 0.0)
        .map(|r| {
            let row = x.row(r);
            let f = params.encode(row).expect("shape checked");
            let xhat = params.decode(&f).expect("shape checked");
            let err: f64 = row.iter().zip(&xhat).map(|(a, b)| (a - b) * (a - b)).sum();
            (err, r)
        })
        .collect();
    if candidates.is_empty() {
        return Ok((params.clone(), Vec::new()));
    }
    candidates.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));

    let alive_norms: Vec<f64> = (0..params.m())
        .filter(|j| !dead.contains(j))
        .map(|j| norm(params.w_enc.row(j)))
        .collect();
    let enc_scale = if alive_norms.is_empty() {
        1.0
    } else {
        0.2 * alive_norms.iter().sum::<f64>() / alive_norms.len() as f64
    };
    let enc_scale = if enc_scale > 0.0 { enc_scale } else { 1.0 };

    let mut out = params.clone();
    for (k, &j) in dead.iter().enumerate() {
        let (_, r) = candidates[k % candidates.len()];
        let dir = shift(x.row(r));
        let n = norm(&dir);
        let unit: Vec<f64> = dir.iter().map(|v| v / n).collect();
        out.w_dec.set_column(j, &unit);
        out.w_enc
            .row_mut(j)
            .iter_mut()
            .zip(&unit)
            .for_each(|(w, u)| *w = enc_scale * u);
        out.b_enc[j] = 0.0;
    }
    Ok((out, dead))
}

/// A trained SAE together with its optimization trace.
#[derive(Debug, Clone)]
pub struct TrainedSae {
    pub params: SaeParams,
    /// Mean per-row loss before the first update.
    pub initial_loss: f64,
    /// Mean per-row loss after the last update.
    pub final_loss: f64,
    /// `(step, mean loss)` samples.
    pub history: Vec<(usize, f64)>,
    /// `(step, feature indices)` for every resampling event that changed something.
    pub resampled: Vec<(usize, Vec<usize>)>,
}

impl TrainedSae {
    pub fn meta(&self, cfg: &SaeTrainConfig) -> SaeMeta {
        SaeMeta {
            m: self.params.m(),
            d: self.params.d(),
            use_pre_encoder_bias: self.params.use_pre_encoder_bias,
            config: cfg.clone(),
            seed: cfg.seed,
            initial_loss: self.initial_loss,
            final_loss: self.final_loss,
        }
    }
}

struct Adam {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Adam {
    fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
        }
    }

    fn step(&mut self, params: &mut [f64], grad: &[f64], lr: f64, t: usize, decay: f64) {
        let bc1 = 1.0 - ADAM_BETA1.powi(t as i32);
        let bc2 = 1.0 - ADAM_BETA2.powi(t as i32);
        for ((p, g), (m, v)) in params
            .iter_mut()
            .zip(grad)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            *m = ADAM_BETA1 * *m + (1.0 - ADAM_BETA1) * g;
            *v = ADAM_BETA2 * *v + (1.0 - ADAM_BETA2) * g * g;
            let mhat = *m / bc1;
            let vhat = *v / bc2;
            if decay > 0.0 {
                *p -= lr * decay * *p;
            }
            *p -= lr * mhat / (vhat.sqrt() + ADAM_EPS);
        }
    }

    /// Clears the moments of the listed rows of a row-major block.
    fn reset_rows(&mut self, width: usize, rows: &[usize]) {
        for &r in rows {
            self.m[r * width..(r + 1) * width].fill(0.0);
            self.v[r * width..(r + 1) * width].fill(0.0);
        }
    }

    /// Clears the moments of the listed columns of a row-major block.
    fn reset_columns(&mut self, width: usize, cols: &[usize]) {
        for &c in cols {
            for idx in (c..self.m.len()).step_by(width) {
                self.m[idx] = 0.0;
                self.v[idx] = 0.0;
            }
        }
    }
}

/// Drops the part of each decoder-column gradient that would change the column's norm.
fn remove_parallel_component(w_dec: &Matrix, grad: &mut Matrix) {
    for j in 0..w_dec.cols() {
        let col = w_dec.column(j);
        let sq = dot(&col, &col);
        if sq > 0.0 {
            let g = grad.column(j);
            let coef = dot(&g, &col) / sq;
            let projected: Vec<f64> = g.iter().zip(&col).map(|(gi, ci)| gi - coef * ci).collect();
            grad.set_column(j, &projected);
        }
    }
}

fn project_unit_columns(w_dec: &mut Matrix) {
    for j in 0..w_dec.cols() {
        let col = w_dec.column(j);
        let n = norm(&col);
        if n > 0.0 {
            let unit: Vec<f64> = col.iter().map(|v| v / n).collect();
            w_dec.set_column(j, &unit);
        }
    }
}

/// Trains an SAE with `m` dictionary elements on the rows of `x`.
pub fn train_sae(x: &Matrix, m: usize, cfg: &SaeTrainConfig) -> Result<TrainedSae> {
    cfg.validate()?;
    if m == 0 {
        return Err(invalid("SAE needs at least one dictionary element"));
    }
    if x.rows() == 0 || x.cols() == 0 {
        return Err(invalid("training data is empty"));
    }
    if !x.is_finite() {
        return Err(invalid("training data contains non-finite values"));
    }
    let data = match cfg.normalize_input_norm {
        Some(t) => normalize_rows(x, t),
        None => x.clone(),
    };
    let (n, d) = data.shape();
    let inv_n = 1.0 / n as f64;

    let mut params = SaeParams::init(d, m, cfg.use_pre_encoder_bias, cfg.seed);
    let mut opt_w_enc = Adam::new(m * d);
    let mut opt_b_enc = Adam::new(m);
    let mut opt_w_dec = Adam::new(d * m);
    let mut opt_b_dec = Adam::new(d);
    let schedule = cfg.resample_schedule();

    let mut history = Vec::new();
    let mut resampled = Vec::new();
    let mut initial_loss = f64::NAN;
    let log_every = (cfg.steps / 200).max(1);

    for step in 0..cfg.steps {
        let (loss, grad) = loss_and_gradient(&params, &data, cfg.lambda, cfg.p)?;
        let mean_loss = loss.total * inv_n;
        if !mean_loss.is_finite() {
            return Err(Error::NonFinite { step });
        }
        if step == 0 {
            initial_loss = mean_loss;
        }
        if step % log_every == 0 {
            history.push((step, mean_loss));
        }
        let scale = |v: &[f64]| -> Vec<f64> { v.iter().map(|g| g * inv_n).collect() };
        let mut grad_w_dec = grad.w_dec;
        if cfg.unit_norm_decoder {
            remove_parallel_component(&params.w_dec, &mut grad_w_dec);
        }
        let lr = if cfg.warmup_steps > 0 {
            cfg.lr * ((step + 1) as f64 / cfg.warmup_steps as f64).min(1.0)
        } else {
            cfg.lr
        };
        let t = step + 1;
        opt_w_enc.step(
            params.w_enc.as_mut_slice(),
            &scale(grad.w_enc.as_slice()),
            lr,
            t,
            cfg.weight_decay,
        );
        opt_b_enc.step(&mut params.b_enc, &scale(&grad.b_enc), lr, t, 0.0);
        opt_w_dec.step(
            params.w_dec.as_mut_slice(),
            &scale(grad_w_dec.as_slice()),
            lr,
            t,
            cfg.weight_decay,
        );
        opt_b_dec.step(&mut params.b_dec, &scale(&grad.b_dec), lr, t, 0.0);
        if cfg.unit_norm_decoder {
            project_unit_columns(&mut params.w_dec);
        }

        if schedule.contains(&step) {
            let window = params.encode_matrix(&data)?;
            let (next, dead) = resample_impl(&params, &data, &window)?;
            if !dead.is_empty() {
                params = next;
                opt_w_enc.reset_rows(d, &dead);
                opt_w_dec.reset_columns(m, &dead);
                for &j in &dead {
                    opt_b_enc.m[j] = 0.0;
                    opt_b_enc.v[j] = 0.0;
                }
                resampled.push((step, dead));
            }
        }
    }

    let final_loss = sae_loss(&params, &data, cfg.lambda, cfg.p)?.total * inv_n;
    if !final_loss.is_finite() {
        return Err(Error::NonFinite { step: cfg.steps });
    }
    history.push((cfg.steps, final_loss));
    if initial_loss.is_nan() {
        initial_loss = final_loss;
    }
    Ok(TrainedSae {
        params,
        initial_loss,
        final_loss,
        history,
        resampled,
    })
}
