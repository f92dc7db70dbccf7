// SPDX-License-Identifier: MIT OR Apache-2.0

//! Circular probes and mean-ablated subspace interventions.
//!
//! A probe `P` (2×k) maps the top-k PCA coordinates `W·x` of an activation to
//! `circle(α)`. An intervention replaces the mean activation's probe readout
//! with a chosen point and leaves everything else at the mean:
//! `x* = x̄ + Wᵀ·P⁺·(target − P·W·x̄)`. The clock readout turns the result into
//! logits over `γ = α + β (mod m)` so that interventions can be checked
//! without a language model.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::numerics::{least_squares, matrix_rank, pca, pseudoinverse, Matrix};
use crate::synth::{circle, ClockTask};

/// PCA components feeding the probe.
pub const DEFAULT_PROBE_COMPONENTS: usize = 5;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CircularProbe {
    /// k×d, orthonormal rows.
    pub basis: Matrix,
    /// 2×k.
    pub probe: Matrix,
    /// k×2.
    pub probe_pinv: Matrix,
    pub modulus: usize,
    /// RMS of `‖P·W·x − circle(α)‖` over the training rows.
    pub train_residual: f64,
}

impl CircularProbe {
    pub fn k(&self) -> usize {
        self.basis.rows()
    }

    /// `P·W·x`.
    pub fn readout(&self, x: &[f64]) -> Result<[f64; 2]> {
        let z = self.basis.matvec(x)?;
        let r = self.probe.matvec(&z)?;
        Ok([r[0], r[1]])
    }
}

/// Fits a probe on the top-`k` principal directions of `x`.
pub fn fit_circular_probe(
    x: &Matrix,
    alpha: &[usize],
    modulus: usize,
    k: usize,
) -> Result<CircularProbe> {
    if k == 0 || k > x.cols() {
        return Err(invalid(format!(
            "probe needs 1 <= k <= {}, got {k}",
            x.cols()
        )));
    }
    if x.rows() < 2 * k {
        return Err(invalid(format!(
            "probe with k={k} needs at least {} rows, got {}",
            2 * k,
            x.rows()
        )));
    }
    let basis = pca(x, k)?.components;
    fit_circular_probe_on_basis(x, alpha, modulus, basis)
}

/// Fits a probe on a caller-supplied k×d basis with orthonormal rows, such as
/// the PCA plane of a cluster reconstruction.
pub fn fit_circular_probe_on_basis(
    x: &Matrix,
    alpha: &[usize],
    modulus: usize,
    basis: Matrix,
) -> Result<CircularProbe> {
    if modulus < 2 {
        return Err(invalid(format!(
            "modulus must be at least 2, got {modulus}"
        )));
    }
    if alpha.len() != x.rows() {
        return Err(shape(format!(
            "{} labels for {} rows",
            alpha.len(),
            x.rows()
        )));
    }
    if let Some(&a) = alpha.iter().find(|&&a| a >= modulus) {
        return Err(invalid(format!("label {a} outside [0, {modulus})")));
    }
    if basis.cols() != x.cols() {
        return Err(shape(format!(
            "basis has {} columns, activations have {}",
            basis.cols(),
            x.cols()
        )));
    }
    let z = x.matmul(&basis.transpose())?;
    let targets = Matrix::from_fn(x.rows(), 2, |r, c| circle(alpha[r] as f64, modulus)[c]);
    let probe = least_squares(&z, &targets)?.transpose();
    if matrix_rank(&probe)? < 2 {
        return Err(Error::Degenerate(
            "probe design cannot produce a 2-D readout".into(),
        ));
    }
    let probe_pinv = pseudoinverse(&probe)?;
    let fitted = z.matmul(&probe.transpose())?;
    let sq = fitted
        .sub(&targets)?
        .as_slice()
        .iter()
        .map(|v| v * v)
        .sum::<f64>();
    Ok(CircularProbe {
        basis,
        probe,
        probe_pinv,
        modulus,
        train_residual: (sq / x.rows() as f64).sqrt(),
    })
}

/// `x̄ + Wᵀ·P⁺·(target − P·W·x̄)`.
pub fn intervene_at(probe: &CircularProbe, target: [f64; 2], x_mean: &[f64]) -> Result<Vec<f64>> {
    let current = probe.readout(x_mean)?;
    let delta = [target[0] - current[0], target[1] - current[1]];
    let coords = probe.probe_pinv.matvec(&delta)?;
    let mut out = probe.basis.tr_matvec(&coords)?;
    for (o, m) in out.iter_mut().zip(x_mean) {
        *o += m;
    }
    Ok(out)
}

/// Sets the probe readout to `circle(α')` and mean-ablates the rest.
pub fn intervene_circular(
    probe: &CircularProbe,
    target_alpha: usize,
    x_mean: &[f64],
) -> Result<Vec<f64>> {
    if target_alpha >= probe.modulus {
        return Err(invalid(format!(
            "target {target_alpha} outside [0, {})",
            probe.modulus
        )));
    }
    intervene_at(probe, circle(target_alpha as f64, probe.modulus), x_mean)
}

/// Off-distribution variant: the target is `[r·cos θ, r·sin θ]`.
pub fn intervene_polar(
    probe: &CircularProbe,
    r: f64,
    theta: f64,
    x_mean: &[f64],
) -> Result<Vec<f64>> {
    if !(r >= 0.0 && r.is_finite()) {
        return Err(invalid(format!(
            "radius must be finite and nonnegative, got {r}"
        )));
    }
    intervene_at(probe, [r * theta.cos(), r * theta.sin()], x_mean)
}

/// Clock readout: `logit_γ = cos(angle(V_αᵀ·x) + 2πβ/m − 2πγ/m)`.
pub fn clock_logits(x: &[f64], task: &ClockTask, beta: usize) -> Result<Vec<f64>> {
    let m = task.modulus;
    if beta >= m {
        return Err(invalid(format!("beta {beta} outside [0, {m})")));
    }
    let p = task.v_alpha.tr_matvec(x)?;
    if p[0] == 0.0 && p[1] == 0.0 {
        return Err(Error::Degenerate(
            "activation has no component in the alpha plane".into(),
        ));
    }
    let angle = p[1].atan2(p[0]);
    let step = std::f64::consts::TAU / m as f64;
    Ok((0..m)
        .map(|g| (angle + step * beta as f64 - step * g as f64).cos())
        .collect())
}

/// Index of the largest logit (lowest index on ties).
pub fn argmax(logits: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate() {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// One patching case: logits after intervening, and the original and target
/// answers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogitCase {
    pub logits: Vec<f64>,
    pub original: usize,
    pub target: usize,
}

/// Mean of `logit(original) − logit(target)`; negative means the
/// intervention moved the prediction towards the target.
pub fn average_logit_difference(cases: &[LogitCase]) -> Result<f64> {
    if cases.is_empty() {
        return Err(invalid("no cases to average"));
    }
    let mut sum = 0.0;
    for (i, c) in cases.iter().enumerate() {
        let n = c.logits.len();
        if c.original >= n || c.target >= n {
            return Err(invalid(format!("case {i}: label outside [0, {n})")));
        }
        sum += c.logits[c.original] - c.logits[c.target];
    }
    Ok(sum / cases.len() as f64)
}

/// One intervention on the clock task, as emitted for plotting.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterventionRecord {
    pub alpha: usize,
    pub beta: usize,
    /// Circle target; absent for polar interventions.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_alpha: Option<usize>,
    pub r: f64,
    pub theta: f64,
    pub predicted: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub logit_diff: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CircularSweep {
    pub records: Vec<InterventionRecord>,
    /// Fraction of cases whose argmax moved to `α' + β`.
    pub flip_rate: f64,
    pub average_logit_difference: f64,
}

/// Intervenes on every `(α, β)` problem with every `α' ≠ α`.
pub fn circular_sweep(
    task: &ClockTask,
    probe: &CircularProbe,
    x_mean: &[f64],
) -> Result<CircularSweep> {
    let m = task.modulus;
    if probe.modulus != m {
        return Err(invalid(format!(
            "probe modulus {} differs from task modulus {m}",
            probe.modulus
        )));
    }
    // the patched state depends only on the target
    let patched = (0..m)
        .map(|t| intervene_circular(probe, t, x_mean))
        .collect::<Result<Vec<_>>>()?;
    let problems: Vec<(usize, usize, usize)> = (0..m)
        .flat_map(|a| {
            (0..m).flat_map(move |b| (0..m).filter(move |&t| t != a).map(move |t| (a, b, t)))
        })
        .collect();
    let outcomes = problems
        .par_iter()
        .map(|&(a, b, t)| {
            let logits = clock_logits(&patched[t], task, b)?;
            let case = LogitCase {
                original: (a + b) % m,
                target: (t + b) % m,
                logits,
            };
            let diff = case.logits[case.original] - case.logits[case.target];
            let record = InterventionRecord {
                alpha: a,
                beta: b,
                target_alpha: Some(t),
                r: 1.0,
                theta: std::f64::consts::TAU * t as f64 / m as f64,
                predicted: argmax(&case.logits),
                logit_diff: Some(diff),
            };
            Ok((record, case))
        })
        .collect::<Result<Vec<_>>>()?;
    let (records, cases): (Vec<_>, Vec<_>) = outcomes.into_iter().unzip();
    let hits = records
        .iter()
        .filter(|r| Some(r.predicted) == r.target_alpha.map(|t| (t + r.beta) % m))
        .count();
    Ok(CircularSweep {
        flip_rate: hits as f64 / records.len() as f64,
        average_logit_difference: average_logit_difference(&cases)?,
        records,
    })
}

/// Predicted `γ` over a polar grid of probe-space targets for each `β`.
pub fn polar_sweep(
    task: &ClockTask,
    probe: &CircularProbe,
    x_mean: &[f64],
    radii: &[f64],
    thetas: &[f64],
    betas: &[usize],
) -> Result<Vec<InterventionRecord>> {
    let grid: Vec<(usize, f64, f64)> = betas
        .iter()
        .flat_map(|&b| {
            radii
                .iter()
                .flat_map(move |&r| thetas.iter().map(move |&t| (b, r, t)))
        })
        .collect();
    grid.par_iter()
        .map(|&(beta, r, theta)| {
            let patched = intervene_polar(probe, r, theta, x_mean)?;
            let logits = clock_logits(&patched, task, beta)?;
            Ok(InterventionRecord {
                alpha: 0,
                beta,
                target_alpha: None,
                r,
                theta,
                predicted: argmax(&logits),
                logit_diff: None,
            })
        })
        .collect()
}

/// Grid used for off-distribution sweeps: `r ∈ {0, 0.1, …, 2}` and 100 angles.
pub fn default_polar_grid() -> (Vec<f64>, Vec<f64>) {
    let radii = (0..=20).map(|i| i as f64 * 0.1).collect();
    let thetas = (0..100)
        .map(|i| std::f64::consts::TAU * i as f64 / 100.0)
        .collect();
    (radii, thetas)
}
