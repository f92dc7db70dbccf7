// SPDX-License-Identifier: MIT OR Apache-2.0

//! Empirical checks of the δ-orthogonal packing bounds.
//!
//! For unit vectors with pairwise `|xᵢ·xⱼ| ≤ δ` and `δn < 1`, any unit `y` in
//! the span of `n` of them has coefficients with `‖z‖₁ ≤ √(n/(1−δn))`.
//! Grouping a pack into consecutive blocks of at most `d_max` vectors gives
//! subspaces whose pairwise similarity is at most `δ·d_max/(1−δ·d_max)`.
//! Both are checked by random trials.

use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numerics::{dot, norm, orthonormalize_columns, svd, Matrix};
use crate::synth::{gaussian, seeded_rng};

/// Relative slack for floating-point rounding in bound comparisons.
const ROUNDING_SLACK: f64 = 1e-12;

/// Unit vectors stored as the columns of a d×N matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorPack {
    pub vectors: Matrix,
    /// Largest pairwise `|xᵢ·xⱼ|`.
    pub delta: f64,
}

impl VectorPack {
    /// Normalizes the columns of `a` and measures δ.
    pub fn from_columns(a: Matrix) -> Result<Self> {
        if a.cols() < 2 {
            return Err(invalid(format!(
                "a pack needs at least 2 vectors, got {}",
                a.cols()
            )));
        }
        let mut cols = Vec::with_capacity(a.cols());
        for j in 0..a.cols() {
            let mut c = a.column(j);
            let n = norm(&c);
            if !(n > 0.0 && n.is_finite()) {
                return Err(invalid(format!("vector {j} cannot be normalized")));
            }
            c.iter_mut().for_each(|v| *v /= n);
            cols.push(c);
        }
        let delta = (0..cols.len())
            .into_par_iter()
            .map(|i| {
                ((i + 1)..cols.len())
                    .map(|j| dot(&cols[i], &cols[j]).abs())
                    .fold(0.0f64, f64::max)
            })
            .reduce(|| 0.0, f64::max)
            .min(1.0);
        Ok(Self {
            vectors: Matrix::from_columns(&cols)?,
            delta,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.cols()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.cols() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.rows()
    }
}

/// `count` normalized Gaussian vectors in R^d.
pub fn sample_delta_vectors(count: usize, d: usize, seed: u64) -> Result<VectorPack> {
    if count < 2 || d == 0 {
        return Err(invalid(format!(
            "need at least 2 vectors in d >= 1, got {count} in {d}"
        )));
    }
    let mut rng = seeded_rng(seed);
    VectorPack::from_columns(Matrix::from_fn(d, count, |_, _| gaussian(&mut rng)))
}

/// Largest `|x₁·x₂|` over unit vectors in the two column spaces: the top
/// singular value of `Q₁ᵀQ₂`.
pub fn subspace_delta(a1: &Matrix, a2: &Matrix) -> Result<f64> {
    if a1.rows() != a2.rows() {
        return Err(invalid(format!(
            "ambient dimensions differ: {} vs {}",
            a1.rows(),
            a2.rows()
        )));
    }
    let q1 = orthonormalize_columns(a1)?;
    let q2 = orthonormalize_columns(a2)?;
    let cross = q1.transpose().matmul(&q2)?;
    let top = svd(&cross)?.singular_values.first().copied().unwrap_or(0.0);
    Ok(top.min(1.0))
}

/// Outcome of a bound check.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub delta: f64,
    pub bound: f64,
    /// Largest observed value divided by the bound.
    pub max_ratio: f64,
    pub max_observed: f64,
    pub trials: usize,
    pub violations: usize,
    /// Set when the bound is vacuous and nothing was checked.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub skipped: Option<String>,
}

impl BoundReport {
    fn skipped(delta: f64, reason: String) -> Self {
        Self {
            delta,
            bound: f64::INFINITY,
            max_ratio: 0.0,
            max_observed: 0.0,
            trials: 0,
            violations: 0,
            skipped: Some(reason),
        }
    }
}

/// `√(n/(1−δn))`.
pub fn l1_bound(delta: f64, n: usize) -> f64 {
    (n as f64 / (1.0 - delta * n as f64)).sqrt()
}

/// `δ·d_max/(1−δ·d_max)`.
pub fn matrix_packing_bound(delta: f64, d_max: usize) -> f64 {
    let x = delta * d_max as f64;
    x / (1.0 - x)
}

/// Random trials of the coefficient bound: pick `n` vectors, draw Gaussian
/// `z`, rescale so `‖A·z‖ = 1`, compare `‖z‖₁` to the bound.
///
/// Each trial is held to the bound for the δ of its own group, which never
/// exceeds the pack's δ. `bound` in the report is the pack-wide value and
/// `max_ratio` is taken against the per-group bounds.
pub fn check_l1_bound(
    pack: &VectorPack,
    n: usize,
    trials: usize,
    seed: u64,
) -> Result<BoundReport> {
    if n == 0 || n > pack.len() {
        return Err(invalid(format!(
            "group size must be in 1..={}, got {n}",
            pack.len()
        )));
    }
    if pack.delta * n as f64 >= 1.0 {
        return Ok(BoundReport::skipped(
            pack.delta,
            format!(
                "delta*n = {:.4} >= 1, bound is vacuous",
                pack.delta * n as f64
            ),
        ));
    }
    let outcomes: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|t| {
            let mut rng = seeded_rng(seed);
            rng.set_stream(t as u64);
            let idx = sample(&mut rng, pack.len(), n).into_vec();
            let cols: Vec<Vec<f64>> = idx.iter().map(|&j| pack.vectors.column(j)).collect();
            let mut group_delta = 0.0f64;
            for i in 0..n {
                for j in (i + 1)..n {
                    group_delta = group_delta.max(dot(&cols[i], &cols[j]).abs());
                }
            }
            let z: Vec<f64> = (0..n).map(|_| gaussian(&mut rng)).collect();
            let mut y = vec![0.0; pack.dim()];
            for (c, &zj) in cols.iter().zip(&z) {
                for (yi, ci) in y.iter_mut().zip(c) {
                    *yi += ci * zj;
                }
            }
            let l1 = z.iter().map(|v| v.abs()).sum::<f64>() / norm(&y);
            (l1, l1_bound(group_delta, n))
        })
        .collect();
    let max_observed = outcomes.iter().map(|o| o.0).fold(0.0, f64::max);
    Ok(BoundReport {
        delta: pack.delta,
        bound: l1_bound(pack.delta, n),
        max_ratio: outcomes.iter().map(|(v, b)| v / b).fold(0.0, f64::max),
        max_observed,
        trials,
        violations: outcomes
            .iter()
            .filter(|(v, b)| *v > b * (1.0 + ROUNDING_SLACK))
            .count(),
        skipped: None,
    })
}

/// Checks every pair of consecutive `d_max`-column blocks against the
/// subspace bound.
pub fn check_matrix_packing(pack: &VectorPack, d_max: usize) -> Result<BoundReport> {
    if d_max == 0 {
        return Err(invalid("block size must be positive"));
    }
    if pack.delta * d_max as f64 >= 1.0 {
        return Ok(BoundReport::skipped(
            pack.delta,
            format!(
                "delta*d_max = {:.4} >= 1, bound is vacuous",
                pack.delta * d_max as f64
            ),
        ));
    }
    let bound = matrix_packing_bound(pack.delta, d_max);
    let blocks: Vec<Matrix> = (0..pack.len())
        .step_by(d_max)
        .map(|start| {
            let cols: Vec<usize> = (start..(start + d_max).min(pack.len())).collect();
            pack.vectors.select_columns(&cols)
        })
        .collect();
    let pairs: Vec<(usize, usize)> = (0..blocks.len())
        .flat_map(|i| ((i + 1)..blocks.len()).map(move |j| (i, j)))
        .collect();
    let observed = pairs
        .par_iter()
        .map(|&(i, j)| subspace_delta(&blocks[i], &blocks[j]))
        .collect::<Result<Vec<f64>>>()?;
    Ok(summarize(pack.delta, bound, &observed))
}

fn summarize(delta: f64, bound: f64, observed: &[f64]) -> BoundReport {
    let limit = bound * (1.0 + ROUNDING_SLACK);
    let max_observed = observed.iter().copied().fold(0.0, f64::max);
    BoundReport {
        delta,
        bound,
        max_ratio: if bound > 0.0 {
            max_observed / bound
        } else {
            0.0
        },
        max_observed,
        trials: observed.len(),
        violations: observed.iter().filter(|&&v| v > limit).count(),
        skipped: None,
    }
}

/// A random unit vector, for search-based checks.
pub fn random_unit_vector(rng: &mut impl Rng, d: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let n = norm(&v);
        if n > 0.0 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}
