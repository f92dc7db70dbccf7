// SPDX-License-Identifier: MIT OR Apache-2.0

//! Seeded generators for the synthetic activation datasets.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::numerics::{axpy, orthonormalize_columns, Matrix};

/// Center of the dense component in `planted_mixture2d`.
pub const MIXTURE_DENSE_OFFSET: [f64; 2] = [0.0, 3.0];

pub(crate) fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub(crate) fn gaussian(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

/// `[cos(2πx/m), sin(2πx/m)]`
pub fn circle(x: f64, modulus: usize) -> [f64; 2] {
    let angle = TAU * x / modulus as f64;
    [angle.cos(), angle.sin()]
}

/// An n×d block of activation vectors with optional integer annotations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActivationMatrix {
    pub values: Matrix,
    /// Named per-row labels, each of length n.
    #[serde(default)]
    pub labels: BTreeMap<String, Vec<usize>>,
}

impl ActivationMatrix {
    pub fn new(values: Matrix) -> Result<Self> {
        if !values.is_finite() {
            return Err(invalid("activations contain non-finite values"));
        }
        Ok(Self {
            values,
            labels: BTreeMap::new(),
        })
    }

    pub fn with_label(mut self, name: &str, labels: Vec<usize>) -> Result<Self> {
        if labels.len() != self.n() {
            return Err(Error::Shape(format!(
                "label '{name}' has {} entries for {} rows",
                labels.len(),
                self.n()
            )));
        }
        self.labels.insert(name.to_string(), labels);
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    pub fn d(&self) -> usize {
        self.values.cols()
    }

    pub fn label(&self, name: &str) -> Option<&[usize]> {
        self.labels.get(name).map(Vec::as_slice)
    }
}

/// Synthetic distributions with a known reducibility class.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Distribution {
    /// Uniform on the unit circle in R².
    Circle2d,
    /// Unit circle in the e1–e2 or e3–e4 plane of R¹⁰, each with probability ½.
    TwoCirclesR10,
    /// Standard isotropic Gaussian in R².
    Gaussian2d,
    /// With probability `weight` a point on the a-axis (b exactly 0), otherwise
    /// an isotropic Gaussian centered at [`MIXTURE_DENSE_OFFSET`].
    PlantedMixture2d { weight: f64 },
    /// Uniform on [-1, 1]².
    UniformSquare2d,
}

impl Distribution {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Circle2d => "circle2d",
            Self::TwoCirclesR10 => "two_circles_r10",
            Self::Gaussian2d => "gaussian2d",
            Self::PlantedMixture2d { .. } => "planted_mixture2d",
            Self::UniformSquare2d => "uniform_square2d",
        }
    }

    /// Parses a kind name; `weight` is only consulted for `planted_mixture2d`.
    pub fn from_name(name: &str, weight: Option<f64>) -> Result<Self> {
        let kind = match name {
            "circle2d" => Self::Circle2d,
            "two_circles_r10" => Self::TwoCirclesR10,
            "gaussian2d" => Self::Gaussian2d,
            "planted_mixture2d" => Self::PlantedMixture2d {
                weight: weight.unwrap_or(0.5),
            },
            "uniform_square2d" => Self::UniformSquare2d,
            other => return Err(invalid(format!("unknown distribution kind '{other}'"))),
        };
        kind.validate()?;
        Ok(kind)
    }

    pub fn dim(&self) -> usize {
        match self {
            Self::TwoCirclesR10 => 10,
            _ => 2,
        }
    }

    fn validate(&self) -> Result<()> {
        if let Self::PlantedMixture2d { weight } = self {
            if !(*weight > 0.0 && *weight < 1.0) {
                return Err(invalid(format!(
                    "mixture weight must lie in (0, 1), got {weight}"
                )));
            }
        }
        Ok(())
    }
}

impl fmt::Display for Distribution {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Distribution {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::from_name(s, None)
    }
}

/// Draws `n` rows from `kind`.
pub fn sample_distribution(kind: Distribution, n: usize, seed: u64) -> Result<ActivationMatrix> {
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    kind.validate()?;
    let mut rng = seeded_rng(seed);
    let d = kind.dim();
    let mut values = Matrix::zeros(n, d);
    for r in 0..n {
        let row = values.row_mut(r);
        match kind {
            Distribution::Circle2d => {
                let t: f64 = rng.random::<f64>() * TAU;
                row[0] = t.cos();
                row[1] = t.sin();
            }
            Distribution::TwoCirclesR10 => {
                let plane = if rng.random::<f64>() < 0.5 { 0 } else { 2 };
                let t: f64 = rng.random::<f64>() * TAU;
                row[plane] = t.cos();
                row[plane + 1] = t.sin();
            }
            Distribution::Gaussian2d => {
                row[0] = gaussian(&mut rng);
                row[1] = gaussian(&mut rng);
            }
            Distribution::PlantedMixture2d { weight } => {
                if rng.random::<f64>() < weight {
                    row[0] = gaussian(&mut rng);
                    row[1] = 0.0;
                } else {
                    row[0] = MIXTURE_DENSE_OFFSET[0] + gaussian(&mut rng);
                    row[1] = MIXTURE_DENSE_OFFSET[1] + gaussian(&mut rng);
                }
            }
            Distribution::UniformSquare2d => {
                row[0] = rng.random_range(-1.0..=1.0);
                row[1] = rng.random_range(-1.0..=1.0);
            }
        }
    }
    ActivationMatrix::new(values)
}

/// Synthetic modular-addition activations: two orthogonal planes carry
/// `circle(α)` and `circle(β)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClockTask {
    pub modulus: usize,
    /// Rows labelled `alpha` and `beta`.
    pub activations: ActivationMatrix,
    /// d×2, orthonormal columns.
    pub v_alpha: Matrix,
    /// d×2, orthonormal columns orthogonal to `v_alpha`.
    pub v_beta: Matrix,
    pub noise_sigma: f64,
}

impl ClockTask {
    pub fn alpha(&self) -> &[usize] {
        self.activations
            .label("alpha")
            .expect("clock task has alpha labels")
    }

    pub fn beta(&self) -> &[usize] {
        self.activations
            .label("beta")
            .expect("clock task has beta labels")
    }

    /// Noise-free activation for a label pair.
    pub fn planted(&self, alpha: usize, beta: usize) -> Vec<f64> {
        planted_row(&self.v_alpha, &self.v_beta, self.modulus, alpha, beta)
    }
}

fn planted_row(v_alpha: &Matrix, v_beta: &Matrix, m: usize, alpha: usize, beta: usize) -> Vec<f64> {
    let ca = circle(alpha as f64, m);
    let cb = circle(beta as f64, m);
    let mut row = vec![0.0; v_alpha.rows()];
    for (i, x) in row.iter_mut().enumerate() {
        *x = v_alpha[(i, 0)] * ca[0]
            + v_alpha[(i, 1)] * ca[1]
            + v_beta[(i, 0)] * cb[0]
            + v_beta[(i, 1)] * cb[1];
    }
    row
}

/// Builds a clock dataset. Row `i` carries the pair `(⌊(i mod m²)/m⌋, i mod m)`,
/// so every pair appears once `n ≥ m²`.
pub fn make_clock_dataset(
    m: usize,
    d: usize,
    n: usize,
    noise_sigma: f64,
    seed: u64,
) -> Result<ClockTask> {
    if d < 4 {
        return Err(invalid(format!("clock dataset needs d >= 4, got {d}")));
    }
    if m < 2 {
        return Err(invalid(format!("modulus must be at least 2, got {m}")));
    }
    if n == 0 {
        return Err(invalid("sample count must be at least 1"));
    }
    if !(noise_sigma >= 0.0 && noise_sigma.is_finite()) {
        return Err(invalid(format!(
            "noise sigma must be finite and nonnegative, got {noise_sigma}"
        )));
    }
    let mut rng = seeded_rng(seed);
    let raw = Matrix::from_fn(d, 4, |_, _| gaussian(&mut rng));
    let q = orthonormalize_columns(&raw)?;
    let v_alpha = q.select_columns(&[0, 1]);
    let v_beta = q.select_columns(&[2, 3]);

    let mut values = Matrix::zeros(n, d);
    let mut alpha = Vec::with_capacity(n);
    let mut beta = Vec::with_capacity(n);
    for r in 0..n {
        let pair = r % (m * m);
        let (a, b) = (pair / m, pair % m);
        let mut row = planted_row(&v_alpha, &v_beta, m, a, b);
        if noise_sigma > 0.0 {
            let noise: Vec<f64> = (0..d).map(|_| noise_sigma * gaussian(&mut rng)).collect();
            axpy(1.0, &noise, &mut row);
        }
        values.row_mut(r).copy_from_slice(&row);
        alpha.push(a);
        beta.push(b);
    }
    let activations = ActivationMatrix::new(values)?
        .with_label("alpha", alpha)?
        .with_label("beta", beta)?;
    Ok(ClockTask {
        modulus: m,
        activations,
        v_alpha,
        v_beta,
        noise_sigma,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::norm;

    #[test]
    fn circle_rows_are_unit() {
        let x = sample_distribution(Distribution::Circle2d, 1000, 3).unwrap();
        for row in x.values.row_iter() {
            assert!((norm(row) - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn two_circles_occupy_one_plane() {
        let x = sample_distribution(Distribution::TwoCirclesR10, 1000, 1).unwrap();
        assert_eq!(x.d(), 10);
        let mut counts = [0usize; 2];
        for row in x.values.row_iter() {
            let first = row[0] != 0.0 || row[1] != 0.0;
            let second = row[2] != 0.0 || row[3] != 0.0;
            assert!(first ^ second);
            assert!(row[4..].iter().all(|&v| v == 0.0));
            let plane = if first { 0 } else { 2 };
            assert!((norm(&row[plane..plane + 2]) - 1.0).abs() < 1e-12);
            counts[usize::from(second)] += 1;
        }
        assert!(counts[0] > 400 && counts[1] > 400);
    }

    #[test]
    fn mixture_fraction_on_axis() {
        let x =
            sample_distribution(Distribution::PlantedMixture2d { weight: 0.5 }, 10_000, 7).unwrap();
        let on_axis = x.values.row_iter().filter(|r| r[1] == 0.0).count() as f64 / 10_000.0;
        assert!((on_axis - 0.5).abs() < 0.02, "fraction {on_axis}");
    }

    #[test]
    fn unknown_kind_and_bad_weight() {
        assert!("spiral".parse::<Distribution>().is_err());
        assert!(Distribution::from_name("planted_mixture2d", Some(1.0)).is_err());
        assert!(sample_distribution(Distribution::PlantedMixture2d { weight: 0.0 }, 5, 0).is_err());
        assert!(sample_distribution(Distribution::Circle2d, 0, 0).is_err());
    }

    #[test]
    fn deterministic_per_seed() {
        for kind in [
            Distribution::Circle2d,
            Distribution::TwoCirclesR10,
            Distribution::Gaussian2d,
            Distribution::PlantedMixture2d { weight: 0.3 },
            Distribution::UniformSquare2d,
        ] {
            let a = sample_distribution(kind, 200, 11).unwrap();
            let b = sample_distribution(kind, 200, 11).unwrap();
            assert_eq!(a.values.as_slice(), b.values.as_slice());
            let c = sample_distribution(kind, 200, 12).unwrap();
            assert_ne!(a.values.as_slice(), c.values.as_slice());
        }
    }

    #[test]
    fn circle_sample_mean_concentrates() {
        let n = 1000;
        let bound = 4.0 / (n as f64).sqrt();
        let failures = (0..100)
            .filter(|&seed| {
                let x = sample_distribution(Distribution::Circle2d, n, seed).unwrap();
                norm(&x.values.column_means()) > bound
            })
            .count();
        assert!(failures <= 1, "{failures} of 100 seeds exceeded 4/sqrt(n)");
    }

    #[test]
    fn clock_noise_free_rows_are_exact() {
        let task = make_clock_dataset(7, 12, 49, 0.0, 5).unwrap();
        for (r, row) in task.activations.values.row_iter().enumerate() {
            let expected = task.planted(task.alpha()[r], task.beta()[r]);
            for (a, b) in row.iter().zip(&expected) {
                assert!((a - b).abs() < 1e-12);
            }
        }
        let mut pairs: Vec<(usize, usize)> = task
            .alpha()
            .iter()
            .copied()
            .zip(task.beta().iter().copied())
            .collect();
        pairs.sort_unstable();
        pairs.dedup();
        assert_eq!(pairs.len(), 49);
    }

    #[test]
    fn clock_planes_orthonormal() {
        let task = make_clock_dataset(5, 6, 30, 0.1, 9).unwrap();
        let gram_a = task.v_alpha.transpose().matmul(&task.v_alpha).unwrap();
        assert!(gram_a.max_abs_diff(&Matrix::identity(2)) < 1e-10);
        let cross = task.v_alpha.transpose().matmul(&task.v_beta).unwrap();
        assert!(cross.frobenius_norm() < 1e-10);
    }

    #[test]
    fn clock_projection_error_is_bounded_by_noise() {
        let sigma = 0.02;
        let n = 490;
        let task = make_clock_dataset(7, 10, n, sigma, 2).unwrap();
        let errors: Vec<f64> = task
            .activations
            .values
            .row_iter()
            .enumerate()
            .map(|(r, row)| {
                let proj = task.v_alpha.tr_matvec(row).unwrap();
                let target = circle(task.alpha()[r] as f64, 7);
                ((proj[0] - target[0]).powi(2) + (proj[1] - target[1]).powi(2)).sqrt()
            })
            .collect();
        // projected noise is 2-D N(0, σ²I): P(|e| > tσ) = exp(-t²/2)
        let beyond_three = errors.iter().filter(|&&e| e > 3.0 * sigma).count() as f64 / n as f64;
        assert!(
            beyond_three <= (-4.5f64).exp() + 0.02,
            "tail fraction {beyond_three}"
        );
        // union bound at failure probability 1e-3
        let t_max = (2.0 * (n as f64 / 1e-3).ln()).sqrt();
        let max = errors.iter().copied().fold(0.0, f64::max);
        assert!(max <= t_max * sigma, "max error {max}");
    }

    #[test]
    fn clock_rejects_small_dimension() {
        assert!(make_clock_dataset(7, 3, 49, 0.0, 0).is_err());
        assert!(make_clock_dataset(1, 8, 49, 0.0, 0).is_err());
    }
}
