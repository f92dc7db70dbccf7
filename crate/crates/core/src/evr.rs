// SPDX-License-Identifier: MIT OR Apache-2.0

//! Explanation via regression.
//!
//! Activations are regressed on interpretable functions of the task labels
//! (one-hot indicators and circles). The r² of nested fits says how much
//! variance each added function explains, and the residual RGB grid colors
//! each (α, β) cell by its mean residual in the top three residual PCA
//! directions so that leftover structure shows up as stripes.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, shape, Error, Result};
use crate::numerics::{least_squares, pca, Matrix};
use crate::synth::{circle, gaussian, seeded_rng, ActivationMatrix};

/// A task label a design column can depend on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variable {
    Alpha,
    Beta,
    Gamma,
}

impl Variable {
    fn name(self) -> &'static str {
        match self {
            Variable::Alpha => "alpha",
            Variable::Beta => "beta",
            Variable::Gamma => "gamma",
        }
    }
}

impl FromStr for Variable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "alpha" | "a" => Ok(Variable::Alpha),
            "beta" | "b" => Ok(Variable::Beta),
            "gamma" | "c" | "g" => Ok(Variable::Gamma),
            _ => Err(invalid(format!("unknown label variable '{s}'"))),
        }
    }
}

/// One column of a design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Descriptor {
    Intercept,
    OneHot { var: Variable, value: usize },
    CircleCos { var: Variable, modulus: usize },
    CircleSin { var: Variable, modulus: usize },
}

impl fmt::Display for Descriptor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Descriptor::Intercept => write!(f, "intercept"),
            Descriptor::OneHot { var, value } => write!(f, "{}={value}", var.name()),
            Descriptor::CircleCos { var, modulus } => {
                write!(f, "cos(2pi*{}/{modulus})", var.name())
            }
            Descriptor::CircleSin { var, modulus } => {
                write!(f, "sin(2pi*{}/{modulus})", var.name())
            }
        }
    }
}

/// A group of columns: every one-hot of a variable, or its cos/sin pair.
///
/// Parsed from `onehot:<var>` or `circle:<var>[:<modulus>]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeatureSpec {
    OneHot {
        var: Variable,
    },
    Circle {
        var: Variable,
        modulus: Option<usize>,
    },
}

impl FromStr for FeatureSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        match parts.as_slice() {
            ["onehot", var] => Ok(FeatureSpec::OneHot { var: var.parse()? }),
            ["circle", var] => Ok(FeatureSpec::Circle {
                var: var.parse()?,
                modulus: None,
            }),
            ["circle", var, m] => {
                let modulus = m
                    .parse()
                    .map_err(|_| invalid(format!("bad modulus in '{s}'")))?;
                Ok(FeatureSpec::Circle {
                    var: var.parse()?,
                    modulus: Some(modulus),
                })
            }
            _ => Err(invalid(format!("unknown descriptor '{s}'"))),
        }
    }
}

impl FeatureSpec {
    fn expand(self, modulus: usize) -> Vec<Descriptor> {
        match self {
            FeatureSpec::OneHot { var } => (0..modulus)
                .map(|value| Descriptor::OneHot { var, value })
                .collect(),
            FeatureSpec::Circle { var, modulus: m } => {
                let modulus = m.unwrap_or(modulus);
                vec![
                    Descriptor::CircleCos { var, modulus },
                    Descriptor::CircleSin { var, modulus },
                ]
            }
        }
    }
}

/// Per-row task labels; `γ = α + β (mod m)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskLabels {
    pub alpha: Vec<usize>,
    pub beta: Vec<usize>,
    pub gamma: Vec<usize>,
}

impl TaskLabels {
    pub fn from_alpha_beta(alpha: Vec<usize>, beta: Vec<usize>, modulus: usize) -> Result<Self> {
        if alpha.len() != beta.len() {
            return Err(shape(format!(
                "{} alpha labels but {} beta labels",
                alpha.len(),
                beta.len()
            )));
        }
        if modulus == 0 {
            return Err(invalid("modulus must be positive"));
        }
        let gamma = alpha
            .iter()
            .zip(&beta)
            .map(|(a, b)| (a + b) % modulus)
            .collect();
        Ok(Self { alpha, beta, gamma })
    }

    pub fn len(&self) -> usize {
        self.alpha.len()
    }

    pub fn is_empty(&self) -> bool {
        self.alpha.is_empty()
    }

    fn get(&self, var: Variable) -> &[usize] {
        match var {
            Variable::Alpha => &self.alpha,
            Variable::Beta => &self.beta,
            Variable::Gamma => &self.gamma,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignMatrix {
    /// n×g.
    pub values: Matrix,
    pub descriptors: Vec<Descriptor>,
}

/// Builds the intercept column followed by the expanded specs, in order.
pub fn build_design_matrix(
    labels: &TaskLabels,
    specs: &[FeatureSpec],
    modulus: usize,
) -> Result<DesignMatrix> {
    if specs.is_empty() {
        return Err(invalid("design needs at least one feature spec"));
    }
    let n = labels.len();
    if labels.beta.len() != n || labels.gamma.len() != n {
        return Err(shape("label vectors differ in length"));
    }
    let mut descriptors = vec![Descriptor::Intercept];
    for spec in specs {
        descriptors.extend(spec.expand(modulus));
    }
    let mut seen = BTreeSet::new();
    for d in &descriptors {
        if !seen.insert(*d) {
            return Err(invalid(format!("descriptor {d} appears twice")));
        }
    }
    for d in &descriptors {
        let (var, range) = match *d {
            Descriptor::Intercept => continue,
            Descriptor::OneHot { var, .. } => (var, modulus),
            Descriptor::CircleCos { var, modulus } | Descriptor::CircleSin { var, modulus } => {
                (var, modulus)
            }
        };
        if range == 0 {
            return Err(invalid("modulus must be positive"));
        }
        if let Some(&v) = labels.get(var).iter().find(|&&v| v >= range) {
            return Err(invalid(format!(
                "{} label {v} outside [0, {range})",
                var.name()
            )));
        }
    }
    let values = Matrix::from_fn(n, descriptors.len(), |r, c| match descriptors[c] {
        Descriptor::Intercept => 1.0,
        Descriptor::OneHot { var, value } => f64::from(u8::from(labels.get(var)[r] == value)),
        Descriptor::CircleCos { var, modulus } => circle(labels.get(var)[r] as f64, modulus)[0],
        Descriptor::CircleSin { var, modulus } => circle(labels.get(var)[r] as f64, modulus)[1],
    });
    Ok(DesignMatrix {
        values,
        descriptors,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvrReport {
    pub descriptors: Vec<Descriptor>,
    /// g×d.
    pub coefficients: Matrix,
    pub r2: f64,
    /// n×d.
    pub residuals: Matrix,
}

/// Minimum-norm least squares of `x` on the design columns.
pub fn evr_fit(design: &DesignMatrix, x: &Matrix) -> Result<EvrReport> {
    if x.rows() == 0 {
        return Err(invalid("nothing to fit"));
    }
    if design.values.rows() != x.rows() {
        return Err(shape(format!(
            "design has {} rows, activations {}",
            design.values.rows(),
            x.rows()
        )));
    }
    let coefficients = least_squares(&design.values, x)?;
    let residuals = x.sub(&design.values.matmul(&coefficients)?)?;
    let rss: f64 = residuals.as_slice().iter().map(|v| v * v).sum();
    let tss: f64 = x
        .center_rows(&x.column_means())
        .as_slice()
        .iter()
        .map(|v| v * v)
        .sum();
    let r2 = if tss > 0.0 {
        (1.0 - rss / tss).clamp(0.0, 1.0)
    } else {
        1.0
    };
    Ok(EvrReport {
        descriptors: design.descriptors.clone(),
        coefficients,
        r2,
        residuals,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvrStage {
    /// Specs added at this stage.
    pub added: Vec<FeatureSpec>,
    pub r2: f64,
    /// Frobenius norm of each descriptor's coefficient row.
    pub coefficient_norms: Vec<(String, f64)>,
}

/// Fits each cumulative union of `stages` and reports its r².
pub fn staged_fit(
    labels: &TaskLabels,
    stages: &[Vec<FeatureSpec>],
    modulus: usize,
    x: &Matrix,
) -> Result<Vec<EvrStage>> {
    let mut specs = Vec::new();
    let mut out = Vec::with_capacity(stages.len());
    for stage in stages {
        specs.extend(stage.iter().copied());
        let design = build_design_matrix(labels, &specs, modulus)?;
        let report = evr_fit(&design, x)?;
        let coefficient_norms = report
            .descriptors
            .iter()
            .enumerate()
            .map(|(i, d)| {
                let row = report.coefficients.row(i);
                (d.to_string(), row.iter().map(|v| v * v).sum::<f64>().sqrt())
            })
            .collect();
        out.push(EvrStage {
            added: stage.clone(),
            r2: report.r2,
            coefficient_norms,
        });
    }
    Ok(out)
}

/// Per-cell colors, rows indexed by α and columns by β.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RgbGrid {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, each channel in [0, 1].
    pub cells: Vec<[f64; 3]>,
}

impl RgbGrid {
    pub fn get(&self, alpha: usize, beta: usize) -> [f64; 3] {
        self.cells[alpha * self.cols + beta]
    }

    /// `alpha,beta,r,g,b` lines with a header.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("alpha,beta,r,g,b\n");
        for a in 0..self.rows {
            for b in 0..self.cols {
                let [r, g, bl] = self.get(a, b);
                s.push_str(&format!("{a},{b},{r},{g},{bl}\n"));
            }
        }
        s
    }
}

/// Colors each (α, β) cell by its mean residual in the top three residual
/// principal directions, each channel min-max scaled over the grid. Constant
/// or missing channels are 0.5.
pub fn residual_rgb(
    residuals: &Matrix,
    alpha: &[usize],
    beta: &[usize],
    m_alpha: usize,
    m_beta: usize,
) -> Result<RgbGrid> {
    let n = residuals.rows();
    if alpha.len() != n || beta.len() != n {
        return Err(shape("labels must match residual rows"));
    }
    let cells = m_alpha * m_beta;
    let mut counts = vec![0usize; cells];
    let d = residuals.cols();
    let mut sums = Matrix::zeros(cells, d);
    for r in 0..n {
        if alpha[r] >= m_alpha || beta[r] >= m_beta {
            return Err(invalid(format!("row {r}: label outside the grid")));
        }
        let cell = alpha[r] * m_beta + beta[r];
        counts[cell] += 1;
        for (s, v) in sums.row_mut(cell).iter_mut().zip(residuals.row(r)) {
            *s += v;
        }
    }
    if let Some(empty) = counts.iter().position(|&c| c == 0) {
        return Err(invalid(format!(
            "cell (alpha {}, beta {}) has no rows",
            empty / m_beta,
            empty % m_beta
        )));
    }
    for (cell, &c) in counts.iter().enumerate() {
        sums.row_mut(cell).iter_mut().for_each(|v| *v /= c as f64);
    }

    let mut channels = vec![vec![0.5; cells]; 3];
    let k = 3.min(d).min(n);
    if n >= 2 && k >= 1 {
        let basis = pca(residuals, k)?;
        let coords = basis.transform(&sums)?;
        for (c, channel) in channels.iter_mut().enumerate().take(k) {
            if basis.zero_variance[c] {
                continue;
            }
            let col = coords.column(c);
            let lo = col.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = col.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let scale = col.iter().fold(0.0f64, |a, v| a.max(v.abs()));
            if hi - lo > 1e-12 * scale.max(f64::MIN_POSITIVE) {
                *channel = col.iter().map(|v| (v - lo) / (hi - lo)).collect();
            }
        }
    }
    Ok(RgbGrid {
        rows: m_alpha,
        cols: m_beta,
        cells: (0..cells)
            .map(|i| [channels[0][i], channels[1][i], channels[2][i]])
            .collect(),
    })
}

/// Variance fractions of a planted EVR dataset, by component.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedFractions {
    pub alpha: f64,
    pub beta: f64,
    pub gamma_circle: f64,
    pub noise: f64,
}

/// Synthetic activations `u_α[α] + u_β[β] + C·circle(γ) + noise` over every
/// (α, β) pair, `per_cell` rows each.
///
/// The three signal parts live in mutually orthogonal coordinate blocks and
/// are pairwise uncorrelated over the full grid, so their variances add.
/// Fractions are computed from the population values.
pub fn planted_evr_dataset(
    modulus: usize,
    per_cell: usize,
    scales: [f64; 3],
    noise_sigma: f64,
    seed: u64,
) -> Result<(ActivationMatrix, TaskLabels, PlantedFractions)> {
    if modulus < 3 || per_cell == 0 {
        return Err(invalid(
            "planted EVR data needs modulus >= 3 and at least one row per cell",
        ));
    }
    // α and β one-hots each get m coordinates; the circle gets 2
    let d = 2 * modulus + 2;
    let mut rng = seeded_rng(seed);
    let mut alpha_means: Vec<Vec<f64>> = (0..modulus)
        .map(|_| (0..modulus).map(|_| gaussian(&mut rng)).collect())
        .collect();
    let mut beta_means: Vec<Vec<f64>> = (0..modulus)
        .map(|_| (0..modulus).map(|_| gaussian(&mut rng)).collect())
        .collect();
    center_and_scale(&mut alpha_means, scales[0]);
    center_and_scale(&mut beta_means, scales[1]);

    let n = modulus * modulus * per_cell;
    let mut values = Matrix::zeros(n, d);
    let (mut alpha, mut beta) = (Vec::with_capacity(n), Vec::with_capacity(n));
    for r in 0..n {
        let cell = r % (modulus * modulus);
        let (a, b) = (cell / modulus, cell % modulus);
        let g = (a + b) % modulus;
        let row = values.row_mut(r);
        row[..modulus].copy_from_slice(&alpha_means[a]);
        row[modulus..2 * modulus].copy_from_slice(&beta_means[b]);
        let c = circle(g as f64, modulus);
        row[2 * modulus] = scales[2] * c[0];
        row[2 * modulus + 1] = scales[2] * c[1];
        if noise_sigma > 0.0 {
            row.iter_mut()
                .for_each(|v| *v += noise_sigma * gaussian(&mut rng));
        }
        alpha.push(a);
        beta.push(b);
    }
    // a unit circle has total variance 1
    let parts = [
        scales[0].powi(2),
        scales[1].powi(2),
        scales[2].powi(2),
        noise_sigma.powi(2) * d as f64,
    ];
    let total: f64 = parts.iter().sum();
    let fractions = PlantedFractions {
        alpha: parts[0] / total,
        beta: parts[1] / total,
        gamma_circle: parts[2] / total,
        noise: parts[3] / total,
    };
    let labels = TaskLabels::from_alpha_beta(alpha.clone(), beta.clone(), modulus)?;
    let acts = ActivationMatrix::new(values)?
        .with_label("alpha", alpha)?
        .with_label("beta", beta)?;
    Ok((acts, labels, fractions))
}

/// Centers a set of equally weighted mean vectors and scales them so their
/// total variance is `scale²`.
fn center_and_scale(means: &mut [Vec<f64>], scale: f64) {
    let k = means.len() as f64;
    let dim = means[0].len();
    for j in 0..dim {
        let mu = means.iter().map(|v| v[j]).sum::<f64>() / k;
        means.iter_mut().for_each(|v| v[j] -= mu);
    }
    let var = means
        .iter()
        .flat_map(|v| v.iter())
        .map(|x| x * x)
        .sum::<f64>()
        / k;
    let f = if var > 0.0 { scale / var.sqrt() } else { 0.0 };
    means
        .iter_mut()
        .flat_map(|v| v.iter_mut())
        .for_each(|x| *x *= f);
}
