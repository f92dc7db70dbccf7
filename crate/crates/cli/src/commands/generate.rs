// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::Args;
use featgeom::evr::planted_evr_dataset;
use featgeom::npy::{labels_to_array, NpyArray, NpyData};
use featgeom::numerics::Matrix;
use featgeom::synth::{
    make_clock_dataset, sample_distribution, ActivationMatrix, ClockTask, Distribution,
};
use serde::{Deserialize, Serialize};

use super::{required, seed_of, sidecar_manifest, Step};
use crate::error::{invalid, CliResult};
use crate::session::Session;

/// Geometry of a clock dataset, enough to rebuild its readout.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClockGeometry {
    pub modulus: usize,
    pub noise_sigma: f64,
    pub v_alpha: Matrix,
    pub v_beta: Matrix,
}

impl ClockGeometry {
    pub fn of(task: &ClockTask) -> Self {
        Self {
            modulus: task.modulus,
            noise_sigma: task.noise_sigma,
            v_alpha: task.v_alpha.clone(),
            v_beta: task.v_beta.clone(),
        }
    }

    /// Reassembles a task from stored activations and `(α, β)` label columns.
    pub fn into_task(self, x: Matrix, alpha: Vec<usize>, beta: Vec<usize>) -> CliResult<ClockTask> {
        if self.v_alpha.rows() != x.cols() {
            return Err(invalid(format!(
                "clock geometry is {}-dimensional but activations have {} columns",
                self.v_alpha.rows(),
                x.cols()
            )));
        }
        if let Some(&bad) = alpha.iter().chain(&beta).find(|&&v| v >= self.modulus) {
            return Err(invalid(format!(
                "label {bad} is not below the modulus {}",
                self.modulus
            )));
        }
        let activations = ActivationMatrix::new(x)?
            .with_label("alpha", alpha)?
            .with_label("beta", beta)?;
        Ok(ClockTask {
            modulus: self.modulus,
            activations,
            v_alpha: self.v_alpha,
            v_beta: self.v_beta,
            noise_sigma: self.noise_sigma,
        })
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Gen {
    /// circle2d, two_circles_r10, gaussian2d, planted_mixture2d,
    /// uniform_square2d, clock, or evr_planted.
    #[arg(long, default_value = "circle2d")]
    pub kind: String,
    /// Rows to draw (clock only).
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Weight of the line component of planted_mixture2d.
    #[arg(long, default_value_t = 0.5)]
    pub weight: f64,
    /// Modulus of the clock and EVR tasks.
    #[arg(long, default_value_t = 7)]
    pub modulus: usize,
    /// Ambient dimension of clock activations.
    #[arg(long, default_value_t = 8)]
    pub dim: usize,
    /// Gaussian noise level of the clock and EVR tasks.
    #[arg(long, default_value_t = 0.0)]
    pub noise: f64,
    /// Rows per (α, β) cell of evr_planted.
    #[arg(long, default_value_t = 4)]
    pub per_cell: usize,
    /// Signal scales of α, β, and the γ circle in evr_planted.
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 1.0, 1.0])]
    pub scales: Vec<f64>,
    /// f64 or f32 payload for the activations.
    #[arg(long, default_value = "f64")]
    pub dtype: String,
    /// Activation array (.npy).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Label array for clock and evr_planted; defaults to `<out>.labels.npy`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// JSON sidecar (clock geometry or planted variance fractions); defaults
    /// to `<out>.meta.json`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
}

impl Gen {
    fn activation_array(&self, x: &Matrix) -> CliResult<NpyArray> {
        let shape = vec![x.rows(), x.cols()];
        let data = match self.dtype.as_str() {
            "f64" => NpyData::F64(x.as_slice().to_vec()),
            "f32" => NpyData::F32(x.as_slice().iter().map(|&v| v as f32).collect()),
            other => {
                return Err(invalid(format!(
                    "unknown dtype '{other}', expected f64 or f32"
                )))
            }
        };
        Ok(NpyArray::new(shape, data)?)
    }

    fn labels_path(&self, out: &std::path::Path) -> PathBuf {
        self.labels
            .clone()
            .unwrap_or_else(|| out.with_extension("labels.npy"))
    }

    fn meta_path(&self, out: &std::path::Path) -> PathBuf {
        self.meta
            .clone()
            .unwrap_or_else(|| out.with_extension("meta.json"))
    }
}

impl Step for Gen {
    const NAME: &'static str = "gen";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out = required(&self.out, "out")?.to_path_buf();
        let seed = seed_of(self.seed);
        match self.kind.as_str() {
            "clock" => {
                let task = make_clock_dataset(self.modulus, self.dim, self.n, self.noise, seed)?;
                s.emit_npy(
                    out.clone(),
                    &self.activation_array(&task.activations.values)?,
                )?;
                s.emit_npy(
                    self.labels_path(&out),
                    &labels_to_array(&[task.alpha(), task.beta()])?,
                )?;
                s.emit_json(self.meta_path(&out), &ClockGeometry::of(&task))?;
            }
            "evr_planted" => {
                let scales: [f64; 3] = self.scales.as_slice().try_into().map_err(|_| {
                    invalid(format!(
                        "--scales needs 3 values, got {}",
                        self.scales.len()
                    ))
                })?;
                let (acts, labels, fractions) =
                    planted_evr_dataset(self.modulus, self.per_cell, scales, self.noise, seed)?;
                s.emit_npy(out.clone(), &self.activation_array(&acts.values)?)?;
                s.emit_npy(
                    self.labels_path(&out),
                    &labels_to_array(&[&labels.alpha, &labels.beta])?,
                )?;
                s.emit_json(self.meta_path(&out), &fractions)?;
            }
            name => {
                let kind = Distribution::from_name(name, Some(self.weight))?;
                let acts = sample_distribution(kind, self.n, seed)?;
                s.emit_npy(out, &self.activation_array(&acts.values)?)?;
            }
        }
        Ok(())
    }
}
