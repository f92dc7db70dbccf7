// SPDX-License-Identifier: MIT OR Apache-2.0

//! Circular probes and interventions on the clock task.

use std::path::{Path, PathBuf};

use clap::Args;
use featgeom::interventions::{
    circular_sweep, default_polar_grid, fit_circular_probe, intervene_circular, intervene_polar,
    polar_sweep, CircularProbe, InterventionRecord, DEFAULT_PROBE_COMPONENTS,
};
use featgeom::npy::{NpyArray, NpyData};
use featgeom::synth::ClockTask;
use serde::{Deserialize, Serialize};

use super::{required, sidecar_manifest, ClockGeometry, Step};
use crate::error::{invalid, CliResult};
use crate::session::Session;

fn label_column(columns: &[Vec<usize>], index: usize, what: &str) -> CliResult<Vec<usize>> {
    columns.get(index).cloned().ok_or_else(|| {
        invalid(format!(
            "{what} column {index} missing: labels have {} columns",
            columns.len()
        ))
    })
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Probe {
    #[arg(long)]
    pub acts: Option<PathBuf>,
    /// Integer labels (.npy).
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Label column holding α.
    #[arg(long, default_value_t = 0)]
    pub alpha_column: usize,
    #[arg(long, default_value_t = 7)]
    pub modulus: usize,
    /// Principal components feeding the probe.
    #[arg(long, default_value_t = DEFAULT_PROBE_COMPONENTS)]
    pub components: usize,
    /// Probe JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for Probe {
    const NAME: &'static str = "probe";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let x = s.read_matrix(required(&self.acts, "acts")?)?;
        let labels = s.read_labels(required(&self.labels, "labels")?)?;
        let alpha = label_column(&labels, self.alpha_column, "alpha")?;
        let probe = fit_circular_probe(&x, &alpha, self.modulus, self.components)?;
        s.emit_json(required(&self.out, "out")?.to_path_buf(), &probe)
    }
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct Intervene {
    /// Probe JSON written by probe.
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Activations whose mean is the ablation baseline.
    #[arg(long)]
    pub acts: Option<PathBuf>,
    /// Write circle(target) into the probe subspace.
    #[arg(long)]
    pub target_alpha: Option<usize>,
    /// Polar target radius (with --theta).
    #[arg(long)]
    pub r: Option<f64>,
    /// Polar target angle in radians (with --r).
    #[arg(long)]
    pub theta: Option<f64>,
    /// Patched activation vector (.npy).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for Intervene {
    const NAME: &'static str = "intervene";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let probe: CircularProbe = s.read_json(required(&self.probe, "probe")?)?;
        let x_mean = s.read_matrix(required(&self.acts, "acts")?)?.column_means();
        let patched = match (self.target_alpha, self.r, self.theta) {
            (Some(t), None, None) => intervene_circular(&probe, t, &x_mean)?,
            (None, Some(r), Some(theta)) => intervene_polar(&probe, r, theta, &x_mean)?,
            _ => {
                return Err(invalid(
                    "give either --target-alpha or both --r and --theta",
                ))
            }
        };
        let array = NpyArray::new(vec![patched.len()], NpyData::F64(patched))?;
        s.emit_npy(required(&self.out, "out")?.to_path_buf(), &array)
    }
}

#[derive(Debug, Clone, Serialize)]
struct PolarSweepReport {
    radii: Vec<f64>,
    thetas: Vec<f64>,
    betas: Vec<usize>,
    records: Vec<InterventionRecord>,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct InterveneSweep {
    #[arg(long)]
    pub acts: Option<PathBuf>,
    /// (α, β) labels written by `gen --kind clock`.
    #[arg(long)]
    pub labels: Option<PathBuf>,
    /// Clock geometry JSON written by `gen --kind clock`.
    #[arg(long)]
    pub meta: Option<PathBuf>,
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// circular (every α' ≠ α) or polar (a grid of radii and angles).
    #[arg(long, default_value = "circular")]
    pub mode: String,
    /// Polar radii; defaults to 0, 0.1, …, 2.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    /// Number of evenly spaced polar angles.
    #[arg(long, default_value_t = 100)]
    pub angles: usize,
    /// β values of the polar sweep; all when omitted.
    #[arg(long, value_delimiter = ',')]
    pub betas: Option<Vec<usize>>,
    /// Sweep records JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl InterveneSweep {
    fn task(&self, s: &mut Session) -> CliResult<ClockTask> {
        let x = s.read_matrix(required(&self.acts, "acts")?)?;
        let labels = s.read_labels(required(&self.labels, "labels")?)?;
        let geometry: ClockGeometry = s.read_json(required(&self.meta, "meta")?)?;
        let alpha = label_column(&labels, 0, "alpha")?;
        let beta = label_column(&labels, 1, "beta")?;
        geometry.into_task(x, alpha, beta)
    }
}

impl Step for InterveneSweep {
    const NAME: &'static str = "intervene-sweep";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out: &Path = required(&self.out, "out")?;
        if !matches!(self.mode.as_str(), "circular" | "polar") {
            return Err(invalid(format!(
                "unknown sweep mode '{}', expected circular or polar",
                self.mode
            )));
        }
        let task = self.task(s)?;
        let probe: CircularProbe = s.read_json(required(&self.probe, "probe")?)?;
        if probe.modulus != task.modulus {
            return Err(invalid(format!(
                "probe modulus {} differs from the task modulus {}",
                probe.modulus, task.modulus
            )));
        }
        let x_mean = task.activations.values.column_means();
        match self.mode.as_str() {
            "circular" => {
                let sweep = circular_sweep(&task, &probe, &x_mean)?;
                s.emit_json(out.to_path_buf(), &sweep)
            }
            "polar" => {
                if self.angles == 0 {
                    return Err(invalid("--angles must be at least 1"));
                }
                let (default_radii, _) = default_polar_grid();
                let radii = self.radii.clone().unwrap_or(default_radii);
                let thetas: Vec<f64> = (0..self.angles)
                    .map(|i| std::f64::consts::TAU * i as f64 / self.angles as f64)
                    .collect();
                let betas = self
                    .betas
                    .clone()
                    .unwrap_or_else(|| (0..task.modulus).collect());
                if let Some(&b) = betas.iter().find(|&&b| b >= task.modulus) {
                    return Err(invalid(format!(
                        "beta {b} is not below the modulus {}",
                        task.modulus
                    )));
                }
                let records = polar_sweep(&task, &probe, &x_mean, &radii, &thetas, &betas)?;
                s.emit_json(
                    out.to_path_buf(),
                    &PolarSweepReport {
                        radii,
                        thetas,
                        betas,
                        records,
                    },
                )
            }
            _ => unreachable!("mode checked above"),
        }
    }
}
