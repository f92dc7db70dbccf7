// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::Args;
use featgeom::packing::{check_l1_bound, check_matrix_packing, sample_delta_vectors, BoundReport};
use serde::{Deserialize, Serialize};

use super::{required, seed_of, sidecar_manifest, Step};
use crate::error::CliResult;
use crate::session::Session;

#[derive(Debug, Clone, Serialize)]
struct PackReport {
    vectors: usize,
    dim: usize,
    delta: f64,
    group_size: usize,
    l1: BoundReport,
    d_max: usize,
    subspaces: BoundReport,
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
pub struct PackVerify {
    /// Number of random unit vectors.
    #[arg(long, default_value_t = 60)]
    pub vectors: usize,
    /// Ambient dimension.
    #[arg(long, default_value_t = 500)]
    pub dim: usize,
    /// Vectors per group in the coefficient-norm check.
    #[arg(long, default_value_t = 5)]
    pub group_size: usize,
    /// Random trials of the coefficient-norm check.
    #[arg(long, default_value_t = 10_000)]
    pub trials: usize,
    /// Block width in the subspace check.
    #[arg(long, default_value_t = 3)]
    pub d_max: usize,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Report JSON.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Step for PackVerify {
    const NAME: &'static str = "pack-verify";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(sidecar_manifest(required(&self.out, "out")?))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let seed = seed_of(self.seed);
        let pack = sample_delta_vectors(self.vectors, self.dim, seed)?;
        let report = PackReport {
            vectors: pack.len(),
            dim: pack.dim(),
            delta: pack.delta,
            group_size: self.group_size,
            l1: check_l1_bound(&pack, self.group_size, self.trials, seed)?,
            d_max: self.d_max,
            subspaces: check_matrix_packing(&pack, self.d_max)?,
        };
        s.emit_json(required(&self.out, "out")?.to_path_buf(), &report)
    }
}
