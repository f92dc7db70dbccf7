// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{ArgAction, Args};
use featgeom::npy::{NpyArray, NpyData};
use featgeom::sae::{train_sae, SaeTrainConfig};
use serde::{Deserialize, Serialize};

use super::{required, seed_of, Step};
use crate::error::CliResult;
use crate::session::Session;

fn defaults() -> SaeTrainConfig {
    SaeTrainConfig::default()
}

#[derive(Debug, Clone, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SaeTrain {
    /// Activations (.npy, n×d).
    #[arg(long)]
    pub acts: Option<PathBuf>,
    /// Dictionary size.
    #[arg(long, default_value_t = 10)]
    pub m: usize,
    #[arg(long, default_value_t = defaults().lambda)]
    pub lambda: f64,
    /// Sparsity exponent in (0, 1].
    #[arg(long, default_value_t = defaults().p)]
    pub p: f64,
    #[arg(long, default_value_t = defaults().lr)]
    pub lr: f64,
    #[arg(long, default_value_t = defaults().steps)]
    pub steps: usize,
    #[arg(long, default_value_t = defaults().warmup_steps)]
    pub warmup_steps: usize,
    /// Dead-feature resampling events, evenly spaced.
    #[arg(long, default_value_t = defaults().resample_times)]
    pub resample_times: usize,
    /// Rescale input rows to this norm before training.
    #[arg(long)]
    pub normalize_input_norm: Option<f64>,
    #[arg(long, action = ArgAction::Set, default_value_t = defaults().use_pre_encoder_bias)]
    pub use_pre_encoder_bias: bool,
    #[arg(long, action = ArgAction::Set, default_value_t = defaults().unit_norm_decoder)]
    pub unit_norm_decoder: bool,
    #[arg(long, default_value_t = defaults().weight_decay)]
    pub weight_decay: f64,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Output directory for W_e.npy, b_e.npy, W_d.npy, b_d.npy, meta.json.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl SaeTrain {
    pub fn config(&self) -> SaeTrainConfig {
        SaeTrainConfig {
            lambda: self.lambda,
            p: self.p,
            lr: self.lr,
            steps: self.steps,
            warmup_steps: self.warmup_steps,
            resample_times: self.resample_times,
            normalize_input_norm: self.normalize_input_norm,
            use_pre_encoder_bias: self.use_pre_encoder_bias,
            unit_norm_decoder: self.unit_norm_decoder,
            weight_decay: self.weight_decay,
            seed: seed_of(self.seed),
        }
    }
}

#[derive(Serialize)]
struct TrainingTrace<'a> {
    initial_loss: f64,
    final_loss: f64,
    history: &'a [(usize, f64)],
    resampled: &'a [(usize, Vec<usize>)],
}

impl Step for SaeTrain {
    const NAME: &'static str = "sae-train";

    fn manifest_path(&self) -> CliResult<PathBuf> {
        Ok(required(&self.out, "out")?.join("manifest.json"))
    }

    fn run(&self, s: &mut Session) -> CliResult<()> {
        let out = required(&self.out, "out")?;
        let x = s.read_matrix(required(&self.acts, "acts")?)?;
        let cfg = self.config();
        let trained = train_sae(&x, self.m, &cfg)?;
        let params = &trained.params;
        let vector = |v: &[f64]| NpyArray::new(vec![v.len()], NpyData::F64(v.to_vec()));
        s.emit_matrix(out.join("W_e.npy"), &params.w_enc)?;
        s.emit_npy(out.join("b_e.npy"), &vector(&params.b_enc)?)?;
        s.emit_matrix(out.join("W_d.npy"), &params.w_dec)?;
        s.emit_npy(out.join("b_d.npy"), &vector(&params.b_dec)?)?;
        s.emit_json(out.join("meta.json"), &trained.meta(&cfg))?;
        s.emit_json(
            out.join("training.json"),
            &TrainingTrace {
                initial_loss: trained.initial_loss,
                final_loss: trained.final_loss,
                history: &trained.history,
                resampled: &trained.resampled,
            },
        )?;
        Ok(())
    }
}
