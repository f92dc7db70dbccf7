// SPDX-License-Identifier: MIT OR Apache-2.0

mod analysis;
mod evr;
mod generate;
mod intervene;
mod pack;
mod plotting;
mod train;

use std::path::{Path, PathBuf};

use clap::{ArgMatches, Args, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use analysis::{Cluster, Discover, Rank, Reconstruct, Score};
pub use evr::Evr;
pub use generate::{ClockGeometry, Gen};
pub use intervene::{Intervene, InterveneSweep, Probe};
pub use pack::PackVerify;
pub use plotting::Plot;
pub use train::SaeTrain;

use crate::error::{invalid, CliResult};
use crate::session::{digest_mismatches, RunManifest, Session};

/// A subcommand whose resolved parameters fully determine its outputs.
pub trait Step: Serialize + DeserializeOwned {
    const NAME: &'static str;

    /// Where the run manifest is written.
    fn manifest_path(&self) -> CliResult<PathBuf>;

    fn run(&self, session: &mut Session) -> CliResult<()>;
}

/// Runs `step` without writing anything.
pub fn execute<T: Step>(step: &T) -> CliResult<(Session, PathBuf)> {
    let manifest_path = step.manifest_path()?;
    let mut session = Session::new(T::NAME, serde_json::to_value(step)?);
    step.run(&mut session)?;
    Ok((session, manifest_path))
}

/// Runs `step` and commits its outputs.
pub fn execute_and_commit<T: Step>(step: &T) -> CliResult<RunManifest> {
    let (session, manifest_path) = execute(step)?;
    let manifest = session.commit(&manifest_path)?;
    println!("{}", manifest_path.display());
    Ok(manifest)
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Sample a synthetic dataset.
    Gen(Gen),
    /// Train a sparse autoencoder on activations.
    SaeTrain(SaeTrain),
    /// Cluster the SAE dictionary.
    Cluster(Cluster),
    /// Reconstruct activations from single clusters.
    Reconstruct(Reconstruct),
    /// Separability and mixture indices of clusters or of a 2-D cloud.
    Score(Score),
    /// Order scored clusters.
    Rank(Rank),
    /// Fit a circular probe on labelled activations.
    Probe(Probe),
    /// Write one intervened activation vector.
    Intervene(Intervene),
    /// Sweep interventions over the clock task.
    InterveneSweep(InterveneSweep),
    /// Explanation via regression with residual plots.
    Evr(Evr),
    /// Check the packing bounds on random vectors.
    PackVerify(PackVerify),
    /// Cluster, reconstruct, score, and rank in one run.
    Discover(Discover),
    /// Render an SVG chart.
    Plot(Plot),
    /// Rerun a manifest, or check that it reproduces.
    Replay(Replay),
}

impl Command {
    pub fn invoke(&self, sub: &ArgMatches, config: Option<Map<String, Value>>) -> CliResult<()> {
        fn go<T: Step>(
            args: &T,
            sub: &ArgMatches,
            config: Option<Map<String, Value>>,
        ) -> CliResult<()> {
            execute_and_commit(&crate::resolve(args, sub, config)?).map(|_| ())
        }
        match self {
            Self::Gen(a) => go(a, sub, config),
            Self::SaeTrain(a) => go(a, sub, config),
            Self::Cluster(a) => go(a, sub, config),
            Self::Reconstruct(a) => go(a, sub, config),
            Self::Score(a) => go(a, sub, config),
            Self::Rank(a) => go(a, sub, config),
            Self::Probe(a) => go(a, sub, config),
            Self::Intervene(a) => go(a, sub, config),
            Self::InterveneSweep(a) => go(a, sub, config),
            Self::Evr(a) => go(a, sub, config),
            Self::PackVerify(a) => go(a, sub, config),
            Self::Discover(a) => go(a, sub, config),
            Self::Plot(a) => go(a, sub, config),
            Self::Replay(r) => {
                if config.is_some() {
                    return Err(invalid(
                        "replay takes its parameters from the manifest, not --config",
                    ));
                }
                r.run()
            }
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct Replay {
    /// Manifest written by an earlier run.
    pub manifest: PathBuf,
    /// Recompute and compare digests instead of writing outputs.
    #[arg(long)]
    pub verify: bool,
}

impl Replay {
    fn run(&self) -> CliResult<()> {
        let bytes = std::fs::read(&self.manifest)
            .map_err(|e| crate::error::Failure::io(&self.manifest, e))?;
        let recorded: RunManifest = serde_json::from_slice(&bytes)
            .map_err(|e| invalid(format!("{}: {e}", self.manifest.display())))?;
        let (session, manifest_path) = replay_session(&recorded)?;
        if self.verify {
            let bad = digest_mismatches(&recorded, &session.manifest());
            if !bad.is_empty() {
                return Err(invalid(format!(
                    "run differs from the manifest: {}",
                    bad.join(", ")
                )));
            }
            println!(
                "{}: {} outputs reproduced",
                self.manifest.display(),
                recorded.outputs.len()
            );
            Ok(())
        } else {
            session.commit(&manifest_path).map(|_| ())
        }
    }
}

/// Reruns the command recorded in `manifest` in memory.
pub fn replay_session(manifest: &RunManifest) -> CliResult<(Session, PathBuf)> {
    fn go<T: Step>(params: &Value) -> CliResult<(Session, PathBuf)> {
        let step: T = serde_json::from_value(params.clone())
            .map_err(|e| invalid(format!("{}: {e}", T::NAME)))?;
        execute(&step)
    }
    let p = &manifest.params;
    match manifest.command.as_str() {
        Gen::NAME => go::<Gen>(p),
        SaeTrain::NAME => go::<SaeTrain>(p),
        Cluster::NAME => go::<Cluster>(p),
        Reconstruct::NAME => go::<Reconstruct>(p),
        Score::NAME => go::<Score>(p),
        Rank::NAME => go::<Rank>(p),
        Probe::NAME => go::<Probe>(p),
        Intervene::NAME => go::<Intervene>(p),
        InterveneSweep::NAME => go::<InterveneSweep>(p),
        Evr::NAME => go::<Evr>(p),
        PackVerify::NAME => go::<PackVerify>(p),
        Discover::NAME => go::<Discover>(p),
        Plot::NAME => go::<Plot>(p),
        other => Err(invalid(format!("manifest names unknown command '{other}'"))),
    }
}

/// The value of a path parameter that has no default.
fn required<'a>(value: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    value
        .as_deref()
        .ok_or_else(|| invalid(format!("--{flag} is required")))
}

/// `<file>.manifest.json` next to a single output file.
fn sidecar_manifest(out: &Path) -> PathBuf {
    let mut name = out
        .file_name()
        .map(|n| n.to_os_string())
        .unwrap_or_default();
    name.push(".manifest.json");
    out.with_file_name(name)
}

/// Parses a snake_case enum name through serde.
fn parse_named<T: DeserializeOwned>(name: &str, what: &str) -> CliResult<T> {
    serde_json::from_value(Value::String(name.to_string()))
        .map_err(|_| invalid(format!("unknown {what} '{name}'")))
}

/// A deserializable seed that `resolve` has already filled in.
fn seed_of(seed: Option<u64>) -> u64 {
    seed.unwrap_or(0)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Skipped {
    cluster: usize,
    size: usize,
    reason: String,
}
