// SPDX-License-Identifier: MIT OR Apache-2.0

//! Command-line front end for the featgeom pipeline.
//!
//! Every subcommand resolves its parameters from three layers (built-in
//! defaults, an optional `--config` JSON object, then flags actually given on
//! the command line), runs against in-memory buffers, and commits its outputs
//! together with a [`session::RunManifest`]. Exit status is 0 on success, 1
//! for invalid arguments or data, and 2 for file-system errors.

pub mod commands;
pub mod error;
pub mod plot;
pub mod session;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::parser::ValueSource;
use clap::{ArgMatches, CommandFactory, FromArgMatches, Parser};
use serde_json::{Map, Value};

use crate::commands::{Command, Step};
use crate::error::{invalid, CliResult, Failure};

/// Environment variable holding the default seed.
pub const SEED_ENV: &str = "FEATGEOM_SEED";

#[derive(Debug, Parser)]
#[command(
    name = "featgeom",
    version,
    about = "Discover and validate irreducible multi-dimensional features"
)]
pub struct Cli {
    /// Upper bound on worker threads. Outputs do not depend on it.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// JSON object of parameters for the subcommand; command-line flags win.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// Parses `args` (including the program name), runs the subcommand, and
/// returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let matches = match Cli::command().try_get_matches_from(args) {
        Ok(m) => m,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    match execute(&matches) {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("featgeom: {f}");
            f.exit_code()
        }
    }
}

fn execute(matches: &ArgMatches) -> CliResult<()> {
    let cli = Cli::from_arg_matches(matches).map_err(|e| invalid(e.to_string()))?;
    env_seed()?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(invalid("--threads must be at least 1"));
        }
        // fails only if a pool already exists in this process
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let config = cli.config.as_deref().map(load_config).transpose()?;
    let (_, sub) = matches
        .subcommand()
        .ok_or_else(|| invalid("missing subcommand"))?;
    cli.command.invoke(sub, config)
}

/// The seed from [`SEED_ENV`], or 0 when unset.
pub fn env_seed() -> CliResult<u64> {
    match std::env::var(SEED_ENV) {
        Ok(v) => v
            .trim()
            .parse()
            .map_err(|_| invalid(format!("{SEED_ENV}={v:?} is not a nonnegative integer"))),
        Err(_) => Ok(0),
    }
}

fn load_config(path: &std::path::Path) -> CliResult<Map<String, Value>> {
    let bytes = std::fs::read(path).map_err(|e| Failure::io(path, e))?;
    match serde_json::from_slice(&bytes) {
        Ok(Value::Object(map)) => Ok(map),
        Ok(_) => Err(invalid(format!(
            "{}: config must be a JSON object",
            path.display()
        ))),
        Err(e) => Err(invalid(format!("{}: {e}", path.display()))),
    }
}

/// Layers `config` under the flags that were given explicitly, and fills an
/// unset seed from the environment.
pub fn resolve<T: Step>(
    parsed: &T,
    sub: &ArgMatches,
    config: Option<Map<String, Value>>,
) -> CliResult<T> {
    let mut value = serde_json::to_value(parsed)?;
    let obj = value
        .as_object_mut()
        .ok_or_else(|| invalid("parameters must serialize to an object"))?;
    for (key, v) in config.unwrap_or_default() {
        if !obj.contains_key(&key) {
            return Err(invalid(format!(
                "unknown config key '{key}' for {}",
                T::NAME
            )));
        }
        if sub.value_source(&key) != Some(ValueSource::CommandLine) {
            obj.insert(key, v);
        }
    }
    if obj.get("seed") == Some(&Value::Null) {
        obj.insert("seed".into(), Value::from(env_seed()?));
    }
    serde_json::from_value(value).map_err(|e| invalid(format!("{}: {e}", T::NAME)))
}
