// SPDX-License-Identifier: MIT OR Apache-2.0

//! Input tracking, buffered outputs, and run manifests.
//!
//! A command reads through a [`Session`], which hashes every input, and
//! emits outputs into memory. Nothing touches the output paths until
//! [`Session::commit`], so a failing command leaves no partial results.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use featgeom::npy::NpyArray;
use featgeom::numerics::Matrix;
use featgeom::sae::{SaeMeta, SaeParams};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{invalid, CliResult, Failure};

pub const TOOL_NAME: &str = "featgeom";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: String,
    pub sha256: String,
}

/// Everything needed to rerun a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// The fully resolved parameter record.
    pub params: Value,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
}

#[derive(Debug, Clone)]
pub struct Artifact {
    pub path: PathBuf,
    pub bytes: Vec<u8>,
}

pub struct Session {
    command: String,
    params: Value,
    inputs: BTreeMap<String, String>,
    outputs: Vec<Artifact>,
}

/// Serializes with two-space indentation and a trailing newline.
pub fn pretty_json<T: Serialize>(value: &T) -> CliResult<Vec<u8>> {
    let mut bytes = serde_json::to_vec_pretty(value)?;
    bytes.push(b'\n');
    Ok(bytes)
}

impl Session {
    pub fn new(command: &str, params: Value) -> Self {
        Self {
            command: command.to_string(),
            params,
            inputs: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn read(&mut self, path: &Path) -> CliResult<Vec<u8>> {
        let bytes = fs::read(path).map_err(|e| Failure::io(path, e))?;
        self.inputs
            .insert(path.display().to_string(), sha256_hex(&bytes));
        Ok(bytes)
    }

    pub fn read_npy(&mut self, path: &Path) -> CliResult<NpyArray> {
        let bytes = self.read(path)?;
        NpyArray::from_bytes(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    pub fn read_matrix(&mut self, path: &Path) -> CliResult<Matrix> {
        Ok(self.read_npy(path)?.to_matrix()?)
    }

    pub fn read_labels(&mut self, path: &Path) -> CliResult<Vec<Vec<usize>>> {
        Ok(self.read_npy(path)?.label_columns()?)
    }

    pub fn read_json<T: DeserializeOwned>(&mut self, path: &Path) -> CliResult<T> {
        let bytes = self.read(path)?;
        serde_json::from_slice(&bytes).map_err(|e| invalid(format!("{}: {e}", path.display())))
    }

    /// Loads SAE weights persisted by `sae-train`.
    pub fn read_sae(&mut self, dir: &Path) -> CliResult<(SaeParams, SaeMeta)> {
        let meta: SaeMeta = self.read_json(&dir.join("meta.json"))?;
        let w_enc = self.read_matrix(&dir.join("W_e.npy"))?;
        let b_enc = self.read_npy(&dir.join("b_e.npy"))?.to_f64();
        let w_dec = self.read_matrix(&dir.join("W_d.npy"))?;
        let b_dec = self.read_npy(&dir.join("b_d.npy"))?.to_f64();
        let params = SaeParams::from_parts(w_enc, b_enc, w_dec, b_dec, meta.use_pre_encoder_bias)?;
        if params.m() != meta.m || params.d() != meta.d {
            return Err(invalid(format!(
                "{}: meta.json declares m={}, d={} but weights are m={}, d={}",
                dir.display(),
                meta.m,
                meta.d,
                params.m(),
                params.d()
            )));
        }
        Ok((params, meta))
    }

    pub fn emit(&mut self, path: PathBuf, bytes: Vec<u8>) -> CliResult<()> {
        if self.outputs.iter().any(|a| a.path == path) {
            return Err(invalid(format!(
                "output {} would be written twice",
                path.display()
            )));
        }
        self.outputs.push(Artifact { path, bytes });
        Ok(())
    }

    pub fn emit_npy(&mut self, path: PathBuf, array: &NpyArray) -> CliResult<()> {
        self.emit(path, array.to_bytes())
    }

    pub fn emit_matrix(&mut self, path: PathBuf, m: &Matrix) -> CliResult<()> {
        self.emit_npy(path, &NpyArray::from(m))
    }

    pub fn emit_json<T: Serialize>(&mut self, path: PathBuf, value: &T) -> CliResult<()> {
        let bytes = pretty_json(value)?;
        self.emit(path, bytes)
    }

    pub fn outputs(&self) -> &[Artifact] {
        &self.outputs
    }

    /// The manifest describing this run so far.
    pub fn manifest(&self) -> RunManifest {
        let digests = |items: Vec<(String, String)>| {
            items
                .into_iter()
                .map(|(path, sha256)| FileDigest { path, sha256 })
                .collect()
        };
        RunManifest {
            tool: TOOL_NAME.into(),
            version: TOOL_VERSION.into(),
            command: self.command.clone(),
            seed: self.params.get("seed").and_then(Value::as_u64),
            params: self.params.clone(),
            inputs: digests(self.inputs.clone().into_iter().collect()),
            outputs: digests(
                self.outputs
                    .iter()
                    .map(|a| (a.path.display().to_string(), sha256_hex(&a.bytes)))
                    .collect(),
            ),
        }
    }

    /// Writes every output, then the manifest at `manifest_path`.
    pub fn commit(self, manifest_path: &Path) -> CliResult<RunManifest> {
        let manifest = self.manifest();
        let mut staged = Vec::with_capacity(self.outputs.len() + 1);
        let manifest_bytes = pretty_json(&manifest)?;
        let all = self
            .outputs
            .iter()
            .map(|a| (a.path.as_path(), a.bytes.as_slice()))
            .chain(std::iter::once((manifest_path, manifest_bytes.as_slice())));
        for (path, bytes) in all {
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                fs::create_dir_all(parent).map_err(|e| Failure::io(parent, e))?;
            }
            let tmp = temp_path(path);
            if let Err(e) = fs::write(&tmp, bytes) {
                discard(&staged);
                let _ = fs::remove_file(&tmp);
                return Err(Failure::io(path, e));
            }
            staged.push((tmp, path.to_path_buf()));
        }
        for (tmp, path) in &staged {
            fs::rename(tmp, path).map_err(|e| Failure::io(path, e))?;
        }
        Ok(manifest)
    }
}

fn temp_path(path: &Path) -> PathBuf {
    let name = path
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_default();
    path.with_file_name(format!(".{name}.partial"))
}

fn discard(staged: &[(PathBuf, PathBuf)]) {
    for (tmp, _) in staged {
        let _ = fs::remove_file(tmp);
    }
}

/// Compares a fresh run against the digests recorded in `expected`.
/// Returns the inputs and outputs whose contents differ, appear, or vanish.
pub fn digest_mismatches(expected: &RunManifest, actual: &RunManifest) -> Vec<String> {
    let mut bad = differing("input", &expected.inputs, &actual.inputs);
    bad.extend(differing("output", &expected.outputs, &actual.outputs));
    bad
}

fn differing(role: &str, expected: &[FileDigest], actual: &[FileDigest]) -> Vec<String> {
    let index = |list: &[FileDigest]| -> BTreeMap<String, String> {
        list.iter()
            .map(|d| (d.path.clone(), d.sha256.clone()))
            .collect()
    };
    let (want, got) = (index(expected), index(actual));
    let mut paths: Vec<&String> = want.keys().chain(got.keys()).collect();
    paths.sort();
    paths.dedup();
    paths
        .into_iter()
        .filter(|p| want.get(*p) != got.get(*p))
        .map(|p| format!("{role} {p}"))
        .collect()
}
