// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use crate::plot::PlotError;

/// Why a command failed; determines the process exit status.
#[derive(Debug, thiserror::Error)]
pub enum Failure {
    /// Bad arguments, configs, or data.
    #[error("{0}")]
    Invalid(String),
    /// A file could not be read or written.
    #[error("{0}")]
    Io(String),
}

impl Failure {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Invalid(_) => 1,
            Self::Io(_) => 2,
        }
    }

    pub fn io(path: &Path, err: std::io::Error) -> Self {
        Self::Io(format!("{}: {err}", path.display()))
    }
}

pub type CliResult<T> = Result<T, Failure>;

pub fn invalid(msg: impl Into<String>) -> Failure {
    Failure::Invalid(msg.into())
}

impl From<featgeom::error::Error> for Failure {
    fn from(e: featgeom::error::Error) -> Self {
        match e {
            featgeom::error::Error::Io(io) => Self::Io(io.to_string()),
            other => Self::Invalid(other.to_string()),
        }
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Self::Invalid(e.to_string())
    }
}

impl From<PlotError> for Failure {
    fn from(e: PlotError) -> Self {
        match e {
            PlotError::Data(msg) => Self::Invalid(msg),
            PlotError::Io(io) => Self::Io(io.to_string()),
        }
    }
}
