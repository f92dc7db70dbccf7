// SPDX-License-Identifier: MIT OR Apache-2.0

//! Discovery and validation of irreducible multi-dimensional features.
//!
//! The pipeline trains a sparse autoencoder on activations, clusters its
//! dictionary, reconstructs activations from one cluster at a time, and scores
//! the resulting 2-D point clouds for irreducibility (separability index and
//! ε-mixture index). Circular probes and subspace interventions check that a
//! discovered circle is causally used; regression-based explanation (EVR)
//! decomposes activations into interpretable functions; the packing module
//! checks the δ-orthogonality bounds on random vector packs.

pub mod clustering;
pub mod error;
pub mod evr;
pub mod interventions;
pub mod irreducibility;
pub mod npy;
pub mod numerics;
pub mod packing;
pub mod reconstruct;
pub mod sae;
pub mod synth;

pub use error::{Error, Result};
pub use numerics::{Matrix, PcaBasis};
pub use sae::{SaeParams, SaeTrainConfig, TrainedSae};
pub use synth::{ActivationMatrix, ClockTask, Distribution};
