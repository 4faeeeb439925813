//! Core library for training flow classifiers, crafting gradient-sign
//! perturbations, and measuring how attacks transfer between models.
//!
//! The pipeline: ingest tabular flow records ([`data`]), train small
//! feed-forward classifiers with hand-rolled backpropagation ([`mlp`]),
//! perturb test rows along the loss gradient's sign ([`attack`]), and score
//! how the perturbations degrade both the model that produced the gradients
//! and an independently trained victim ([`metrics`], [`harness`]).
//!
//! Everything is deterministic for a fixed seed: one pinned generator drives
//! initialization, shuffling, and splitting, and all accumulations run in a
//! fixed order, so reports and model files are byte-identical across runs.

pub mod attack;
pub(crate) mod bytes;
pub mod data;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod mlp;
pub mod numerics;
pub mod synthetic;

pub use error::{Error, ErrorCategory, Result, Stage};
pub use numerics::{Matrix, SplitMix64};

use std::path::Path;

/// Write `bytes` to `path` via a sibling temp file and rename, so readers
/// never observe a half-written file.
pub fn write_file_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty());
    let mut tmp = match dir {
        Some(d) => tempfile::NamedTempFile::new_in(d)?,
        None => tempfile::NamedTempFile::new_in(".")?,
    };
    use std::io::Write;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(e.error))?;
    Ok(())
}
