//! Versioned little-endian model files and content digests.
//!
//! Layout: magic, format version, layer count, per-layer (input width, output
//! width, activation tag), then per-layer row-major weights followed by the
//! bias row. Loading re-validates the whole dimension chain.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use super::{Activation, LayerSpec, MlpModel};
use crate::bytes::Cursor;
use crate::numerics::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AFMM";
const VERSION: u32 = 1;

/// Canonical serialized form; `save_model` writes exactly these bytes and
/// `model_digest` hashes them.
pub fn model_bytes(model: &MlpModel) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(model.layer_specs().len() as u64).to_le_bytes());
    for spec in model.layer_specs() {
        out.extend_from_slice(&(spec.input_width as u64).to_le_bytes());
        out.extend_from_slice(&(spec.output_width as u64).to_le_bytes());
        out.push(spec.activation.tag());
    }
    for (w, b) in model.weights().iter().zip(model.biases()) {
        for v in w.data().iter().chain(b.data()) {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

/// Hex SHA-256 of the canonical model bytes; identifies which parameters
/// produced a given artifact.
pub fn model_digest(model: &MlpModel) -> String {
    let mut hasher = Sha256::new();
    hasher.update(model_bytes(model));
    let digest = hasher.finalize();
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn save_model(model: &MlpModel, path: &Path) -> Result<()> {
    crate::write_file_atomic(path, &model_bytes(model))
}

pub fn load_model(path: &Path) -> Result<MlpModel> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor::new(&bytes, format!("model file {}", path.display()));
    if cur.take(4)? != MAGIC {
        return Err(Error::ModelFormat(format!(
            "{}: not a model file (bad magic)",
            path.display()
        )));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::ModelFormat(format!(
            "{}: unsupported model version {version}",
            path.display()
        )));
    }
    let n_layers = cur.u64()? as usize;
    if n_layers == 0 || n_layers > 1024 {
        return Err(Error::ModelFormat(format!(
            "{}: implausible layer count {n_layers}",
            path.display()
        )));
    }
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let input_width = cur.u64()? as usize;
        let output_width = cur.u64()? as usize;
        let activation = Activation::from_tag(cur.u8()?)?;
        layers.push(LayerSpec {
            input_width,
            output_width,
            activation,
        });
    }
    let mut weights = Vec::with_capacity(n_layers);
    let mut biases = Vec::with_capacity(n_layers);
    for spec in &layers {
        let w = cur.f64_vec(spec.input_width * spec.output_width)?;
        weights.push(Matrix::from_vec(spec.input_width, spec.output_width, w)?);
        let b = cur.f64_vec(spec.output_width)?;
        biases.push(Matrix::from_vec(1, spec.output_width, b)?);
    }
    cur.finish()?;
    // from_parts re-checks the dimension chain and head constraints.
    MlpModel::from_parts(layers, weights, biases)
        .map_err(|e| Error::ModelFormat(format!("{}: {e}", path.display())))
}
