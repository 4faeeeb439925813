//! Versioned binary cache for a prepared `FlowDataset`, so repeated runs skip
//! CSV parsing and cleaning. Little-endian throughout.

use std::fs;
use std::path::Path;

use super::{FlowDataset, ScalerParams};
use crate::bytes::Cursor;
use crate::numerics::Matrix;
use crate::{Error, Result};

const MAGIC: &[u8; 4] = b"AFDS";
const VERSION: u32 = 1;

/// Write a prepared dataset to `path`, replacing any existing file atomically.
pub fn save_dataset(dataset: &FlowDataset, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let n = dataset.n_rows();
    let d = dataset.n_features();
    out.extend_from_slice(&(n as u64).to_le_bytes());
    out.extend_from_slice(&(d as u64).to_le_bytes());
    for name in &dataset.feature_names {
        let bytes = name.as_bytes();
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    out.extend_from_slice(&dataset.labels);
    for v in dataset.scaler.means.iter().chain(&dataset.scaler.stds) {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out.extend(dataset.scaler.flagged.iter().map(|&f| f as u8));
    for set in [&dataset.train_indices, &dataset.test_indices] {
        out.extend_from_slice(&(set.len() as u64).to_le_bytes());
        for &i in set {
            out.extend_from_slice(&(i as u64).to_le_bytes());
        }
    }
    for v in dataset.features.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    crate::write_file_atomic(path, &out)
}

fn read_indices(cur: &mut Cursor, bound: usize) -> Result<Vec<usize>> {
    let len = cur.u64()? as usize;
    (0..len)
        .map(|_| {
            let v = cur.u64()? as usize;
            if v >= bound {
                return Err(Error::Data(format!(
                    "{}: index {v} out of range for {bound} rows",
                    cur.context()
                )));
            }
            Ok(v)
        })
        .collect()
}

/// Read a dataset cache produced by `save_dataset`.
pub fn load_dataset(path: &Path) -> Result<FlowDataset> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor::new(&bytes, format!("dataset cache {}", path.display()));
    if cur.take(4)? != MAGIC {
        return Err(Error::Data(format!(
            "{}: not a dataset cache (bad magic)",
            path.display()
        )));
    }
    let version = cur.u32()?;
    if version != VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported dataset cache version {version}",
            path.display()
        )));
    }
    let n = cur.u64()? as usize;
    let d = cur.u64()? as usize;
    let mut feature_names = Vec::with_capacity(d);
    for _ in 0..d {
        let len = cur.u64()? as usize;
        let raw = cur.take(len)?;
        feature_names.push(String::from_utf8(raw.to_vec()).map_err(|_| {
            Error::Data(format!("{}: feature name is not UTF-8", path.display()))
        })?);
    }
    let labels = cur.take(n)?.to_vec();
    if labels.iter().any(|&l| l > 1) {
        return Err(Error::Data(format!(
            "{}: labels must be 0 or 1",
            path.display()
        )));
    }
    let means = cur.f64_vec(d)?;
    let stds = cur.f64_vec(d)?;
    let flagged = cur.take(d)?.iter().map(|&b| b != 0).collect();
    let train_indices = read_indices(&mut cur, n)?;
    let test_indices = read_indices(&mut cur, n)?;
    if train_indices.len() + test_indices.len() != n {
        return Err(Error::Data(format!(
            "{}: split sizes {} + {} do not cover {n} rows",
            path.display(),
            train_indices.len(),
            test_indices.len()
        )));
    }
    let features = Matrix::from_vec(n, d, cur.f64_vec(n * d)?)?;
    cur.finish()?;
    Ok(FlowDataset {
        features,
        labels,
        train_indices,
        test_indices,
        scaler: ScalerParams {
            means,
            stds,
            flagged,
        },
        feature_names,
    })
}
