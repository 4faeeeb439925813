//! Deterministic synthetic datasets for exercising the pipeline end to end.
//!
//! The generator produces two Gaussian classes whose means sit at `-shift` and
//! `+shift` on every coordinate. The overlap between the classes is controlled
//! by the ratio `shift / noise`, so callers can dial in an intrinsic error rate
//! and then check that trained models approach it and that perturbations of a
//! known scale degrade them.

use std::fmt::Write as _;
use std::path::Path;

use crate::numerics::{Matrix, SplitMix64};
use crate::{Error, Result};

/// Two overlapping Gaussian classes with alternating labels.
///
/// Row `i` gets label `i % 2`; class 0 is centred at `-shift` on every
/// coordinate and class 1 at `+shift`, both with isotropic standard deviation
/// `noise`. Alternating rather than blocked labels keeps any contiguous slice
/// of rows class-balanced, which in turn keeps train/validation/test splits
/// balanced regardless of how they are carved out.
pub fn gaussian_classes(
    samples: usize,
    dimensions: usize,
    shift: f64,
    noise: f64,
    seed: u64,
) -> Result<(Matrix, Vec<u8>)> {
    if dimensions == 0 {
        return Err(Error::InvalidArgument(
            "synthetic dataset needs at least one dimension".into(),
        ));
    }
    gaussian_classes_with_shifts(samples, &vec![shift; dimensions], noise, seed)
}

/// Like [`gaussian_classes`] but with a per-coordinate shift.
///
/// Coordinates with a zero shift carry no class signal at all; a model must
/// discover which coordinates matter, and models with different architectures
/// or seeds end up weighting the uninformative ones differently. That makes
/// gradient-sign directions partially model-specific, which is what gives a
/// transferred attack less bite than a white-box one.
pub fn gaussian_classes_with_shifts(
    samples: usize,
    shifts: &[f64],
    noise: f64,
    seed: u64,
) -> Result<(Matrix, Vec<u8>)> {
    if samples == 0 || shifts.is_empty() {
        return Err(Error::InvalidArgument(
            "synthetic dataset needs at least one sample and one dimension".into(),
        ));
    }
    if shifts.iter().any(|s| !s.is_finite()) || !noise.is_finite() || noise <= 0.0 {
        return Err(Error::InvalidArgument(format!(
            "synthetic dataset needs finite shifts and positive noise, got shifts {shifts:?} and noise {noise}"
        )));
    }

    let mut rng = SplitMix64::new(seed);
    let mut data = Vec::with_capacity(samples * shifts.len());
    let mut labels = Vec::with_capacity(samples);
    for row in 0..samples {
        let label = (row % 2) as u8;
        let direction = if label == 0 { -1.0 } else { 1.0 };
        for &shift in shifts {
            data.push(direction * shift + noise * standard_normal(&mut rng));
        }
        labels.push(label);
    }
    let features = Matrix::from_vec(samples, shifts.len(), data)?;
    Ok((features, labels))
}

/// One draw from the standard normal distribution via the Box-Muller
/// transform. The radial uniform is mapped to `(0, 1]` so the logarithm is
/// always finite.
fn standard_normal(rng: &mut SplitMix64) -> f64 {
    let radial = 1.0 - rng.next_f64();
    let angle = std::f64::consts::TAU * rng.next_f64();
    (-2.0 * radial.ln()).sqrt() * angle.cos()
}

/// Render a feature matrix and binary labels as a flow-style CSV.
///
/// Feature columns are named `f0..f{d-1}`; the label column is named `Label`
/// with values `BENIGN` (class 0) and `ATTACK` (class 1), matching the
/// ingestion defaults so generated files round-trip through the loader without
/// extra configuration.
pub fn to_csv(features: &Matrix, labels: &[u8]) -> Result<String> {
    if features.rows() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "feature matrix has {} rows but {} labels were supplied",
            features.rows(),
            labels.len()
        )));
    }
    let mut out = String::new();
    for column in 0..features.cols() {
        let _ = write!(out, "f{column},");
    }
    out.push_str("Label\n");
    for (row, &label) in labels.iter().enumerate() {
        for value in features.row(row) {
            let _ = write!(out, "{value},");
        }
        out.push_str(if label == 0 { "BENIGN\n" } else { "ATTACK\n" });
    }
    Ok(out)
}

/// Write the CSV rendering of a synthetic dataset to `path` atomically.
pub fn write_csv(features: &Matrix, labels: &[u8], path: &Path) -> Result<()> {
    let text = to_csv(features, labels)?;
    crate::write_file_atomic(path, text.as_bytes())
}
