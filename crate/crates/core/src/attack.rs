//! Single-step gradient-sign perturbations crafted from a differentiable
//! source model, swept over a list of epsilons and clipped to the observed
//! range of the clean data.
//!
//! The update is x_adv = clamp(x + ε·sign(∇ₓJ(θ,x,y)), low, high) with J the
//! source model's own training loss and y the true labels (untargeted). The
//! gradient never depends on ε, so every epsilon shares one sign pattern.

use std::fs;
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::bytes::Cursor;
use crate::mlp::{grad_input, model_digest, one_hot, MlpModel};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// The swept perturbation budgets: 0.0001 through 0.0009.
pub const DEFAULT_EPSILONS: [f64; 9] = [
    0.0001, 0.0002, 0.0003, 0.0004, 0.0005, 0.0006, 0.0007, 0.0008, 0.0009,
];

#[derive(Debug, Clone, PartialEq)]
pub struct AttackConfig {
    /// Strictly positive, strictly ascending.
    pub epsilons: Vec<f64>,
    pub clip_low: f64,
    pub clip_high: f64,
}

impl AttackConfig {
    pub fn new(epsilons: Vec<f64>, clip_low: f64, clip_high: f64) -> Result<Self> {
        let config = AttackConfig {
            epsilons,
            clip_low,
            clip_high,
        };
        config.validate()?;
        Ok(config)
    }

    pub fn with_default_epsilons(clip_low: f64, clip_high: f64) -> Result<Self> {
        AttackConfig::new(DEFAULT_EPSILONS.to_vec(), clip_low, clip_high)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.clip_low.is_finite() && self.clip_high.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "clip bounds must be finite, got [{}, {}]",
                self.clip_low, self.clip_high
            )));
        }
        if self.clip_low > self.clip_high {
            return Err(Error::InvalidArgument(format!(
                "clip bounds out of order: [{}, {}]",
                self.clip_low, self.clip_high
            )));
        }
        for (i, &eps) in self.epsilons.iter().enumerate() {
            if !(eps > 0.0 && eps.is_finite()) {
                return Err(Error::InvalidArgument(format!(
                    "epsilon {eps} must be positive and finite"
                )));
            }
            if i > 0 {
                if eps == self.epsilons[i - 1] {
                    return Err(Error::DuplicateEpsilon(eps));
                }
                if eps < self.epsilons[i - 1] {
                    return Err(Error::InvalidArgument(format!(
                        "epsilons must ascend: {} before {eps}",
                        self.epsilons[i - 1]
                    )));
                }
            }
        }
        Ok(())
    }

    pub fn clip(&self) -> (f64, f64) {
        (self.clip_low, self.clip_high)
    }
}

/// Which model and which clean inputs a perturbed batch came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    /// Hex SHA-256 of the source model's canonical bytes.
    pub model_digest: String,
    /// Hex SHA-256 of the clean feature matrix's canonical bytes.
    pub clean_digest: String,
}

/// Perturbed inputs for one epsilon.
#[derive(Debug, Clone, PartialEq)]
pub struct AdversarialBatch {
    pub epsilon: f64,
    pub features: Matrix,
    pub provenance: Provenance,
}

/// Hex SHA-256 of a matrix's canonical little-endian bytes.
pub fn matrix_digest(m: &Matrix) -> String {
    let mut hasher = Sha256::new();
    hasher.update(m.to_le_bytes());
    hasher
        .finalize()
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

/// Global scalar min and max over every cell, the clip range for crafted
/// inputs.
pub fn clip_bounds_from(test_features: &Matrix) -> Result<(f64, f64)> {
    if test_features.rows() == 0 || test_features.cols() == 0 {
        return Err(Error::InvalidArgument(
            "cannot take clip bounds of an empty matrix".into(),
        ));
    }
    let mut low = f64::INFINITY;
    let mut high = f64::NEG_INFINITY;
    for &v in test_features.data() {
        low = low.min(v);
        high = high.max(v);
    }
    Ok((low, high))
}

/// One FGSM step against `model`. `epsilon = 0` is permitted as the identity
/// (returns the clean features bit-for-bit, skipping the clip) so tests can
/// anchor the zero-budget limit; the sweep itself requires positive epsilons.
pub fn fgsm(
    model: &MlpModel,
    x: &Matrix,
    labels: &[u8],
    epsilon: f64,
    clip: (f64, f64),
) -> Result<AdversarialBatch> {
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "epsilon must be non-negative and finite, got {epsilon}"
        )));
    }
    let (low, high) = clip;
    if low.is_nan() || high.is_nan() || low > high {
        return Err(Error::InvalidArgument(format!(
            "clip bounds out of order: [{low}, {high}]"
        )));
    }
    if labels.len() != x.rows() {
        return Err(Error::ShapeMismatch(format!(
            "{} rows but {} labels",
            x.rows(),
            labels.len()
        )));
    }
    let provenance = Provenance {
        model_digest: model_digest(model),
        clean_digest: matrix_digest(x),
    };
    let features = if epsilon == 0.0 {
        x.clone()
    } else {
        let targets = one_hot(labels)?;
        let grad = grad_input(model, x, &targets)?;
        x.add(&grad.sign().scale(epsilon)?)?.clip(low, high)?
    };
    Ok(AdversarialBatch {
        epsilon,
        features,
        provenance,
    })
}

/// One batch per configured epsilon. The gradient is recomputed per epsilon;
/// determinism makes the sign pattern identical across the sweep.
pub fn sweep(
    model: &MlpModel,
    x: &Matrix,
    labels: &[u8],
    config: &AttackConfig,
) -> Result<Vec<AdversarialBatch>> {
    config.validate()?;
    config
        .epsilons
        .iter()
        .map(|&eps| fgsm(model, x, labels, eps, config.clip()))
        .collect()
}

const BATCH_MAGIC: &[u8; 4] = b"AFAB";
const BATCH_VERSION: u32 = 1;

/// Export a perturbed batch with its epsilon and provenance digests.
pub fn save_batch(batch: &AdversarialBatch, path: &Path) -> Result<()> {
    let mut out = Vec::new();
    out.extend_from_slice(BATCH_MAGIC);
    out.extend_from_slice(&BATCH_VERSION.to_le_bytes());
    out.extend_from_slice(&batch.epsilon.to_le_bytes());
    for digest in [&batch.provenance.model_digest, &batch.provenance.clean_digest] {
        let bytes = digest.as_bytes();
        out.extend_from_slice(&(bytes.len() as u64).to_le_bytes());
        out.extend_from_slice(bytes);
    }
    out.extend_from_slice(&batch.features.to_le_bytes());
    crate::write_file_atomic(path, &out)
}

/// Read a batch written by `save_batch`.
pub fn load_batch(path: &Path) -> Result<AdversarialBatch> {
    let bytes = fs::read(path)?;
    let mut cur = Cursor::new(&bytes, format!("adversarial batch {}", path.display()));
    if cur.take(4)? != BATCH_MAGIC {
        return Err(Error::Data(format!(
            "{}: not an adversarial batch file (bad magic)",
            path.display()
        )));
    }
    let version = cur.u32()?;
    if version != BATCH_VERSION {
        return Err(Error::Data(format!(
            "{}: unsupported batch version {version}",
            path.display()
        )));
    }
    let epsilon = cur.f64()?;
    let mut digests = Vec::with_capacity(2);
    for _ in 0..2 {
        let len = cur.u64()? as usize;
        let raw = cur.take(len)?;
        digests.push(String::from_utf8(raw.to_vec()).map_err(|_| {
            Error::Data(format!("{}: digest is not UTF-8", path.display()))
        })?);
    }
    let rows = cur.u64()? as usize;
    let cols = cur.u64()? as usize;
    let features = Matrix::from_vec(rows, cols, cur.f64_vec(rows * cols)?)?;
    cur.finish()?;
    let clean_digest = digests.pop().unwrap();
    let model_digest = digests.pop().unwrap();
    Ok(AdversarialBatch {
        epsilon,
        features,
        provenance: Provenance {
            model_digest,
            clean_digest,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{fit, Activation, LayerSpec, TrainConfig};
    use crate::mlp::{bce_loss, surrogate_layers};
    use crate::SplitMix64;

    fn logistic_model() -> (MlpModel, Matrix) {
        let layers = vec![LayerSpec::new(3, 2, Activation::Sigmoid)];
        let w = Matrix::from_vec(3, 2, vec![0.4, -0.7, 0.2, 0.9, -0.5, 0.3]).unwrap();
        let b = Matrix::from_vec(1, 2, vec![0.1, -0.2]).unwrap();
        let model = MlpModel::from_parts(layers, vec![w.clone()], vec![b]).unwrap();
        (model, w)
    }

    fn blob_model_and_data() -> (MlpModel, Matrix, Vec<u8>) {
        let mut rng = SplitMix64::new(40);
        let n = 100;
        let mut data = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u8;
            let center = if class == 0 { -1.0 } else { 1.0 };
            data.push(center + rng.next_symmetric(0.4));
            data.push(center + rng.next_symmetric(0.4));
            labels.push(class);
        }
        let x = Matrix::from_vec(n, 2, data).unwrap();
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 3,
            validation_fraction: 0.2,
            seed: 40,
        };
        let layers = vec![
            LayerSpec::new(2, 8, Activation::Relu),
            LayerSpec::new(8, 2, Activation::Sigmoid),
        ];
        let model = fit(&layers, &x, &labels, &config).unwrap().model;
        (model, x, labels)
    }

    #[test]
    fn clip_bounds_scan_min_and_max() {
        let m = Matrix::from_vec(2, 2, vec![-1.0, 0.0, 2.0, 3.0]).unwrap();
        assert_eq!(clip_bounds_from(&m).unwrap(), (-1.0, 3.0));
        let c = Matrix::from_vec(2, 2, vec![5.0; 4]).unwrap();
        assert_eq!(clip_bounds_from(&c).unwrap(), (5.0, 5.0));
        assert!(clip_bounds_from(&Matrix::zeros(0, 2)).is_err());
    }

    #[test]
    fn zero_epsilon_returns_clean_features_exactly() {
        let (model, _) = logistic_model();
        // x sits outside the clip range on purpose: the identity must not
        // clip.
        let x = Matrix::from_vec(1, 3, vec![2.0, -3.0, 0.5]).unwrap();
        let batch = fgsm(&model, &x, &[1], 0.0, (0.0, 0.5)).unwrap();
        let bits: Vec<u64> = batch.features.data().iter().map(|v| v.to_bits()).collect();
        let expected: Vec<u64> = x.data().iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits, expected);
    }

    #[test]
    fn unclipped_coordinates_move_by_exactly_epsilon_along_known_signs() {
        let (model, w) = logistic_model();
        let x = Matrix::from_vec(1, 3, vec![0.6, -0.3, 0.8]).unwrap();
        let label = 0u8;
        let eps = 0.01;
        let batch = fgsm(&model, &x, &[label], eps, (-100.0, 100.0)).unwrap();

        // Closed form: dL/dx_i = ½ Σ_j (p_j − y_j) W[i][j] for one sample.
        let z0: f64 = 0.6 * 0.4 + -0.3 * 0.2 + 0.8 * -0.5 + 0.1;
        let z1: f64 = 0.6 * -0.7 + -0.3 * 0.9 + 0.8 * 0.3 + -0.2;
        let p = [1.0 / (1.0 + (-z0).exp()), 1.0 / (1.0 + (-z1).exp())];
        let y = [1.0, 0.0];
        for i in 0..3 {
            let g = 0.5 * ((p[0] - y[0]) * w.get(i, 0) + (p[1] - y[1]) * w.get(i, 1));
            let expected = x.get(0, i) + eps * g.signum();
            assert_eq!(
                batch.features.get(0, i).to_bits(),
                expected.to_bits(),
                "coordinate {i}"
            );
        }
    }

    #[test]
    fn outputs_respect_clip_bounds_and_linf_budget() {
        let (model, x, labels) = blob_model_and_data();
        let (low, high) = clip_bounds_from(&x).unwrap();
        let eps = 0.3;
        let batch = fgsm(&model, &x, &labels, eps, (low, high)).unwrap();
        for (adv, clean) in batch.features.data().iter().zip(x.data()) {
            assert!(*adv >= low && *adv <= high);
            assert!(
                (adv - clean).abs() <= eps + 1e-12,
                "displacement {} exceeds {eps}",
                (adv - clean).abs()
            );
        }
    }

    #[test]
    fn clean_features_are_unchanged_by_attack() {
        let (model, x, labels) = blob_model_and_data();
        let before = x.data().to_vec();
        let _ = fgsm(&model, &x, &labels, 0.2, (-10.0, 10.0)).unwrap();
        assert_eq!(x.data(), before.as_slice());
    }

    #[test]
    fn all_epsilons_share_one_sign_pattern() {
        let (model, x, labels) = blob_model_and_data();
        let config = AttackConfig::new(vec![1e-4, 9e-4], -100.0, 100.0).unwrap();
        let batches = sweep(&model, &x, &labels, &config).unwrap();
        let d1 = batches[0].features.sub(&x).unwrap();
        let d9 = batches[1].features.sub(&x).unwrap();
        for (a, b) in d1.data().iter().zip(d9.data()) {
            assert_eq!(a.signum() * f64::from(*a != 0.0), b.signum() * f64::from(*b != 0.0));
            // Monotone budgets: the smaller epsilon never displaces further.
            assert!(a.abs() <= b.abs() + 1e-15);
        }
    }

    #[test]
    fn small_epsilon_does_not_decrease_source_loss() {
        let (model, x, labels) = blob_model_and_data();
        let y = one_hot(&labels).unwrap();
        let clean_loss = bce_loss(&model.forward(&x).unwrap(), &y).unwrap();
        let batch = fgsm(&model, &x, &labels, 1e-4, (-100.0, 100.0)).unwrap();
        let adv_loss = bce_loss(&model.forward(&batch.features).unwrap(), &y).unwrap();
        assert!(
            adv_loss >= clean_loss,
            "adversarial loss {adv_loss} below clean loss {clean_loss}"
        );
    }

    #[test]
    fn default_sweep_covers_nine_epsilons() {
        let (model, x, labels) = blob_model_and_data();
        let config = AttackConfig::with_default_epsilons(-100.0, 100.0).unwrap();
        let batches = sweep(&model, &x, &labels, &config).unwrap();
        assert_eq!(batches.len(), 9);
        let eps: Vec<f64> = batches.iter().map(|b| b.epsilon).collect();
        assert_eq!(eps, DEFAULT_EPSILONS.to_vec());
    }

    #[test]
    fn empty_epsilon_list_yields_empty_sweep() {
        let (model, x, labels) = blob_model_and_data();
        let config = AttackConfig::new(Vec::new(), -1.0, 1.0).unwrap();
        assert!(sweep(&model, &x, &labels, &config).unwrap().is_empty());
    }

    #[test]
    fn config_validation_rejects_bad_epsilon_lists() {
        assert!(matches!(
            AttackConfig::new(vec![1e-4, 1e-4], -1.0, 1.0),
            Err(Error::DuplicateEpsilon(_))
        ));
        assert!(AttackConfig::new(vec![2e-4, 1e-4], -1.0, 1.0).is_err());
        assert!(AttackConfig::new(vec![0.0], -1.0, 1.0).is_err());
        assert!(AttackConfig::new(vec![-1e-4], -1.0, 1.0).is_err());
        assert!(AttackConfig::new(vec![1e-4], 1.0, -1.0).is_err());
        assert!(AttackConfig::new(vec![f64::NAN], -1.0, 1.0).is_err());
    }

    #[test]
    fn provenance_identifies_model_and_clean_data() {
        let (model, x, labels) = blob_model_and_data();
        let a = fgsm(&model, &x, &labels, 1e-4, (-10.0, 10.0)).unwrap();
        let b = fgsm(&model, &x, &labels, 5e-4, (-10.0, 10.0)).unwrap();
        assert_eq!(a.provenance, b.provenance);
        assert_eq!(a.provenance.clean_digest, matrix_digest(&x));
        assert_eq!(a.provenance.model_digest.len(), 64);

        let other = MlpModel::new(&surrogate_layers(2), &mut SplitMix64::new(50)).unwrap();
        let c = fgsm(&other, &x, &labels, 1e-4, (-10.0, 10.0)).unwrap();
        assert_ne!(a.provenance.model_digest, c.provenance.model_digest);
    }

    #[test]
    fn batch_export_round_trips() {
        let (model, x, labels) = blob_model_and_data();
        let batch = fgsm(&model, &x, &labels, 3e-4, (-10.0, 10.0)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("adv.bin");
        save_batch(&batch, &path).unwrap();
        let back = load_batch(&path).unwrap();
        assert_eq!(back.epsilon, batch.epsilon);
        assert_eq!(back.provenance, batch.provenance);
        assert_eq!(back.features.data(), batch.features.data());

        let mut bytes = fs::read(&path).unwrap();
        bytes.truncate(bytes.len() - 5);
        fs::write(&path, &bytes).unwrap();
        assert!(load_batch(&path).is_err());
    }
}
