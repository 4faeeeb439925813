//! Mini-batch Adam training with a last-fraction validation split and
//! best-validation-loss checkpointing.

use serde::{Deserialize, Serialize};

use super::{accuracy, backprop, bce_loss, labels_from_probs, one_hot, LayerSpec, MlpModel};
use crate::numerics::{Matrix, SplitMix64};
use crate::{Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
/// Added outside the square root, matching the convention the reproduced
/// training stack uses.
pub const ADAM_EPSILON: f64 = 1e-7;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// Fraction of the provided rows held out for validation; taken from the
    /// END of the data, without re-shuffling, so callers control what lands
    /// there by pre-shuffling.
    pub validation_fraction: f64,
    /// Seeds weight initialization and per-epoch batch shuffling in `fit`.
    pub seed: u64,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning rate must be positive and finite, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch size must be at least 1".into()));
        }
        if !(self.validation_fraction >= 0.0 && self.validation_fraction < 1.0) {
            return Err(Error::InvalidArgument(format!(
                "validation fraction must be in [0, 1), got {}",
                self.validation_fraction
            )));
        }
        Ok(())
    }
}

/// First and second moment estimates per parameter, plus the step counter.
#[derive(Debug, Clone)]
pub struct AdamState {
    m_weights: Vec<Matrix>,
    v_weights: Vec<Matrix>,
    m_biases: Vec<Matrix>,
    v_biases: Vec<Matrix>,
    t: u64,
}

impl AdamState {
    pub fn new(model: &MlpModel) -> Self {
        let zeros_like =
            |ms: &[Matrix]| ms.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        AdamState {
            m_weights: zeros_like(model.weights()),
            v_weights: zeros_like(model.weights()),
            m_biases: zeros_like(model.biases()),
            v_biases: zeros_like(model.biases()),
            t: 0,
        }
    }

    pub fn timestep(&self) -> u64 {
        self.t
    }
}

/// One Adam update: m and v decay toward the gradient and its square, the
/// bias-corrected ratio scales the step.
pub fn adam_step(
    model: &mut MlpModel,
    d_weights: &[Matrix],
    d_biases: &[Matrix],
    state: &mut AdamState,
    learning_rate: f64,
) -> Result<()> {
    let n_layers = model.layer_specs().len();
    if d_weights.len() != n_layers || d_biases.len() != n_layers {
        return Err(Error::ShapeMismatch(format!(
            "{n_layers} layers but {} weight and {} bias gradients",
            d_weights.len(),
            d_biases.len()
        )));
    }
    state.t += 1;
    let c1 = 1.0 - ADAM_BETA1.powi(state.t as i32);
    let c2 = 1.0 - ADAM_BETA2.powi(state.t as i32);
    let (weights, biases) = model.params_mut();
    for l in 0..n_layers {
        update_matrix(
            &mut weights[l],
            &d_weights[l],
            &mut state.m_weights[l],
            &mut state.v_weights[l],
            learning_rate,
            c1,
            c2,
        )?;
        update_matrix(
            &mut biases[l],
            &d_biases[l],
            &mut state.m_biases[l],
            &mut state.v_biases[l],
            learning_rate,
            c1,
            c2,
        )?;
    }
    Ok(())
}

fn update_matrix(
    param: &mut Matrix,
    grad: &Matrix,
    m: &mut Matrix,
    v: &mut Matrix,
    lr: f64,
    c1: f64,
    c2: f64,
) -> Result<()> {
    if param.rows() != grad.rows() || param.cols() != grad.cols() {
        return Err(Error::ShapeMismatch(format!(
            "parameter {}x{} vs gradient {}x{}",
            param.rows(),
            param.cols(),
            grad.rows(),
            grad.cols()
        )));
    }
    let (m_data, v_data) = (m.data_mut(), v.data_mut());
    for (i, (p, &g)) in param.data_mut().iter_mut().zip(grad.data()).enumerate() {
        m_data[i] = ADAM_BETA1 * m_data[i] + (1.0 - ADAM_BETA1) * g;
        v_data[i] = ADAM_BETA2 * v_data[i] + (1.0 - ADAM_BETA2) * g * g;
        let m_hat = m_data[i] / c1;
        let v_hat = v_data[i] / c2;
        *p -= lr * m_hat / (v_hat.sqrt() + ADAM_EPSILON);
        if !p.is_finite() {
            return Err(Error::NonFinite(format!("parameter became {p}")));
        }
    }
    Ok(())
}

/// Loss and accuracy recorded after each pass. Training numbers are the
/// sample-weighted mean over that epoch's mini-batches, measured on the
/// forward pass each batch trained on; validation numbers use the weights at
/// epoch end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Where the kept parameters came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub epoch: usize,
    pub val_loss: f64,
}

pub struct TrainOutcome {
    /// Parameters from the best epoch when a checkpoint exists, otherwise the
    /// final parameters.
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    /// `None` when no validation split was configured or no epochs ran.
    pub checkpoint: Option<Checkpoint>,
}

/// Initialize a model from `layers` with the config seed and train it.
pub fn fit(
    layers: &[LayerSpec],
    x: &Matrix,
    labels: &[u8],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let mut rng = SplitMix64::new(config.seed);
    let model = MlpModel::new(layers, &mut rng)?;
    train(model, x, labels, config, &mut rng)
}

/// Mini-batch training loop. `rng` drives only the per-epoch batch order. The
/// last `validation_fraction` of the rows never receives gradient updates;
/// after the final epoch the parameters with the lowest validation loss
/// (earliest epoch on ties) are restored.
pub fn train(
    model: MlpModel,
    x: &Matrix,
    labels: &[u8],
    config: &TrainConfig,
    rng: &mut SplitMix64,
) -> Result<TrainOutcome> {
    config.validate()?;
    let n = x.rows();
    if n == 0 {
        return Err(Error::InvalidArgument("training data is empty".into()));
    }
    if labels.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "{n} rows but {} labels",
            labels.len()
        )));
    }

    // Keras-style split point: the first floor(n·(1−f)) rows train, the rest
    // validate.
    let fit_n = (n as f64 * (1.0 - config.validation_fraction)).floor() as usize;
    let val_n = n - fit_n;
    if config.validation_fraction > 0.0 && val_n == 0 {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {} selects zero of {n} rows",
            config.validation_fraction
        )));
    }
    if fit_n == 0 {
        return Err(Error::InvalidArgument(format!(
            "validation fraction {} leaves no training rows out of {n}",
            config.validation_fraction
        )));
    }

    let fit_indices: Vec<usize> = (0..fit_n).collect();
    let x_fit = x.gather_rows(&fit_indices)?;
    let y_fit: Vec<u8> = labels[..fit_n].to_vec();
    let validation = if val_n > 0 {
        let idx: Vec<usize> = (fit_n..n).collect();
        let x_val = x.gather_rows(&idx)?;
        let y_val = one_hot(&labels[fit_n..])?;
        Some((x_val, y_val, labels[fit_n..].to_vec()))
    } else {
        None
    };

    let mut model = model;
    if config.epochs == 0 {
        return Ok(TrainOutcome {
            model,
            history: Vec::new(),
            checkpoint: None,
        });
    }

    let mut adam = AdamState::new(&model);
    let mut history = Vec::with_capacity(config.epochs);
    let mut best: Option<(Checkpoint, Vec<Matrix>, Vec<Matrix>)> = None;

    for epoch in 1..=config.epochs {
        let order = rng.shuffle_indices(fit_n);
        let mut loss_weighted = 0.0;
        let mut correct = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let xb = x_fit.gather_rows(chunk)?;
            let batch_labels: Vec<u8> = chunk.iter().map(|&i| y_fit[i]).collect();
            let yb = one_hot(&batch_labels)?;
            let grads = backprop(&model, &xb, &yb)?;
            loss_weighted += bce_loss(&grads.probs, &yb)? * chunk.len() as f64;
            correct += labels_from_probs(&grads.probs)
                .iter()
                .zip(&batch_labels)
                .filter(|(p, l)| p == l)
                .count();
            adam_step(
                &mut model,
                &grads.d_weights,
                &grads.d_biases,
                &mut adam,
                config.learning_rate,
            )?;
        }
        let train_loss = loss_weighted / fit_n as f64;
        let train_accuracy = correct as f64 / fit_n as f64;

        let (val_loss, val_accuracy) = match &validation {
            Some((x_val, y_val, val_labels)) => {
                let probs = model.forward(x_val)?;
                let loss = bce_loss(&probs, y_val)?;
                let acc = accuracy(&labels_from_probs(&probs), val_labels)?;
                let improved = best
                    .as_ref()
                    .is_none_or(|(ckpt, _, _)| loss < ckpt.val_loss);
                if improved {
                    best = Some((
                        Checkpoint {
                            epoch,
                            val_loss: loss,
                        },
                        model.weights().to_vec(),
                        model.biases().to_vec(),
                    ));
                }
                (Some(loss), Some(acc))
            }
            None => (None, None),
        };

        history.push(EpochRecord {
            epoch,
            train_loss,
            train_accuracy,
            val_loss,
            val_accuracy,
        });
    }

    let checkpoint = match best {
        Some((ckpt, weights, biases)) => {
            model = MlpModel::from_parts(model.layer_specs().to_vec(), weights, biases)?;
            Some(ckpt)
        }
        None => None,
    };

    Ok(TrainOutcome {
        model,
        history,
        checkpoint,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlp::{surrogate_layers, Activation};

    fn small_layers() -> Vec<LayerSpec> {
        vec![
            LayerSpec::new(2, 8, Activation::Relu),
            LayerSpec::new(8, 2, Activation::Sigmoid),
        ]
    }

    /// Two Gaussian blobs around (−1,−1) and (1,1); linearly separable by
    /// x₁ + x₂ = 0 since the noise never reaches the margin.
    fn separable_data(n: usize, seed: u64) -> (Matrix, Vec<u8>) {
        let mut rng = SplitMix64::new(seed);
        let mut data = Vec::with_capacity(n * 2);
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let class = (i % 2) as u8;
            let center = if class == 0 { -1.0 } else { 1.0 };
            data.push(center + rng.next_symmetric(0.4));
            data.push(center + rng.next_symmetric(0.4));
            labels.push(class);
        }
        (Matrix::from_vec(n, 2, data).unwrap(), labels)
    }

    #[test]
    fn adam_zero_gradient_leaves_parameters_unchanged() {
        let mut rng = SplitMix64::new(1);
        let mut model = MlpModel::new(&small_layers(), &mut rng).unwrap();
        let before: Vec<Vec<f64>> = model.weights().iter().map(|w| w.data().to_vec()).collect();
        let dw: Vec<Matrix> = model
            .weights()
            .iter()
            .map(|w| Matrix::zeros(w.rows(), w.cols()))
            .collect();
        let db: Vec<Matrix> = model
            .biases()
            .iter()
            .map(|b| Matrix::zeros(b.rows(), b.cols()))
            .collect();
        let mut state = AdamState::new(&model);
        adam_step(&mut model, &dw, &db, &mut state, 0.01).unwrap();
        for (w, old) in model.weights().iter().zip(&before) {
            assert_eq!(w.data(), old.as_slice());
        }
        assert_eq!(state.timestep(), 1);
    }

    #[test]
    fn adam_first_step_is_signed_learning_rate() {
        let layers = vec![LayerSpec::new(1, 2, Activation::Linear)];
        let w = Matrix::from_vec(1, 2, vec![0.3, -0.4]).unwrap();
        let b = Matrix::zeros(1, 2);
        let mut model = MlpModel::from_parts(layers, vec![w], vec![b]).unwrap();
        let dw = vec![Matrix::from_vec(1, 2, vec![0.5, -0.02]).unwrap()];
        let db = vec![Matrix::zeros(1, 2)];
        let mut state = AdamState::new(&model);
        let lr = 0.01;
        adam_step(&mut model, &dw, &db, &mut state, lr).unwrap();
        // First step: m̂/√v̂ = g/|g| up to the epsilon in the denominator.
        assert!((model.weights()[0].get(0, 0) - (0.3 - lr)).abs() < lr * 1e-5);
        assert!((model.weights()[0].get(0, 1) - (-0.4 + lr)).abs() < lr * 1e-4);
    }

    #[test]
    fn adam_is_deterministic() {
        let run = || {
            let mut rng = SplitMix64::new(2);
            let mut model = MlpModel::new(&small_layers(), &mut rng).unwrap();
            let dw: Vec<Matrix> = model
                .weights()
                .iter()
                .map(|w| {
                    SplitMix64::new(9)
                        .init_uniform(w.rows(), w.cols(), 0.1)
                        .unwrap()
                })
                .collect();
            let db: Vec<Matrix> = model
                .biases()
                .iter()
                .map(|b| Matrix::zeros(b.rows(), b.cols()))
                .collect();
            let mut state = AdamState::new(&model);
            for _ in 0..5 {
                adam_step(&mut model, &dw, &db, &mut state, 0.001).unwrap();
            }
            model.weights()[0].data().to_vec()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn training_fits_linearly_separable_data() {
        let (x, labels) = separable_data(200, 7);
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 32,
            epochs: 50,
            validation_fraction: 0.2,
            seed: 7,
        };
        let outcome = fit(&small_layers(), &x, &labels, &config).unwrap();
        let acc = accuracy(&outcome.model.predict_labels(&x).unwrap(), &labels).unwrap();
        assert!(acc >= 0.99, "training accuracy {acc}");
        assert_eq!(outcome.history.len(), 50);
    }

    #[test]
    fn zero_epochs_returns_model_unchanged() {
        let (x, labels) = separable_data(40, 3);
        let mut rng = SplitMix64::new(11);
        let model = MlpModel::new(&small_layers(), &mut rng).unwrap();
        let before: Vec<Vec<f64>> = model.weights().iter().map(|w| w.data().to_vec()).collect();
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 0,
            validation_fraction: 0.2,
            seed: 11,
        };
        let outcome = train(model, &x, &labels, &config, &mut rng).unwrap();
        for (w, old) in outcome.model.weights().iter().zip(&before) {
            assert_eq!(w.data(), old.as_slice());
        }
        assert!(outcome.history.is_empty());
        assert!(outcome.checkpoint.is_none());
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        let (x, labels) = separable_data(60, 5);
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 5,
            validation_fraction: 0.25,
            seed: 13,
        };
        let a = fit(&small_layers(), &x, &labels, &config).unwrap();
        let b = fit(&small_layers(), &x, &labels, &config).unwrap();
        for (wa, wb) in a.model.weights().iter().zip(b.model.weights()) {
            let bits_a: Vec<u64> = wa.data().iter().map(|v| v.to_bits()).collect();
            let bits_b: Vec<u64> = wb.data().iter().map(|v| v.to_bits()).collect();
            assert_eq!(bits_a, bits_b);
        }
        assert_eq!(a.history, b.history);
    }

    #[test]
    fn checkpoint_is_the_minimum_validation_loss() {
        let (x, labels) = separable_data(80, 9);
        let config = TrainConfig {
            learning_rate: 0.05,
            batch_size: 8,
            epochs: 12,
            validation_fraction: 0.25,
            seed: 17,
        };
        let outcome = fit(&small_layers(), &x, &labels, &config).unwrap();
        let ckpt = outcome.checkpoint.expect("validation split configured");
        let min_loss = outcome
            .history
            .iter()
            .filter_map(|r| r.val_loss)
            .fold(f64::INFINITY, f64::min);
        assert_eq!(ckpt.val_loss, min_loss);
        // Earliest epoch on ties, so no earlier epoch can be strictly better.
        let first_at_min = outcome
            .history
            .iter()
            .find(|r| r.val_loss == Some(min_loss))
            .unwrap()
            .epoch;
        assert_eq!(ckpt.epoch, first_at_min);

        // The returned parameters reproduce the checkpointed loss.
        let val_start = 60; // floor(80 · 0.75)
        let idx: Vec<usize> = (val_start..80).collect();
        let x_val = x.gather_rows(&idx).unwrap();
        let y_val = one_hot(&labels[val_start..]).unwrap();
        let loss = bce_loss(&outcome.model.forward(&x_val).unwrap(), &y_val).unwrap();
        assert!(
            (loss - ckpt.val_loss).abs() < 1e-12,
            "restored loss {loss} vs checkpoint {}",
            ckpt.val_loss
        );
    }

    #[test]
    fn no_validation_split_means_no_checkpoint() {
        let (x, labels) = separable_data(40, 21);
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 10,
            epochs: 3,
            validation_fraction: 0.0,
            seed: 21,
        };
        let outcome = fit(&small_layers(), &x, &labels, &config).unwrap();
        assert!(outcome.checkpoint.is_none());
        assert!(outcome.history.iter().all(|r| r.val_loss.is_none()));
    }

    #[test]
    fn tiny_dataset_with_large_validation_fraction_is_an_error() {
        let (x, labels) = separable_data(2, 1);
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 4,
            epochs: 1,
            validation_fraction: 0.9,
            seed: 1,
        };
        // floor(2·0.1) = 0 rows left to train on.
        assert!(fit(&small_layers(), &x, &labels, &config).is_err());
    }

    #[test]
    fn config_validation_rejects_bad_values() {
        let base = TrainConfig {
            learning_rate: 0.01,
            batch_size: 4,
            epochs: 1,
            validation_fraction: 0.2,
            seed: 0,
        };
        assert!(base.validate().is_ok());
        assert!(TrainConfig {
            learning_rate: 0.0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            batch_size: 0,
            ..base.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            validation_fraction: 1.0,
            ..base
        }
        .validate()
        .is_err());
    }

    #[test]
    fn short_final_batch_is_processed() {
        // 50 fit rows with batch 16 → batches of 16,16,16,2; four Adam steps
        // per epoch.
        let (x, labels) = separable_data(50, 2);
        let mut rng = SplitMix64::new(30);
        let mut model = MlpModel::new(&small_layers(), &mut rng).unwrap();
        let config = TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 1,
            validation_fraction: 0.0,
            seed: 30,
        };
        let mut adam = AdamState::new(&model);
        let order = rng.shuffle_indices(50);
        for chunk in order.chunks(config.batch_size) {
            let xb = x.gather_rows(chunk).unwrap();
            let yb = one_hot(&chunk.iter().map(|&i| labels[i]).collect::<Vec<_>>()).unwrap();
            let g = backprop(&model, &xb, &yb).unwrap();
            adam_step(&mut model, &g.d_weights, &g.d_biases, &mut adam, 0.01).unwrap();
        }
        assert_eq!(adam.timestep(), 4);
    }

    #[test]
    fn surrogate_architecture_trains_end_to_end() {
        let (x, labels) = separable_data(64, 19);
        let config = TrainConfig {
            learning_rate: 0.005,
            batch_size: 16,
            epochs: 8,
            validation_fraction: 0.25,
            seed: 19,
        };
        let outcome = fit(&surrogate_layers(2), &x, &labels, &config).unwrap();
        assert_eq!(outcome.history.len(), 8);
        assert!(outcome.checkpoint.is_some());
    }
}
