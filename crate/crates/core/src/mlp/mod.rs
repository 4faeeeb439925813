//! Feed-forward binary classifiers with hand-rolled forward and backward
//! passes.
//!
//! Both study models share the same machinery: fully connected layers, ReLU
//! between hidden layers, and a 2-unit head (sigmoid for the surrogate,
//! softmax for the target) trained with one-hot binary cross-entropy under
//! Adam. Inference through the [`Predictor`] trait exposes only predictions,
//! which is what keeps the attacked model a black box to the attacker.

mod grad;
mod io;
mod train;

pub use grad::{backprop, grad_input, grad_params, Gradients};
pub use io::{load_model, model_bytes, model_digest, save_model};
pub use train::{
    adam_step, fit, train, AdamState, Checkpoint, EpochRecord, TrainConfig, TrainOutcome,
    ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON,
};

use std::fmt;

use crate::numerics::{Matrix, SplitMix64};
use crate::{Error, Result};

/// Every classifier head has exactly two units: index 0 = benign, 1 = attack.
pub const OUTPUT_WIDTH: usize = 2;

/// Probabilities are clamped to `[PROB_CLAMP, 1 − PROB_CLAMP]` before logs so
/// saturated outputs cannot produce an infinite loss.
pub const PROB_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Sigmoid,
    Softmax,
    Linear,
}

impl Activation {
    pub(crate) fn tag(self) -> u8 {
        match self {
            Activation::Relu => 0,
            Activation::Sigmoid => 1,
            Activation::Softmax => 2,
            Activation::Linear => 3,
        }
    }

    pub(crate) fn from_tag(tag: u8) -> Result<Self> {
        match tag {
            0 => Ok(Activation::Relu),
            1 => Ok(Activation::Sigmoid),
            2 => Ok(Activation::Softmax),
            3 => Ok(Activation::Linear),
            other => Err(Error::ModelFormat(format!("unknown activation tag {other}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            Activation::Relu => "relu",
            Activation::Sigmoid => "sigmoid",
            Activation::Softmax => "softmax",
            Activation::Linear => "linear",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerSpec {
    pub input_width: usize,
    pub output_width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(input_width: usize, output_width: usize, activation: Activation) -> Self {
        LayerSpec {
            input_width,
            output_width,
            activation,
        }
    }
}

/// Attacker-side model: hidden widths 60, 50, 30 with a 2-unit sigmoid head.
pub fn surrogate_layers(input_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input_dim, 60, Activation::Relu),
        LayerSpec::new(60, 50, Activation::Relu),
        LayerSpec::new(50, 30, Activation::Relu),
        LayerSpec::new(30, OUTPUT_WIDTH, Activation::Sigmoid),
    ]
}

/// Victim-side model: hidden widths 50, 25 with a 2-unit softmax head.
pub fn target_layers(input_dim: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::new(input_dim, 50, Activation::Relu),
        LayerSpec::new(50, 25, Activation::Relu),
        LayerSpec::new(25, OUTPUT_WIDTH, Activation::Softmax),
    ]
}

/// Fully connected network. Weights are input×output so a batch propagates as
/// `x · W + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    layers: Vec<LayerSpec>,
    weights: Vec<Matrix>,
    biases: Vec<Matrix>,
}

impl MlpModel {
    /// Build a model with seeded uniform weights in ±√(6/(fan_in+fan_out))
    /// and zero biases.
    pub fn new(layers: &[LayerSpec], rng: &mut SplitMix64) -> Result<Self> {
        validate_layer_chain(layers)?;
        let mut weights = Vec::with_capacity(layers.len());
        let mut biases = Vec::with_capacity(layers.len());
        for spec in layers {
            let limit = (6.0 / (spec.input_width + spec.output_width) as f64).sqrt();
            weights.push(rng.init_uniform(spec.input_width, spec.output_width, limit)?);
            biases.push(Matrix::zeros(1, spec.output_width));
        }
        Ok(MlpModel {
            layers: layers.to_vec(),
            weights,
            biases,
        })
    }

    /// Assemble a model from explicit parameters, validating every shape.
    pub fn from_parts(
        layers: Vec<LayerSpec>,
        weights: Vec<Matrix>,
        biases: Vec<Matrix>,
    ) -> Result<Self> {
        validate_layer_chain(&layers)?;
        if weights.len() != layers.len() || biases.len() != layers.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} layers but {} weight and {} bias matrices",
                layers.len(),
                weights.len(),
                biases.len()
            )));
        }
        for (i, spec) in layers.iter().enumerate() {
            let w = &weights[i];
            let b = &biases[i];
            if w.rows() != spec.input_width || w.cols() != spec.output_width {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: weight is {}x{}, spec wants {}x{}",
                    w.rows(),
                    w.cols(),
                    spec.input_width,
                    spec.output_width
                )));
            }
            if b.rows() != 1 || b.cols() != spec.output_width {
                return Err(Error::ShapeMismatch(format!(
                    "layer {i}: bias is {}x{}, spec wants 1x{}",
                    b.rows(),
                    b.cols(),
                    spec.output_width
                )));
            }
        }
        Ok(MlpModel {
            layers,
            weights,
            biases,
        })
    }

    pub fn layer_specs(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn weights(&self) -> &[Matrix] {
        &self.weights
    }

    pub fn biases(&self) -> &[Matrix] {
        &self.biases
    }

    pub(crate) fn params_mut(&mut self) -> (&mut [Matrix], &mut [Matrix]) {
        (&mut self.weights, &mut self.biases)
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].input_width
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.input_width * l.output_width + l.output_width)
            .sum()
    }

    /// Forward pass returning the head probabilities, one row per sample.
    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.trace(x)?.activations.pop().expect("nonempty"))
    }

    /// Forward pass that keeps per-layer pre-activations and activations for
    /// backpropagation. `activations[0]` is the input; `activations[l+1]` and
    /// `pre_activations[l]` belong to layer `l`.
    pub(crate) fn trace(&self, x: &Matrix) -> Result<ForwardTrace> {
        if x.cols() != self.input_width() {
            return Err(Error::ShapeMismatch(format!(
                "input has {} features, model expects {}",
                x.cols(),
                self.input_width()
            )));
        }
        let mut activations = Vec::with_capacity(self.layers.len() + 1);
        let mut pre_activations = Vec::with_capacity(self.layers.len());
        activations.push(x.clone());
        for (spec, (w, b)) in self
            .layers
            .iter()
            .zip(self.weights.iter().zip(&self.biases))
        {
            let z = activations.last().unwrap().matmul(w)?.add_row_broadcast(b)?;
            let a = apply_activation(&z, spec.activation)?;
            pre_activations.push(z);
            activations.push(a);
        }
        Ok(ForwardTrace {
            pre_activations,
            activations,
        })
    }

    /// Hard 0/1 predictions: argmax over the two output units, ties broken
    /// toward class 0.
    pub fn predict_labels(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(labels_from_probs(&self.forward(x)?))
    }
}

pub(crate) struct ForwardTrace {
    pub pre_activations: Vec<Matrix>,
    pub activations: Vec<Matrix>,
}

fn validate_layer_chain(layers: &[LayerSpec]) -> Result<()> {
    if layers.is_empty() {
        return Err(Error::InvalidArgument("model needs at least one layer".into()));
    }
    for window in layers.windows(2) {
        if window[0].output_width != window[1].input_width {
            return Err(Error::ShapeMismatch(format!(
                "layer widths do not chain: {} -> {}",
                window[0].output_width, window[1].input_width
            )));
        }
    }
    for (i, spec) in layers.iter().enumerate() {
        if spec.input_width == 0 || spec.output_width == 0 {
            return Err(Error::InvalidArgument(format!(
                "layer {i} has a zero width"
            )));
        }
        if spec.activation == Activation::Softmax && i != layers.len() - 1 {
            return Err(Error::InvalidArgument(
                "softmax is only valid on the final layer".into(),
            ));
        }
    }
    let out = layers.last().unwrap().output_width;
    if out != OUTPUT_WIDTH {
        return Err(Error::InvalidArgument(format!(
            "output layer must have {OUTPUT_WIDTH} units, got {out}"
        )));
    }
    Ok(())
}

fn apply_activation(z: &Matrix, activation: Activation) -> Result<Matrix> {
    match activation {
        Activation::Relu => z.map("relu", |v| v.max(0.0)),
        Activation::Sigmoid => z.map("sigmoid", sigmoid),
        Activation::Linear => Ok(z.clone()),
        Activation::Softmax => {
            let mut data = Vec::with_capacity(z.rows() * z.cols());
            for r in 0..z.rows() {
                let row = z.row(r);
                let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
                let sum: f64 = exps.iter().sum();
                data.extend(exps.iter().map(|e| e / sum));
            }
            Matrix::from_vec(z.rows(), z.cols(), data)
        }
    }
}

/// Numerically stable logistic function.
fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Encode 0/1 labels as an n×2 one-hot matrix.
pub fn one_hot(labels: &[u8]) -> Result<Matrix> {
    let mut data = Vec::with_capacity(labels.len() * OUTPUT_WIDTH);
    for &l in labels {
        match l {
            0 => data.extend_from_slice(&[1.0, 0.0]),
            1 => data.extend_from_slice(&[0.0, 1.0]),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "label {other} is not binary"
                )))
            }
        }
    }
    Matrix::from_vec(labels.len(), OUTPUT_WIDTH, data)
}

/// Mean over all n×2 entries of −[y·ln p + (1−y)·ln(1−p)], with probabilities
/// clamped away from 0 and 1 before the logs.
pub fn bce_loss(probs: &Matrix, targets: &Matrix) -> Result<f64> {
    if probs.rows() != targets.rows() || probs.cols() != targets.cols() {
        return Err(Error::ShapeMismatch(format!(
            "loss: probs {}x{} vs targets {}x{}",
            probs.rows(),
            probs.cols(),
            targets.rows(),
            targets.cols()
        )));
    }
    if probs.rows() == 0 {
        return Err(Error::InvalidArgument("loss over zero samples".into()));
    }
    let mut sum = 0.0;
    for (&p, &y) in probs.data().iter().zip(targets.data()) {
        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
        sum -= y * p.ln() + (1.0 - y) * (1.0 - p).ln();
    }
    let loss = sum / probs.data().len() as f64;
    if !loss.is_finite() {
        return Err(Error::NonFinite(format!("loss {loss}")));
    }
    Ok(loss)
}

/// Argmax over the two output units; ties break toward class 0.
pub fn labels_from_probs(probs: &Matrix) -> Vec<u8> {
    (0..probs.rows())
        .map(|r| {
            let row = probs.row(r);
            u8::from(row[1] > row[0])
        })
        .collect()
}

/// Fraction of predictions matching the labels.
pub fn accuracy(predicted: &[u8], labels: &[u8]) -> Result<f64> {
    if predicted.len() != labels.len() || labels.is_empty() {
        return Err(Error::ShapeMismatch(format!(
            "accuracy over {} predictions and {} labels",
            predicted.len(),
            labels.len()
        )));
    }
    let correct = predicted
        .iter()
        .zip(labels)
        .filter(|(p, l)| p == l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

/// Inference-only view of a trained model. The attack transfer study hands the
/// victim model to the attacker through this trait, so only predictions —
/// never parameters or gradients — cross the boundary.
pub trait Predictor {
    fn predict_probs(&self, x: &Matrix) -> Result<Matrix>;

    fn predict_labels(&self, x: &Matrix) -> Result<Vec<u8>> {
        Ok(labels_from_probs(&self.predict_probs(x)?))
    }
}

impl Predictor for MlpModel {
    fn predict_probs(&self, x: &Matrix) -> Result<Matrix> {
        self.forward(x)
    }
}
