//! Exact gradients of the cross-entropy loss by reverse-mode accumulation,
//! with respect to both parameters and inputs.

use super::{Activation, MlpModel, PROB_CLAMP};
use crate::numerics::Matrix;
use crate::{Error, Result};

/// Everything one backward pass produces. `probs` is the forward output the
/// gradients were computed from, so training can reuse it for metrics.
pub struct Gradients {
    pub d_weights: Vec<Matrix>,
    pub d_biases: Vec<Matrix>,
    pub d_input: Matrix,
    pub probs: Matrix,
}

/// Backpropagate the mean one-hot cross-entropy through every layer.
pub fn backprop(model: &MlpModel, x: &Matrix, targets: &Matrix) -> Result<Gradients> {
    let trace = model.trace(x)?;
    let probs = trace.activations.last().unwrap().clone();
    if targets.rows() != probs.rows() || targets.cols() != probs.cols() {
        return Err(Error::ShapeMismatch(format!(
            "targets {}x{} vs outputs {}x{}",
            targets.rows(),
            targets.cols(),
            probs.rows(),
            probs.cols()
        )));
    }
    let specs = model.layer_specs();
    let n_layers = specs.len();

    let mut delta = head_delta(
        specs[n_layers - 1].activation,
        &probs,
        targets,
        &trace.pre_activations[n_layers - 1],
    )?;

    let mut d_weights_rev = Vec::with_capacity(n_layers);
    let mut d_biases_rev = Vec::with_capacity(n_layers);
    let mut d_input = None;
    for l in (0..n_layers).rev() {
        let layer_input = &trace.activations[l];
        d_weights_rev.push(layer_input.transpose().matmul(&delta)?);
        d_biases_rev.push(delta.column_sums()?);
        let d_prev = delta.matmul(&model.weights()[l].transpose())?;
        if l == 0 {
            d_input = Some(d_prev);
        } else {
            let deriv = hidden_derivative(
                specs[l - 1].activation,
                &trace.pre_activations[l - 1],
                &trace.activations[l],
            )?;
            delta = d_prev.mul(&deriv)?;
        }
    }
    d_weights_rev.reverse();
    d_biases_rev.reverse();
    Ok(Gradients {
        d_weights: d_weights_rev,
        d_biases: d_biases_rev,
        d_input: d_input.expect("at least one layer"),
        probs,
    })
}

/// Gradient of the loss with respect to every weight and bias.
pub fn grad_params(
    model: &MlpModel,
    x: &Matrix,
    targets: &Matrix,
) -> Result<(Vec<Matrix>, Vec<Matrix>)> {
    let g = backprop(model, x, targets)?;
    Ok((g.d_weights, g.d_biases))
}

/// Gradient of the loss with respect to each input coordinate, parameters
/// held fixed.
pub fn grad_input(model: &MlpModel, x: &Matrix, targets: &Matrix) -> Result<Matrix> {
    Ok(backprop(model, x, targets)?.d_input)
}

/// dL/dz at the output layer. The loss is the mean over n·k entries, so every
/// term carries a 1/(n·k) factor.
fn head_delta(
    activation: Activation,
    probs: &Matrix,
    targets: &Matrix,
    pre_activation: &Matrix,
) -> Result<Matrix> {
    let scale = 1.0 / probs.data().len() as f64;
    match activation {
        // Fused sigmoid + cross-entropy derivative; the probability clamp in
        // the loss is only a log guard and does not enter here.
        Activation::Sigmoid => probs.sub(targets)?.scale(scale),
        Activation::Softmax => {
            let k = probs.cols();
            let mut data = Vec::with_capacity(probs.data().len());
            for r in 0..probs.rows() {
                let p_row = probs.row(r);
                let y_row = targets.row(r);
                let dp: Vec<f64> = p_row
                    .iter()
                    .zip(y_row)
                    .map(|(&p, &y)| {
                        let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                        scale * (-y / p + (1.0 - y) / (1.0 - p))
                    })
                    .collect();
                // Full softmax Jacobian: dz_j = p_j (dp_j − Σ_m dp_m p_m).
                let dot: f64 = dp.iter().zip(p_row).map(|(&g, &p)| g * p).sum();
                data.extend((0..k).map(|j| p_row[j] * (dp[j] - dot)));
            }
            Matrix::from_vec(probs.rows(), probs.cols(), data)
        }
        Activation::Linear | Activation::Relu => {
            // The loss clamps probabilities, so outputs in the clamped zone
            // contribute no gradient.
            let dp = probs.data().iter().zip(targets.data()).map(|(&p, &y)| {
                if p <= PROB_CLAMP || p >= 1.0 - PROB_CLAMP {
                    0.0
                } else {
                    scale * (-y / p + (1.0 - y) / (1.0 - p))
                }
            });
            let dp = Matrix::from_vec(probs.rows(), probs.cols(), dp.collect())?;
            match activation {
                Activation::Linear => Ok(dp),
                _ => dp.mul(&pre_activation.map("relu'", |z| f64::from(z > 0.0))?),
            }
        }
    }
}

/// Elementwise derivative of a hidden activation, shaped like the layer
/// output. `z` is the pre-activation, `a` the activation output.
fn hidden_derivative(activation: Activation, z: &Matrix, a: &Matrix) -> Result<Matrix> {
    match activation {
        Activation::Relu => z.map("relu'", |v| f64::from(v > 0.0)),
        Activation::Sigmoid => a.map("sigmoid'", |v| v * (1.0 - v)),
        Activation::Linear => z.map("linear'", |_| 1.0),
        Activation::Softmax => Err(Error::InvalidArgument(
            "softmax is only valid on the final layer".into(),
        )),
    }
}
