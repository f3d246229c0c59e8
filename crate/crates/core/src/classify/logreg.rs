//! Logistic regression fitted by full-batch gradient descent.

use serde::{Deserialize, Serialize};

use crate::ingest::Label;

use super::{both_classes, check_dim, check_training, dot, ClassifyError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRegParams {
    pub learning_rate: f64,
    pub l2: f64,
    pub epochs: usize,
}

impl Default for LogRegParams {
    fn default() -> Self {
        LogRegParams {
            learning_rate: 0.1,
            l2: 1e-4,
            epochs: 500,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LogRegModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    /// Objective value before each update, plus the final value.
    pub loss_history: Vec<f64>,
}

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^z)` without overflow.
fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn target(label: Label) -> f64 {
    match label {
        Label::Fall => 1.0,
        Label::Adl => 0.0,
    }
}

/// Mean negative log-likelihood plus `l2/2 · |w|²` (bias unpenalised), and
/// its gradient with respect to `(w, b)`.
pub fn objective(
    weights: &[f64],
    bias: f64,
    x: &[Vec<f64>],
    y: &[Label],
    l2: f64,
) -> (f64, Vec<f64>, f64) {
    let n = x.len() as f64;
    let mut loss = 0.0;
    let mut grad = vec![0.0; weights.len()];
    let mut grad_b = 0.0;
    for (row, &label) in x.iter().zip(y) {
        let z = dot(weights, row) + bias;
        let t = target(label);
        loss += softplus(z) - t * z;
        let r = sigmoid(z) - t;
        for (g, v) in grad.iter_mut().zip(row) {
            *g += r * v;
        }
        grad_b += r;
    }
    loss /= n;
    grad_b /= n;
    for (g, w) in grad.iter_mut().zip(weights) {
        *g = *g / n + l2 * w;
    }
    loss += 0.5 * l2 * dot(weights, weights);
    (loss, grad, grad_b)
}

/// Gradient descent from all-zero parameters.
pub fn lr_fit(x: &[Vec<f64>], y: &[Label], params: &LogRegParams) -> Result<LogRegModel, ClassifyError> {
    let dim = check_training(x, y)?;
    both_classes(y)?;
    if !(params.learning_rate > 0.0 && params.learning_rate.is_finite()) {
        return Err(ClassifyError::Param("learning_rate must be positive".into()));
    }
    if !(params.l2 >= 0.0 && params.l2.is_finite()) {
        return Err(ClassifyError::Param("l2 must be non-negative".into()));
    }
    let mut weights = vec![0.0; dim];
    let mut bias = 0.0;
    let mut loss_history = Vec::with_capacity(params.epochs + 1);
    for epoch in 0..=params.epochs {
        let (loss, grad, grad_b) = objective(&weights, bias, x, y, params.l2);
        if !loss.is_finite() {
            return Err(ClassifyError::Diverged { epoch, loss });
        }
        loss_history.push(loss);
        if epoch == params.epochs {
            break;
        }
        for (w, g) in weights.iter_mut().zip(&grad) {
            *w -= params.learning_rate * g;
        }
        bias -= params.learning_rate * grad_b;
    }
    if weights.iter().any(|w| !w.is_finite()) || !bias.is_finite() {
        return Err(ClassifyError::Diverged {
            epoch: params.epochs,
            loss: f64::NAN,
        });
    }
    Ok(LogRegModel {
        weights,
        bias,
        loss_history,
    })
}

impl LogRegModel {
    pub fn probability(&self, x: &[f64]) -> Result<f64, ClassifyError> {
        check_dim(self.weights.len(), x)?;
        Ok(sigmoid(dot(&self.weights, x) + self.bias))
    }

    /// `Fall` when the fall probability is at least 0.5.
    pub fn predict(&self, x: &[f64]) -> Result<Label, ClassifyError> {
        Ok(if self.probability(x)? >= 0.5 {
            Label::Fall
        } else {
            Label::Adl
        })
    }
}
