//! Classifier models and their differential operators.
//!
//! Everything downstream (saliency, thickness, attacks, training) sees models
//! through the [`Model`] trait: a forward pass producing logits and softmax
//! probabilities, plus an exact gradient of a chosen output with respect to
//! the input. Second-order quantities are derived from that gradient by
//! central finite differences in [`second_order`].

pub mod activation;
pub mod dense;
pub mod io;
pub mod quadratic;
pub mod second_order;

pub use activation::Activation;
pub use dense::{DenseLayer, DenseNet, GapGradMode, ParamGradient};
pub use io::AnyModel;
pub use quadratic::QuadraticModel;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which output a saliency map differentiates: the softmax probability of a
/// class, or its raw pre-softmax score.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Head {
    #[default]
    Probability,
    Logit,
}

/// Result of a forward pass. Layer traces are retained so backward passes can
/// reuse them; models without layers leave those vectors empty.
#[derive(Debug, Clone)]
pub struct ForwardTrace {
    /// Pre-activation values per hidden layer plus the output layer.
    pub pre_activations: Vec<Array1<f64>>,
    /// Post-activation values per hidden layer (inputs to the next layer).
    pub activations: Vec<Array1<f64>>,
    pub logits: Array1<f64>,
    pub probabilities: Array1<f64>,
}

/// A classifier with exact input gradients.
pub trait Model {
    fn input_dim(&self) -> usize;
    fn n_classes(&self) -> usize;

    /// Forward pass. Errors on dimension mismatch or non-finite input.
    fn forward(&self, x: &Array1<f64>) -> Result<ForwardTrace>;

    /// Exact gradient of output `class` (probability or raw score, per
    /// `head`) with respect to the input.
    fn output_gradient(&self, x: &Array1<f64>, class: usize, head: Head) -> Result<Array1<f64>>;

    /// The head this model's explanations differentiate by default.
    fn saliency_head(&self) -> Head;
}

/// Numerically stable softmax.
pub(crate) fn softmax(logits: &Array1<f64>) -> Array1<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps = logits.mapv(|z| (z - max).exp());
    let sum = exps.sum();
    exps / sum
}

pub(crate) fn check_input<M: Model + ?Sized>(net: &M, x: &Array1<f64>) -> Result<()> {
    if x.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.len(),
            net.input_dim()
        )));
    }
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("input contains NaN or infinity".into()));
    }
    Ok(())
}

pub(crate) fn check_class<M: Model + ?Sized>(net: &M, class: usize) -> Result<()> {
    if class >= net.n_classes() {
        return Err(Error::Index(format!(
            "class {} out of range for {} classes",
            class,
            net.n_classes()
        )));
    }
    Ok(())
}

/// Predicted class: argmax of the softmax probabilities, lowest index on ties.
pub fn predict<M: Model + ?Sized>(net: &M, x: &Array1<f64>) -> Result<usize> {
    let trace = net.forward(x)?;
    let mut best = 0usize;
    let mut best_p = trace.probabilities[0];
    for (i, &p) in trace.probabilities.iter().enumerate().skip(1) {
        if p > best_p {
            best = i;
            best_p = p;
        }
    }
    Ok(best)
}

/// Exact gradient of the softmax probability of `class` with respect to the
/// input. The head-flag variant is [`Model::output_gradient`].
pub fn input_gradient<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    class: usize,
) -> Result<Array1<f64>> {
    net.output_gradient(x, class, Head::Probability)
}
