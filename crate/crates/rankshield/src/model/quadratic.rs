//! Closed-form quadratic two-class model used as a ground-truth fixture.
//!
//! The raw score is `s(x) = x' Q x + w . x + b`, presented as a two-class
//! classifier with logits `(s(x), 0)`. Its explanation differentiates the raw
//! score, so the saliency map is `(Q + Q') x + w` and the input Hessian is the
//! constant `Q + Q'`. Every second-order quantity downstream can therefore be
//! checked against pencil-and-paper values.

use ndarray::{Array1, Array2};

use super::{check_class, check_input, softmax, ForwardTrace, Head, Model};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticModel {
    quad: Array2<f64>,
    linear: Array1<f64>,
    constant: f64,
}

impl QuadraticModel {
    pub fn new(quad: Array2<f64>, linear: Array1<f64>, constant: f64) -> Result<Self> {
        if quad.nrows() != quad.ncols() {
            return Err(Error::Shape(format!(
                "quadratic form must be square, got {}x{}",
                quad.nrows(),
                quad.ncols()
            )));
        }
        if quad.nrows() != linear.len() {
            return Err(Error::Shape(format!(
                "quadratic form is {}-dimensional but linear term has {} entries",
                quad.nrows(),
                linear.len()
            )));
        }
        if quad.nrows() == 0 {
            return Err(Error::Usage("model needs at least one feature".into()));
        }
        let finite = quad.iter().all(|v| v.is_finite())
            && linear.iter().all(|v| v.is_finite())
            && constant.is_finite();
        if !finite {
            return Err(Error::NonFinite("model coefficients".into()));
        }
        Ok(QuadraticModel {
            quad,
            linear,
            constant,
        })
    }

    pub fn quad(&self) -> &Array2<f64> {
        &self.quad
    }

    pub fn linear(&self) -> &Array1<f64> {
        &self.linear
    }

    pub fn constant(&self) -> f64 {
        self.constant
    }

    pub fn score(&self, x: &Array1<f64>) -> f64 {
        x.dot(&self.quad.dot(x)) + self.linear.dot(x) + self.constant
    }

    /// `(Q + Q') x + w`, the exact gradient of the raw score.
    pub fn score_gradient(&self, x: &Array1<f64>) -> Array1<f64> {
        self.quad.dot(x) + self.quad.t().dot(x) + &self.linear
    }

    /// The constant input Hessian `Q + Q'` of the raw score.
    pub fn score_hessian(&self) -> Array2<f64> {
        &self.quad + &self.quad.t()
    }
}

impl Model for QuadraticModel {
    fn input_dim(&self) -> usize {
        self.quad.nrows()
    }

    fn n_classes(&self) -> usize {
        2
    }

    fn forward(&self, x: &Array1<f64>) -> Result<ForwardTrace> {
        check_input(self, x)?;
        let logits = ndarray::array![self.score(x), 0.0];
        let probabilities = softmax(&logits);
        Ok(ForwardTrace {
            pre_activations: Vec::new(),
            activations: Vec::new(),
            logits,
            probabilities,
        })
    }

    fn output_gradient(&self, x: &Array1<f64>, class: usize, head: Head) -> Result<Array1<f64>> {
        check_input(self, x)?;
        check_class(self, class)?;
        let sg = self.score_gradient(x);
        match head {
            Head::Logit => {
                if class == 0 {
                    Ok(sg)
                } else {
                    Ok(Array1::zeros(self.input_dim()))
                }
            }
            Head::Probability => {
                // p_0 = sigmoid(s), so dp_0/dx = p_0 (1 - p_0) ds/dx.
                let trace = self.forward(x)?;
                let p0 = trace.probabilities[0];
                let scale = if class == 0 {
                    p0 * (1.0 - p0)
                } else {
                    -p0 * (1.0 - p0)
                };
                Ok(sg.mapv(|v| v * scale))
            }
        }
    }

    /// Explanations of this model differentiate the raw score, keeping the
    /// saliency map linear in `x` and its Hessian constant.
    fn saliency_head(&self) -> Head {
        Head::Logit
    }
}

/// The standard two-feature fixture: `s(x) = x1^2 + 0.5 x2^2 + 0.5 x1 + 0.1 x2`.
/// At `x = (1, 1)` the saliency map is `(2.5, 1.1)`, the gap between the
/// features is `1.4`, and the Hessian is `diag(2, 1)`.
pub fn standard_quadratic_fixture() -> QuadraticModel {
    QuadraticModel::new(
        ndarray::array![[1.0, 0.0], [0.0, 0.5]],
        ndarray::array![0.5, 0.1],
        0.0,
    )
    .expect("valid fixture")
}
