//! Hidden-layer activations.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default softplus sharpness: close enough to ReLU that the two agree
/// within 0.07 at the kink, while keeping two derivatives everywhere.
pub const DEFAULT_SOFTPLUS_RHO: f64 = 10.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Softplus { rho: f64 },
}

impl Activation {
    pub fn softplus_default() -> Self {
        Activation::Softplus {
            rho: DEFAULT_SOFTPLUS_RHO,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if let Activation::Softplus { rho } = self {
            if !(rho.is_finite() && *rho > 0.0) {
                return Err(Error::Usage(format!(
                    "softplus sharpness must be positive and finite, got {rho}"
                )));
            }
        }
        Ok(())
    }

    pub fn apply(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => x.max(0.0),
            Activation::Softplus { rho } => {
                let t = rho * x;
                // For large t, ln(1+e^t)/rho == x to machine precision and
                // e^t would overflow.
                if t > 30.0 {
                    x
                } else {
                    t.exp().ln_1p() / rho
                }
            }
        }
    }

    pub fn deriv(&self, x: f64) -> f64 {
        match *self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Softplus { rho } => sigmoid(rho * x),
        }
    }

    /// Second derivative; `None` for activations without one (ReLU).
    pub fn second_deriv(&self, x: f64) -> Option<f64> {
        match *self {
            Activation::Relu => None,
            Activation::Softplus { rho } => {
                let s = sigmoid(rho * x);
                Some(rho * s * (1.0 - s))
            }
        }
    }

    /// Whether forward-mode differentiation through this activation is exact.
    pub fn has_second_derivative(&self) -> bool {
        matches!(self, Activation::Softplus { .. })
    }
}

pub(crate) fn sigmoid(t: f64) -> f64 {
    if t >= 0.0 {
        1.0 / (1.0 + (-t).exp())
    } else {
        let e = t.exp();
        e / (1.0 + e)
    }
}
