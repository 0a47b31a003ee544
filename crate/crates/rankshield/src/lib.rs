//! rankshield: train, attack, and evaluate feature-ranking explanations of
//! small dense classifiers.
//!
//! The crate is organized around a few core ideas:
//!
//! * [`model`] — dense feedforward classifiers with exact first-order
//!   gradients and finite-difference second-order operators (Hessian-vector
//!   products, Hessian rows, spectral norms), plus a closed-form quadratic
//!   test model used as a ground-truth fixture.
//! * [`explain`] — saliency maps (plain gradient, SmoothGrad, integrated
//!   gradients), top-k rankings, and pairwise saliency gaps.
//! * [`thickness`] — Monte-Carlo estimates of how robust a ranking is under
//!   input perturbation, with first-order analytic bounds.
//! * [`training`] — training loops for a vanilla net and a family of
//!   robustness regularizers (weight decay, softplus smoothing, Hessian
//!   penalties, adversarial training, and gap-based ranking regularizers).
//! * [`attacks`] — explanation attacks: projected-gradient ranking attacks,
//!   saliency-distortion attacks, and a trust-region multi-objective attack
//!   built on an embedded simplex LP solver.
//! * [`metrics`] — ranking overlap, AUC, faithfulness (deletion/keep) and
//!   correlation metrics.
//! * [`data`] — CSV ingestion, normalization, stratified splits, and a
//!   synthetic two-Gaussian generator.
//! * [`cli`] — the `rankshield` command-line harness and its run records.

pub mod attacks;
pub mod cli;
pub mod data;
pub mod error;
pub mod explain;
pub mod metrics;
pub mod model;
pub mod thickness;
pub mod training;
pub mod util;

pub use error::{Error, Result};
