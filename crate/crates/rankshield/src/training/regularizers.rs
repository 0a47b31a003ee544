//! Regularizer values and parameter gradients for the defense trainers.
//!
//! Every penalty returns `(value, d value / d params)` so the training loop
//! can fold it into the classification gradient with one axpy. Terms that
//! depend on a derived direction (a power-iteration eigenvector, a finite
//! difference probe, a Hessian row) freeze that direction and differentiate
//! only the contraction against it. For vector norms this is the exact
//! envelope gradient; for the spectral norm it is the usual Danskin gradient
//! at the converged singular pair.

use ndarray::Array1;

use crate::attacks::gap_sum_coefficients;
use crate::error::{Error, Result};
use crate::explain::{ranking, simple_gradient, RankOrder};
use crate::model::second_order::{
    default_fd_step, exact_hessian, frobenius_norm, hessian_spectral_norm_with_vector, hvp_default,
};
use crate::model::{predict, DenseNet, Model, ParamGradient};

use super::pairs::{select_pairs, PairScheme};
use super::TrainMethod;

/// Power-iteration budget for spectral terms inside training steps.
pub const DEFAULT_POWER_ITERS: usize = 30;
/// Convergence tolerance for those power iterations.
pub const POWER_TOL: f64 = 1e-8;
/// Probe length for the estimated-Hessian penalty.
pub const DEFAULT_EST_H_KAPPA: f64 = 1e-3;
/// Fixed start seed for in-training power iterations, so a training run is
/// deterministic without threading an extra RNG stream through every batch.
const SPECTRAL_SEED: u64 = 0xA11CE;
/// Below this, direction vectors are too short to normalize against.
const DIRECTION_FLOOR: f64 = 1e-12;

/// Signed coefficient vector for a pair list: `sum_pairs h = c . I`.
fn pair_coefficients(n: usize, pairs: &[(usize, usize)]) -> Array1<f64> {
    let mut c = Array1::zeros(n);
    for &(i, j) in pairs {
        c[i] += 1.0;
        c[j] -= 1.0;
    }
    c
}

/// Sum of saliency gaps over `pairs` and its parameter gradient, collapsed
/// into a single directional backward pass.
fn gap_sum_param_gradient(
    net: &DenseNet,
    x: &Array1<f64>,
    class: usize,
    pairs: &[(usize, usize)],
) -> Result<(f64, ParamGradient)> {
    let coeffs = pair_coefficients(net.input_dim(), pairs);
    let head = net.saliency_head();
    let mode = net.preferred_gap_grad_mode();
    net.directional_saliency_param_gradient(x, &coeffs, class, head, mode)
}

/// Spectral norm of the saliency Hessian and its Danskin parameter gradient.
///
/// With `u*, v*` the converged singular pair, `sigma = u* . H v*` and the
/// contraction is recovered from input shifts along `v*`:
/// `u* . H v* = d/ds [u* . I(x + s v*)]`, so the parameter gradient is a
/// central difference of two directional saliency backward passes.
fn spectral_penalty(
    net: &DenseNet,
    x: &Array1<f64>,
    class: usize,
    power_iters: usize,
) -> Result<(f64, ParamGradient)> {
    let (sigma, v) =
        hessian_spectral_norm_with_vector(net, x, class, power_iters, POWER_TOL, SPECTRAL_SEED)?;
    if sigma <= DIRECTION_FLOOR {
        return Ok((sigma, ParamGradient::zeros_like(net)));
    }
    let hv = hvp_default(net, x, &v, class)?;
    let hv_norm = hv.dot(&hv).sqrt();
    if hv_norm <= DIRECTION_FLOOR {
        return Ok((sigma, ParamGradient::zeros_like(net)));
    }
    let u = &hv / hv_norm;
    let head = net.saliency_head();
    let mode = net.preferred_gap_grad_mode();
    let s = default_fd_step(x);
    let x_plus = x + &(&v * s);
    let x_minus = x - &(&v * s);
    let (_, plus) = net.directional_saliency_param_gradient(&x_plus, &u, class, head, mode)?;
    let (_, minus) = net.directional_saliency_param_gradient(&x_minus, &u, class, head, mode)?;
    let mut grad = plus;
    grad.axpy(-1.0, &minus);
    grad.scale(1.0 / (2.0 * s));
    Ok((sigma, grad))
}

/// Ranking regularizer: `-lambda1 * sum_pairs h + lambda2 * ||H||_2`, with
/// pairs drawn from the current saliency ranking by `scheme`.
///
/// Both lambdas must be finite and non-negative. A zero lambda skips its term
/// entirely, so `(0, 0)` returns an exact zero value and gradient without
/// touching the model.
pub fn r2et_regularizer(
    net: &DenseNet,
    x: &Array1<f64>,
    k: usize,
    lambda1: f64,
    lambda2: f64,
    scheme: PairScheme,
) -> Result<(f64, ParamGradient)> {
    for (name, l) in [("lambda1", lambda1), ("lambda2", lambda2)] {
        if !(l.is_finite() && l >= 0.0) {
            return Err(Error::Usage(format!(
                "{name} must be finite and >= 0, got {l}"
            )));
        }
    }
    let n = net.input_dim();
    if k == 0 || k >= n {
        return Err(Error::Usage(format!(
            "top-k size must satisfy 0 < k < {n}, got {k}"
        )));
    }
    let mut value = 0.0;
    let mut grad = ParamGradient::zeros_like(net);
    if lambda1 == 0.0 && lambda2 == 0.0 {
        return Ok((value, grad));
    }
    let class = predict(net, x)?;
    if lambda1 > 0.0 {
        let saliency = simple_gradient(net, x)?;
        let rank = ranking(&saliency, k, RankOrder::Signed)?;
        let pairs = select_pairs(&rank, &saliency.scores, scheme)?;
        let (sum, pg) = gap_sum_param_gradient(net, x, class, &pairs)?;
        value -= lambda1 * sum;
        grad.axpy(-lambda1, &pg);
    }
    if lambda2 > 0.0 {
        let (sigma, pg) = spectral_penalty(net, x, class, DEFAULT_POWER_ITERS)?;
        value += lambda2 * sigma;
        grad.axpy(lambda2, &pg);
    }
    Ok((value, grad))
}

/// Penalty term for the non-ranking baselines. Methods without a penalty
/// (vanilla, softplus substitution, adversarial training) return exact zeros.
pub fn baseline_regularizer(
    net: &DenseNet,
    x: &Array1<f64>,
    method: &TrainMethod,
) -> Result<(f64, ParamGradient)> {
    match method {
        TrainMethod::Wd { lambda } => weight_decay(net, *lambda),
        TrainMethod::EstH { alpha, kappa } => estimated_hessian(net, x, *alpha, *kappa),
        TrainMethod::ExactH { alpha } => exact_hessian_penalty(net, x, *alpha),
        TrainMethod::Ssr { alpha, power_iters } => {
            if !(alpha.is_finite() && *alpha >= 0.0) {
                return Err(Error::Usage(format!(
                    "curvature alpha must be finite and >= 0, got {alpha}"
                )));
            }
            let class = predict(net, x)?;
            let (sigma, mut grad) = spectral_penalty(net, x, class, *power_iters)?;
            grad.scale(*alpha);
            Ok((alpha * sigma, grad))
        }
        _ => Ok((0.0, ParamGradient::zeros_like(net))),
    }
}

/// `lambda * sum_l ||W_l||_F^2` over weight matrices only; biases are free.
fn weight_decay(net: &DenseNet, lambda: f64) -> Result<(f64, ParamGradient)> {
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Usage(format!(
            "weight decay lambda must be finite and >= 0, got {lambda}"
        )));
    }
    let mut value = 0.0;
    let mut grad = ParamGradient::zeros_like(net);
    for (l, layer) in net.layers().iter().enumerate() {
        value += layer.weights.iter().map(|w| w * w).sum::<f64>();
        grad.weights[l].assign(&(&layer.weights * (2.0 * lambda)));
    }
    Ok((lambda * value, grad))
}

/// Estimated curvature along the steepest saliency direction:
/// `alpha * ||(g(x + kappa v) - g(x)) / kappa||` with
/// `v = sign(g(x)) / ||sign(g(x))||`. The probe direction and the final
/// normalization direction are frozen for the gradient.
fn estimated_hessian(
    net: &DenseNet,
    x: &Array1<f64>,
    alpha: f64,
    kappa: f64,
) -> Result<(f64, ParamGradient)> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Usage(format!(
            "curvature alpha must be finite and >= 0, got {alpha}"
        )));
    }
    if !(kappa.is_finite() && kappa > 0.0) {
        return Err(Error::Usage(format!(
            "probe length kappa must be finite and > 0, got {kappa}"
        )));
    }
    let class = predict(net, x)?;
    let head = net.saliency_head();
    let g0 = net.output_gradient(x, class, head)?;
    let sign = g0.mapv(f64::signum);
    let sign_norm = sign.dot(&sign).sqrt();
    if sign_norm <= DIRECTION_FLOOR {
        return Ok((0.0, ParamGradient::zeros_like(net)));
    }
    let v = &sign / sign_norm;
    let x_probe = x + &(&v * kappa);
    let g1 = net.output_gradient(&x_probe, class, head)?;
    let d = (&g1 - &g0) / kappa;
    let d_norm = d.dot(&d).sqrt();
    let value = alpha * d_norm;
    if d_norm <= DIRECTION_FLOOR {
        return Ok((value, ParamGradient::zeros_like(net)));
    }
    // d ||d|| / d params = d_hat . (d g1/dw - d g0/dw) / kappa, two
    // directional backward passes against the frozen unit residual.
    let d_hat = &d / d_norm;
    let mode = net.preferred_gap_grad_mode();
    let (_, probe) = net.directional_saliency_param_gradient(&x_probe, &d_hat, class, head, mode)?;
    let (_, base) = net.directional_saliency_param_gradient(x, &d_hat, class, head, mode)?;
    let mut grad = probe;
    grad.axpy(-1.0, &base);
    grad.scale(alpha / kappa);
    Ok((value, grad))
}

/// `alpha * ||H||_F` from the dense saliency Hessian. Each row is frozen and
/// the gradient contracts row by row:
/// `d ||H||_F / dw = (1 / ||H||_F) sum_i r_i . d r_i / dw`, with
/// `r_i . d r_i / dw` a central difference of directional backward passes at
/// `x +- s e_i`. Inherits the dimension cap of the exact Hessian.
fn exact_hessian_penalty(
    net: &DenseNet,
    x: &Array1<f64>,
    alpha: f64,
) -> Result<(f64, ParamGradient)> {
    if !(alpha.is_finite() && alpha >= 0.0) {
        return Err(Error::Usage(format!(
            "curvature alpha must be finite and >= 0, got {alpha}"
        )));
    }
    let class = predict(net, x)?;
    let h = exact_hessian(net, x, class)?;
    let h_norm = frobenius_norm(&h);
    let value = alpha * h_norm;
    if h_norm <= DIRECTION_FLOOR {
        return Ok((value, ParamGradient::zeros_like(net)));
    }
    let head = net.saliency_head();
    let mode = net.preferred_gap_grad_mode();
    let s = default_fd_step(x);
    let n = net.input_dim();
    let mut grad = ParamGradient::zeros_like(net);
    for i in 0..n {
        let row = h.row(i).to_owned();
        let mut x_plus = x.clone();
        x_plus[i] += s;
        let mut x_minus = x.clone();
        x_minus[i] -= s;
        let (_, plus) = net.directional_saliency_param_gradient(&x_plus, &row, class, head, mode)?;
        let (_, minus) =
            net.directional_saliency_param_gradient(&x_minus, &row, class, head, mode)?;
        grad.axpy(1.0 / (2.0 * s), &plus);
        grad.axpy(-1.0 / (2.0 * s), &minus);
    }
    grad.scale(alpha / h_norm);
    Ok((value, grad))
}

/// Inner maximization for adversarial training: projected gradient ascent on
/// the negated cross-boundary gap sum inside an L2 ball of radius `epsilon`.
/// Pairs are fixed by the ranking at the clean input. Returns the
/// perturbation, not the perturbed point.
pub fn at_inner_attack<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    k: usize,
    epsilon: f64,
    inner_steps: usize,
) -> Result<Array1<f64>> {
    let n = net.input_dim();
    if k == 0 || k >= n {
        return Err(Error::Usage(format!(
            "top-k size must satisfy 0 < k < {n}, got {k}"
        )));
    }
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(Error::Usage(format!(
            "perturbation radius must be finite and >= 0, got {epsilon}"
        )));
    }
    if inner_steps == 0 {
        return Err(Error::Usage(
            "adversarial training needs at least one inner step".into(),
        ));
    }
    let mut delta = Array1::zeros(n);
    if epsilon == 0.0 {
        return Ok(delta);
    }
    let class = predict(net, x)?;
    let saliency = simple_gradient(net, x)?;
    let rank = ranking(&saliency, k, RankOrder::Signed)?;
    let coeffs = gap_sum_coefficients(&rank.order, k);
    let step = epsilon / inner_steps as f64;
    for _ in 0..inner_steps {
        let point = x + &delta;
        // Gradient of sum_pairs h = c . I is one Hessian-vector product.
        let g = hvp_default(net, &point, &coeffs, class)?;
        let g_norm = g.dot(&g).sqrt();
        if g_norm <= DIRECTION_FLOOR {
            break;
        }
        delta -= &(&g * (step / g_norm));
        let d_norm = delta.dot(&delta).sqrt();
        if d_norm > epsilon {
            delta *= epsilon / d_norm;
        }
    }
    Ok(delta)
}
