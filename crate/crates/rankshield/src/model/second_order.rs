//! Hessian-free second-order operators.
//!
//! All quantities are derived from exact first-order gradients of the model's
//! saliency output by central finite differences, so they work for any
//! [`Model`] without materializing a Hessian.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{check_class, check_input, Model};
use crate::error::{Error, Result};

/// Cap on explicit Hessian materialization.
pub const EXACT_HESSIAN_MAX_DIM: usize = 64;

/// Default finite-difference step, scaled to the input's magnitude.
pub fn default_fd_step(x: &Array1<f64>) -> f64 {
    1e-3 * x.dot(x).sqrt().max(1.0)
}

/// Hessian-vector product `H(x) v` of the class-`class` saliency output,
/// via a central difference of the exact gradient along `v`:
///
/// `H v ~= ||v|| * (g(x + step v/||v||) - g(x - step v/||v||)) / (2 step)`.
pub fn hvp<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    v: &Array1<f64>,
    class: usize,
    step: f64,
) -> Result<Array1<f64>> {
    check_input(net, x)?;
    check_class(net, class)?;
    if v.len() != net.input_dim() {
        return Err(Error::Shape(format!(
            "direction has {} entries, expected {}",
            v.len(),
            net.input_dim()
        )));
    }
    if !(step.is_finite() && step > 0.0) {
        return Err(Error::Usage(format!("step must be positive, got {step}")));
    }
    let norm = v.dot(v).sqrt();
    if norm == 0.0 {
        return Err(Error::Usage("direction must be nonzero".into()));
    }
    let head = net.saliency_head();
    let unit = v / norm;
    let plus = net.output_gradient(&(x + &(&unit * step)), class, head)?;
    let minus = net.output_gradient(&(x - &(&unit * step)), class, head)?;
    Ok((plus - minus) * (norm / (2.0 * step)))
}

/// `H v` with the default step.
pub fn hvp_default<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    v: &Array1<f64>,
    class: usize,
) -> Result<Array1<f64>> {
    hvp(net, x, v, class, default_fd_step(x))
}

/// Row `i` of the saliency Hessian: `H e_i`.
pub fn hessian_row<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    i: usize,
    class: usize,
) -> Result<Array1<f64>> {
    let n = net.input_dim();
    if i >= n {
        return Err(Error::Index(format!(
            "feature {i} out of range for {n} features"
        )));
    }
    let mut e = Array1::zeros(n);
    e[i] = 1.0;
    hvp_default(net, x, &e, class)
}

/// Dense symmetric Hessian, assembled row by row and symmetrized. Capped at
/// [`EXACT_HESSIAN_MAX_DIM`] features.
pub fn exact_hessian<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    class: usize,
) -> Result<Array2<f64>> {
    let n = net.input_dim();
    if n > EXACT_HESSIAN_MAX_DIM {
        return Err(Error::Capability(format!(
            "exact Hessian is capped at {EXACT_HESSIAN_MAX_DIM} features, input has {n}"
        )));
    }
    let mut h = Array2::zeros((n, n));
    for i in 0..n {
        let row = hessian_row(net, x, i, class)?;
        h.row_mut(i).assign(&row);
    }
    // Finite differences break exact symmetry in the last digits.
    let ht = h.t().to_owned();
    Ok((&h + &ht) * 0.5)
}

/// Frobenius norm of a matrix.
pub fn frobenius_norm(m: &Array2<f64>) -> f64 {
    m.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// Largest singular value of the saliency Hessian, by power iteration on
/// Hessian-vector products. Deterministic given the seed of the start vector;
/// returns 0 when the Hessian annihilates the start vector (linear models).
pub fn hessian_spectral_norm<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    class: usize,
    iters: usize,
    tol: f64,
    seed: u64,
) -> Result<f64> {
    Ok(hessian_spectral_norm_with_vector(net, x, class, iters, tol, seed)?.0)
}

/// Power iteration that also returns the final direction vector, for callers
/// that differentiate through the converged direction.
pub fn hessian_spectral_norm_with_vector<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    class: usize,
    iters: usize,
    tol: f64,
    seed: u64,
) -> Result<(f64, Array1<f64>)> {
    check_input(net, x)?;
    check_class(net, class)?;
    if iters == 0 {
        return Err(Error::Usage("power iteration needs at least one step".into()));
    }
    if !(tol.is_finite() && tol >= 0.0) {
        return Err(Error::Usage(format!("tolerance must be >= 0, got {tol}")));
    }
    let n = net.input_dim();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = Array1::from_shape_fn(n, |_| rng.gen_range(-1.0..1.0_f64));
    let norm = v.dot(&v).sqrt();
    if norm == 0.0 {
        v[0] = 1.0;
    } else {
        v /= norm;
    }
    let mut sigma = 0.0;
    for _ in 0..iters {
        let u = hvp_default(net, x, &v, class)?;
        let new_sigma = u.dot(&u).sqrt();
        if new_sigma <= 1e-14 {
            // The Hessian annihilates this direction; treat as (numerically)
            // zero curvature.
            return Ok((0.0, v));
        }
        let next = &u / new_sigma;
        let converged = (new_sigma - sigma).abs() <= tol * new_sigma.max(1.0);
        v = next;
        sigma = new_sigma;
        if converged {
            break;
        }
    }
    Ok((sigma, v))
}
