//! Saliency maps, top-k rankings, and pairwise saliency gaps.
//!
//! A saliency map assigns one score per input feature by differentiating the
//! model's explained output (see [`Model::saliency_head`]) at the predicted
//! class. Rankings order features by score, either signed or by magnitude;
//! the gap `h(x, i, j) = I(x)_i - I(x)_j` measures how firmly feature `i`
//! outranks feature `j` under signed ordering.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{predict, second_order, Model};

/// Default SmoothGrad sample count.
pub const SMOOTHGRAD_DEFAULT_SAMPLES: usize = 50;
/// Default SmoothGrad noise variance for tabular inputs.
pub const SMOOTHGRAD_DEFAULT_SIGMA2: f64 = 0.5;
/// Default integrated-gradients path resolution.
pub const INTGRAD_DEFAULT_STEPS: usize = 100;

/// How features are ordered when ranking saliency scores.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RankOrder {
    /// Descending raw score: a strongly negative feature ranks last.
    #[default]
    Signed,
    /// Descending absolute score.
    Magnitude,
}

#[derive(Debug, Clone, PartialEq)]
pub enum SaliencyMethod {
    SimpleGrad,
    SmoothGrad { samples: usize, sigma2: f64, seed: u64 },
    IntegratedGradients { steps: usize },
}

/// Per-feature attribution scores for one input at one class.
#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub scores: Array1<f64>,
    /// Class the scores explain (the model's prediction at the original x).
    pub class: usize,
    pub method: SaliencyMethod,
}

impl SaliencyMap {
    pub fn new(scores: Array1<f64>, class: usize, method: SaliencyMethod) -> Result<Self> {
        if scores.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("saliency scores".into()));
        }
        Ok(SaliencyMap {
            scores,
            class,
            method,
        })
    }

    pub fn len(&self) -> usize {
        self.scores.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scores.is_empty()
    }
}

/// Feature ranking: `order[r]` is the feature at rank `r` (rank 0 strongest),
/// with the first `k` forming the top set.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ranking {
    pub order: Vec<usize>,
    pub k: usize,
}

impl Ranking {
    /// Features at ranks `0..k`.
    pub fn top_set(&self) -> &[usize] {
        &self.order[..self.k]
    }

    /// Features at ranks `k..n`.
    pub fn bottom_set(&self) -> &[usize] {
        &self.order[self.k..]
    }
}

/// Plain gradient saliency: the exact gradient of the explained output at the
/// predicted class.
pub fn simple_gradient<M: Model + ?Sized>(net: &M, x: &Array1<f64>) -> Result<SaliencyMap> {
    let class = predict(net, x)?;
    let scores = net.output_gradient(x, class, net.saliency_head())?;
    SaliencyMap::new(scores, class, SaliencyMethod::SimpleGrad)
}

/// SmoothGrad: mean gradient over `samples` Gaussian perturbations
/// `x + N(0, sigma2 I)`. The class is fixed at the prediction for the
/// unperturbed input. Deterministic given the seed.
pub fn smoothgrad<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    samples: usize,
    sigma2: f64,
    seed: u64,
) -> Result<SaliencyMap> {
    if samples == 0 {
        return Err(Error::Usage("smoothgrad needs at least one sample".into()));
    }
    if !(sigma2.is_finite() && sigma2 >= 0.0) {
        return Err(Error::Usage(format!(
            "noise variance must be >= 0, got {sigma2}"
        )));
    }
    let class = predict(net, x)?;
    let head = net.saliency_head();
    let sigma = sigma2.sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = net.input_dim();
    let mut acc = Array1::zeros(n);
    for _ in 0..samples {
        let noise = Array1::from_shape_fn(n, |_| {
            let z: f64 = rng.sample(StandardNormal);
            z * sigma
        });
        let g = net.output_gradient(&(x + &noise), class, head)?;
        acc += &g;
    }
    acc /= samples as f64;
    SaliencyMap::new(
        acc,
        class,
        SaliencyMethod::SmoothGrad {
            samples,
            sigma2,
            seed,
        },
    )
}

/// Integrated gradients from `baseline` to `x` with a midpoint Riemann sum:
/// `(x - baseline) * mean_s grad(baseline + (s+0.5)/steps * (x - baseline))`.
/// The class is fixed at the prediction for `x`.
pub fn integrated_gradients<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    baseline: &Array1<f64>,
    steps: usize,
) -> Result<SaliencyMap> {
    if steps == 0 {
        return Err(Error::Usage(
            "integrated gradients needs at least one step".into(),
        ));
    }
    if baseline.len() != x.len() {
        return Err(Error::Shape(format!(
            "baseline has {} entries, input has {}",
            baseline.len(),
            x.len()
        )));
    }
    let class = predict(net, x)?;
    let head = net.saliency_head();
    let diff = x - baseline;
    let mut acc = Array1::zeros(x.len());
    for s in 0..steps {
        let t = (s as f64 + 0.5) / steps as f64;
        let point = baseline + &(&diff * t);
        acc += &net.output_gradient(&point, class, head)?;
    }
    acc /= steps as f64;
    SaliencyMap::new(
        &diff * &acc,
        class,
        SaliencyMethod::IntegratedGradients { steps },
    )
}

/// Ranks features by saliency score. Stable: ties break toward the lower
/// feature index.
pub fn ranking(saliency: &SaliencyMap, k: usize, order_by: RankOrder) -> Result<Ranking> {
    let n = saliency.len();
    if k > n {
        return Err(Error::Usage(format!(
            "top-set size {k} exceeds {n} features"
        )));
    }
    let key = |f: usize| match order_by {
        RankOrder::Signed => saliency.scores[f],
        RankOrder::Magnitude => saliency.scores[f].abs(),
    };
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        key(b)
            .partial_cmp(&key(a))
            .expect("saliency scores are finite")
            .then(a.cmp(&b))
    });
    Ok(Ranking { order, k })
}

/// Saliency gap `h(x, i, j) = I(x)_i - I(x)_j` of the plain-gradient map.
pub fn gap<M: Model + ?Sized>(net: &M, x: &Array1<f64>, i: usize, j: usize) -> Result<f64> {
    let n = net.input_dim();
    if i >= n || j >= n {
        return Err(Error::Index(format!(
            "feature pair ({i}, {j}) out of range for {n} features"
        )));
    }
    let saliency = simple_gradient(net, x)?;
    Ok(saliency.scores[i] - saliency.scores[j])
}

/// Input gradient of the gap: row `i` minus row `j` of the saliency Hessian.
pub fn gap_input_gradient<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    i: usize,
    j: usize,
) -> Result<Array1<f64>> {
    let n = net.input_dim();
    if i >= n || j >= n {
        return Err(Error::Index(format!(
            "feature pair ({i}, {j}) out of range for {n} features"
        )));
    }
    if i == j {
        return Err(Error::Usage("gap gradient needs two distinct features".into()));
    }
    let class = predict(net, x)?;
    let ri = second_order::hessian_row(net, x, i, class)?;
    let rj = second_order::hessian_row(net, x, j, class)?;
    Ok(ri - rj)
}
