//! Monte-Carlo ranking-thickness estimators and their closed-form bounds.
//!
//! Thickness of a feature pair (i, j) at x measures how far the relative
//! order of their saliency scores survives perturbation: draw endpoints x'
//! around x, walk the segment from x to x', and average either the flip
//! indicator `1[h >= 0]` or the raw gap h along the way. The top-k variant
//! averages over every (salient, non-salient) pair of the ranking at x.
//! All saliency scores along a segment are taken for the class predicted at
//! the unperturbed center, matching the fixed-class explanation convention.

use ndarray::Array1;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::attacks::{run_attack, AttackConfig};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::{gap, gap_input_gradient, ranking, simple_gradient, RankOrder};
use crate::model::{predict, second_order, Model};
use crate::util::{derive_seed, pairwise_mean, sample_std};

/// Default endpoint sample count.
pub const DEFAULT_M1: usize = 32;
/// Default line sample count per endpoint.
pub const DEFAULT_M2: usize = 8;
/// Default ball sample count for local Lipschitz estimation.
pub const DEFAULT_LIPSCHITZ_SAMPLES: usize = 32;

/// Where perturbation endpoints come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PerturbDistribution {
    /// Uniform over the L2 ball of the given radius.
    UniformBall { epsilon: f64 },
    /// Isotropic Gaussian with the given per-coordinate variance.
    Gaussian { sigma2: f64 },
    /// Endpoint produced by running the configured attack from x.
    AdversarialEndpoint { config: AttackConfig },
}

impl PerturbDistribution {
    fn validate(&self) -> Result<()> {
        match self {
            PerturbDistribution::UniformBall { epsilon } => {
                if !(epsilon.is_finite() && *epsilon > 0.0) {
                    return Err(Error::Usage(format!(
                        "ball radius must be positive, got {epsilon}"
                    )));
                }
            }
            PerturbDistribution::Gaussian { sigma2 } => {
                if !(sigma2.is_finite() && *sigma2 > 0.0) {
                    return Err(Error::Usage(format!(
                        "variance must be positive, got {sigma2}"
                    )));
                }
            }
            PerturbDistribution::AdversarialEndpoint { .. } => {}
        }
        Ok(())
    }

    /// Draws one endpoint. `stream` keeps endpoint draws identical no matter
    /// how many pairs share them.
    fn endpoint<M: Model + ?Sized>(
        &self,
        net: &M,
        x: &Array1<f64>,
        seed: u64,
        stream: u64,
    ) -> Result<Array1<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, stream));
        match self {
            PerturbDistribution::UniformBall { epsilon } => {
                let n = x.len();
                let mut dir = Array1::zeros(n);
                for d in dir.iter_mut() {
                    *d = rng.sample::<f64, _>(StandardNormal);
                }
                let norm = dir.dot(&dir).sqrt();
                if norm < 1e-300 {
                    return Ok(x.clone());
                }
                let radius = epsilon * rng.gen::<f64>().powf(1.0 / n as f64);
                Ok(x + &(&dir * (radius / norm)))
            }
            PerturbDistribution::Gaussian { sigma2 } => {
                let sigma = sigma2.sqrt();
                let mut x2 = x.clone();
                for v in x2.iter_mut() {
                    *v += sigma * rng.sample::<f64, _>(StandardNormal);
                }
                Ok(x2)
            }
            PerturbDistribution::AdversarialEndpoint { config } => {
                let mut cfg = config.clone();
                cfg.seed = derive_seed(seed, stream);
                let res = run_attack(net, x, &cfg).map_err(|e| {
                    Error::Estimation(format!("adversarial endpoint attack failed: {e}"))
                })?;
                Ok(Array1::from_vec(res.x_adv))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ThicknessVariant {
    /// Probability that the pair order survives: mean of `1[h >= 0]`.
    Indicator,
    /// Expected gap along the segments.
    Relaxed,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThicknessEstimate {
    pub value: f64,
    /// Sample standard deviation of per-endpoint means over sqrt(M1).
    pub std_error: f64,
    pub m1: usize,
    pub m2: usize,
    pub variant: ThicknessVariant,
}

/// Closed-form curvature bounds around the gap at x.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ThicknessBounds {
    pub lower: f64,
    pub upper: f64,
    pub epsilon: f64,
    pub lipschitz_samples: usize,
}

fn check_counts(m1: usize, m2: usize) -> Result<()> {
    if m1 == 0 || m2 == 0 {
        return Err(Error::Usage(format!(
            "sample counts must be at least 1, got M1={m1}, M2={m2}"
        )));
    }
    Ok(())
}

/// Shared estimator core: per-endpoint values are the mean over pairs of the
/// per-pair line means, so a single-pair call decomposes a top-k call
/// exactly.
fn thickness_core<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    d: &PerturbDistribution,
    pairs: &[(usize, usize)],
    m1: usize,
    m2: usize,
    variant: ThicknessVariant,
    seed: u64,
) -> Result<ThicknessEstimate> {
    d.validate()?;
    check_counts(m1, m2)?;
    let n = net.input_dim();
    for &(i, j) in pairs {
        if i >= n || j >= n {
            return Err(Error::Index(format!(
                "pair ({i}, {j}) out of range for {n} features"
            )));
        }
        if i == j {
            return Err(Error::Usage("thickness needs two distinct features".into()));
        }
    }
    let class0 = predict(net, x)?;

    let mut per_endpoint = Vec::with_capacity(m1);
    let mut line_vals = vec![Vec::with_capacity(m2); pairs.len()];
    for e in 0..m1 {
        let endpoint = d.endpoint(net, x, seed, e as u64)?;
        for v in line_vals.iter_mut() {
            v.clear();
        }
        for s in 0..m2 {
            let t = (s as f64 + 0.5) / m2 as f64;
            let xt = x + &(&(&endpoint - x) * t);
            let scores = net.output_gradient(&xt, class0, net.saliency_head())?;
            for (p, &(i, j)) in pairs.iter().enumerate() {
                let h = scores[i] - scores[j];
                line_vals[p].push(match variant {
                    ThicknessVariant::Indicator => {
                        if h >= 0.0 {
                            1.0
                        } else {
                            0.0
                        }
                    }
                    ThicknessVariant::Relaxed => h,
                });
            }
        }
        let pair_means: Vec<f64> = line_vals.iter().map(|v| pairwise_mean(v)).collect();
        per_endpoint.push(pairwise_mean(&pair_means));
    }
    let value = pairwise_mean(&per_endpoint);
    let std_error = sample_std(&per_endpoint) / (m1 as f64).sqrt();
    Ok(ThicknessEstimate {
        value,
        std_error,
        m1,
        m2,
        variant,
    })
}

/// Thickness of one feature pair's order under the perturbation
/// distribution.
pub fn pairwise_thickness<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    d: &PerturbDistribution,
    i: usize,
    j: usize,
    m1: usize,
    m2: usize,
    variant: ThicknessVariant,
    seed: u64,
) -> Result<ThicknessEstimate> {
    thickness_core(net, x, d, &[(i, j)], m1, m2, variant, seed)
}

/// Mean pairwise thickness over all (top, bottom) pairs of the ranking at
/// the original x; the k(n-k) pairs share endpoint and line samples.
pub fn topk_thickness<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    d: &PerturbDistribution,
    k: usize,
    m1: usize,
    m2: usize,
    variant: ThicknessVariant,
    seed: u64,
) -> Result<ThicknessEstimate> {
    let n = net.input_dim();
    if k == 0 || k >= n {
        return Err(Error::Usage(format!(
            "top-set size must lie in 1..{n}, got {k}"
        )));
    }
    let saliency = simple_gradient(net, x)?;
    let rank = ranking(&saliency, k, RankOrder::Signed)?;
    let mut pairs = Vec::with_capacity(k * (n - k));
    for &i in rank.top_set() {
        for &j in rank.bottom_set() {
            pairs.push((i, j));
        }
    }
    thickness_core(net, x, d, &pairs, m1, m2, variant, seed)
}

/// First-order sandwich around the gap at x: the lower bound backs off by
/// the gap gradient's norm over the radius, the upper bound adds sampled
/// local Lipschitz constants of the two saliency rows. The sampled maxima
/// under-estimate the true suprema, so the upper bound is itself an
/// estimate; it is exact when the rows are constant.
pub fn thickness_bounds<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    i: usize,
    j: usize,
    epsilon: f64,
    lipschitz_samples: usize,
    seed: u64,
) -> Result<ThicknessBounds> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(Error::Usage(format!(
            "radius must be positive, got {epsilon}"
        )));
    }
    if lipschitz_samples == 0 {
        return Err(Error::Usage("need at least one Lipschitz sample".into()));
    }
    let h = gap(net, x, i, j)?;
    let grad = gap_input_gradient(net, x, i, j)?;
    let lower = h - epsilon * 0.5 * grad.dot(&grad).sqrt();

    let ball = PerturbDistribution::UniformBall { epsilon };
    let class0 = predict(net, x)?;
    let mut l_i = row_norm(net, x, i, class0)?;
    let mut l_j = row_norm(net, x, j, class0)?;
    for s in 0..lipschitz_samples {
        let xp = ball.endpoint(net, x, seed, s as u64)?;
        l_i = l_i.max(row_norm(net, &xp, i, class0)?);
        l_j = l_j.max(row_norm(net, &xp, j, class0)?);
    }
    Ok(ThicknessBounds {
        lower,
        upper: h + epsilon * (l_i + l_j),
        epsilon,
        lipschitz_samples,
    })
}

fn row_norm<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    i: usize,
    class: usize,
) -> Result<f64> {
    let row = second_order::hessian_row(net, x, i, class)?;
    Ok(row.dot(&row).sqrt())
}

/// Mean indicator top-k thickness over a dataset, with per-sample derived
/// seeds.
pub fn model_thickness<M: Model + Sync + ?Sized>(
    net: &M,
    dataset: &Dataset,
    k: usize,
    d: &PerturbDistribution,
    m1: usize,
    m2: usize,
    seed: u64,
) -> Result<f64> {
    model_thickness_with(net, dataset, k, d, m1, m2, ThicknessVariant::Indicator, seed, 1)
}

/// Model-level thickness with an explicit variant and worker count. Results
/// do not depend on `jobs`: per-sample seeds are derived from the sample
/// index and the aggregation is pairwise.
pub fn model_thickness_with<M: Model + Sync + ?Sized>(
    net: &M,
    dataset: &Dataset,
    k: usize,
    d: &PerturbDistribution,
    m1: usize,
    m2: usize,
    variant: ThicknessVariant,
    seed: u64,
    jobs: usize,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::Usage("dataset is empty".into()));
    }
    let one = |idx: usize| -> Result<f64> {
        let x = dataset.sample(idx);
        Ok(topk_thickness(net, &x, d, k, m1, m2, variant, derive_seed(seed, idx as u64))?.value)
    };
    let values: Result<Vec<f64>> = if jobs > 1 {
        use rayon::prelude::*;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(jobs)
            .build()
            .map_err(|e| Error::Numeric(format!("thread pool: {e}")))?;
        pool.install(|| (0..dataset.len()).into_par_iter().map(one).collect())
    } else {
        (0..dataset.len()).map(one).collect()
    };
    Ok(pairwise_mean(&values?))
}
