//! Defense trainers: a shared mini-batch loop with method-specific penalty
//! terms, plus the pair-selection schemes the ranking regularizers draw from.
//!
//! Training is deterministic given the config seed. All randomness flows
//! through per-purpose streams of [`derive_seed`]: stream 0 initializes the
//! weights, stream `1 + epoch` shuffles that epoch. Methods whose penalty is
//! identically zero skip the penalty accumulation entirely, so their runs are
//! bit-identical to vanilla training under the same seed.

pub mod pairs;
pub mod regularizers;

use ndarray::{Array2, Zip};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::attacks::gap_sum_coefficients;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::{ranking, simple_gradient, RankOrder};
use crate::model::{predict, Activation, DenseNet, ParamGradient};
use crate::util::{derive_seed, pairwise_mean};

pub use pairs::{select_pairs, PairScheme};
pub use regularizers::{at_inner_attack, baseline_regularizer, r2et_regularizer};

/// Ranking regularizer weight on the gap term.
pub const DEFAULT_LAMBDA1: f64 = 0.1;
/// Ranking regularizer weight on the Hessian term.
pub const DEFAULT_LAMBDA2: f64 = 0.01;

fn default_lambda1() -> f64 {
    DEFAULT_LAMBDA1
}

fn default_lambda2() -> f64 {
    DEFAULT_LAMBDA2
}

fn default_kappa() -> f64 {
    regularizers::DEFAULT_EST_H_KAPPA
}

fn default_power_iters() -> usize {
    regularizers::DEFAULT_POWER_ITERS
}

/// Which defense a training run applies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum TrainMethod {
    /// Plain cross-entropy.
    Vanilla,
    /// Cross-entropy plus `lambda * sum ||W||_F^2`.
    Wd { lambda: f64 },
    /// Vanilla loss with the hidden activation replaced by softplus of the
    /// given sharpness.
    Sp { rho: f64 },
    /// Penalizes estimated curvature along the steepest saliency direction.
    EstH {
        alpha: f64,
        #[serde(default = "default_kappa")]
        kappa: f64,
    },
    /// Penalizes the Frobenius norm of the dense saliency Hessian.
    ExactH { alpha: f64 },
    /// Penalizes the spectral norm of the saliency Hessian.
    Ssr {
        alpha: f64,
        #[serde(default = "default_power_iters")]
        power_iters: usize,
    },
    /// Adversarial training against the gap-sum inner attack.
    At {
        epsilon: f64,
        inner_steps: usize,
        k: usize,
    },
    /// Ranking regularizer: widen selected gaps, flatten curvature.
    R2et {
        #[serde(default = "default_lambda1")]
        lambda1: f64,
        #[serde(default = "default_lambda2")]
        lambda2: f64,
        k: usize,
        #[serde(default)]
        pairs: Option<PairScheme>,
    },
    /// Gap term only, no curvature penalty.
    R2etNoH {
        #[serde(default = "default_lambda1")]
        lambda1: f64,
        k: usize,
        #[serde(default)]
        pairs: Option<PairScheme>,
    },
    /// Ranking regularizer over the minimal-gap pair set.
    R2etMm {
        #[serde(default = "default_lambda1")]
        lambda1: f64,
        #[serde(default = "default_lambda2")]
        lambda2: f64,
        k: usize,
        k_prime: usize,
    },
    /// Minimal-gap pairs without the curvature penalty.
    R2etMmNoH {
        #[serde(default = "default_lambda1")]
        lambda1: f64,
        k: usize,
        k_prime: usize,
    },
}

/// What the batch loop actually has to do for a method, with the ablation
/// variants collapsed onto their parent paths. Methods whose penalty is
/// identically zero normalize to `Plain`, which keeps them bit-identical to
/// vanilla runs.
enum Plan {
    Plain,
    Penalty(TrainMethod),
    Ranking {
        lambda1: f64,
        lambda2: f64,
        k: usize,
        scheme: PairScheme,
    },
    Adversarial {
        epsilon: f64,
        inner_steps: usize,
        k: usize,
    },
}

fn check_coefficient(name: &str, value: f64) -> Result<()> {
    if !(value.is_finite() && value >= 0.0) {
        return Err(Error::Usage(format!(
            "{name} must be finite and >= 0, got {value}"
        )));
    }
    Ok(())
}

impl TrainMethod {
    /// Short stable name for reports and run records.
    pub fn name(&self) -> &'static str {
        match self {
            TrainMethod::Vanilla => "vanilla",
            TrainMethod::Wd { .. } => "wd",
            TrainMethod::Sp { .. } => "sp",
            TrainMethod::EstH { .. } => "est_h",
            TrainMethod::ExactH { .. } => "exact_h",
            TrainMethod::Ssr { .. } => "ssr",
            TrainMethod::At { .. } => "at",
            TrainMethod::R2et { .. } => "r2et",
            TrainMethod::R2etNoH { .. } => "r2et_no_h",
            TrainMethod::R2etMm { .. } => "r2et_mm",
            TrainMethod::R2etMmNoH { .. } => "r2et_mm_no_h",
        }
    }

    /// The ranking size the method defends, where it has one.
    pub fn probe_k(&self) -> Option<usize> {
        match self {
            TrainMethod::At { k, .. }
            | TrainMethod::R2et { k, .. }
            | TrainMethod::R2etNoH { k, .. }
            | TrainMethod::R2etMm { k, .. }
            | TrainMethod::R2etMmNoH { k, .. } => Some(*k),
            _ => None,
        }
    }

    /// Input-independent parameter checks.
    pub fn validate(&self) -> Result<()> {
        match self {
            TrainMethod::Vanilla => Ok(()),
            TrainMethod::Wd { lambda } => check_coefficient("weight decay lambda", *lambda),
            TrainMethod::Sp { rho } => {
                Activation::Softplus { rho: *rho }.validate()
            }
            TrainMethod::EstH { alpha, kappa } => {
                check_coefficient("curvature alpha", *alpha)?;
                if !(kappa.is_finite() && *kappa > 0.0) {
                    return Err(Error::Usage(format!(
                        "probe length kappa must be finite and > 0, got {kappa}"
                    )));
                }
                Ok(())
            }
            TrainMethod::ExactH { alpha } => check_coefficient("curvature alpha", *alpha),
            TrainMethod::Ssr { alpha, power_iters } => {
                check_coefficient("curvature alpha", *alpha)?;
                if *power_iters == 0 {
                    return Err(Error::Usage(
                        "spectral penalty needs at least one power iteration".into(),
                    ));
                }
                Ok(())
            }
            TrainMethod::At {
                epsilon,
                inner_steps,
                k,
            } => {
                if !(epsilon.is_finite() && *epsilon >= 0.0) {
                    return Err(Error::Usage(format!(
                        "perturbation radius must be finite and >= 0, got {epsilon}"
                    )));
                }
                if *inner_steps == 0 {
                    return Err(Error::Usage(
                        "adversarial training needs at least one inner step".into(),
                    ));
                }
                if *k == 0 {
                    return Err(Error::Usage("top-k size must be positive".into()));
                }
                Ok(())
            }
            TrainMethod::R2et {
                lambda1,
                lambda2,
                k,
                pairs,
            } => {
                check_coefficient("lambda1", *lambda1)?;
                check_coefficient("lambda2", *lambda2)?;
                if *k == 0 {
                    return Err(Error::Usage("top-k size must be positive".into()));
                }
                if let Some(
                    PairScheme::Anchor { k_prime } | PairScheme::MinimalGap { k_prime },
                ) = pairs
                {
                    if *k_prime == 0 {
                        return Err(Error::Usage("pair scheme width must be positive".into()));
                    }
                }
                Ok(())
            }
            TrainMethod::R2etNoH { lambda1, k, pairs } => TrainMethod::R2et {
                lambda1: *lambda1,
                lambda2: 0.0,
                k: *k,
                pairs: *pairs,
            }
            .validate(),
            TrainMethod::R2etMm {
                lambda1,
                lambda2,
                k,
                k_prime,
            } => {
                check_coefficient("lambda1", *lambda1)?;
                check_coefficient("lambda2", *lambda2)?;
                if *k == 0 {
                    return Err(Error::Usage("top-k size must be positive".into()));
                }
                if *k_prime == 0 || k_prime > k {
                    return Err(Error::Usage(format!(
                        "pair count k_prime must satisfy 1 <= k_prime <= k, got {k_prime} for k = {k}"
                    )));
                }
                Ok(())
            }
            TrainMethod::R2etMmNoH { lambda1, k, k_prime } => TrainMethod::R2etMm {
                lambda1: *lambda1,
                lambda2: 0.0,
                k: *k,
                k_prime: *k_prime,
            }
            .validate(),
        }
    }

    /// Parameter checks that need the feature count.
    pub fn validate_for(&self, n: usize) -> Result<()> {
        self.validate()?;
        if let Some(k) = self.probe_k() {
            if k >= n {
                return Err(Error::Usage(format!(
                    "top-k size must satisfy 0 < k < {n}, got {k}"
                )));
            }
            match self {
                TrainMethod::R2et {
                    pairs: Some(PairScheme::Anchor { .. }),
                    ..
                }
                | TrainMethod::R2etNoH {
                    pairs: Some(PairScheme::Anchor { .. }),
                    ..
                } if (k - 1).min(n - k) == 0 => {
                    return Err(Error::Usage(format!(
                        "anchor pairs need a rank above and below the boundary, impossible at k = {k}, n = {n}"
                    )));
                }
                TrainMethod::R2et {
                    pairs: Some(PairScheme::MinimalGap { k_prime }),
                    ..
                }
                | TrainMethod::R2etNoH {
                    pairs: Some(PairScheme::MinimalGap { k_prime }),
                    ..
                }
                | TrainMethod::R2etMm { k_prime, .. }
                | TrainMethod::R2etMmNoH { k_prime, .. }
                    if *k_prime > k.min(n - k) =>
                {
                    return Err(Error::Usage(format!(
                        "minimal-gap pair count {k_prime} exceeds the {} distinct pairs available at k = {k}, n = {n}",
                        k.min(n - k)
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    /// Collapse the method onto the batch-loop path that realizes it.
    fn plan(&self, n: usize) -> Plan {
        match self {
            TrainMethod::Vanilla | TrainMethod::Sp { .. } => Plan::Plain,
            TrainMethod::Wd { lambda } if *lambda == 0.0 => Plan::Plain,
            TrainMethod::EstH { alpha, .. }
            | TrainMethod::ExactH { alpha }
            | TrainMethod::Ssr { alpha, .. }
                if *alpha == 0.0 =>
            {
                Plan::Plain
            }
            TrainMethod::Wd { .. }
            | TrainMethod::EstH { .. }
            | TrainMethod::ExactH { .. }
            | TrainMethod::Ssr { .. } => Plan::Penalty(self.clone()),
            TrainMethod::At {
                epsilon,
                inner_steps,
                k,
            } => {
                if *epsilon == 0.0 {
                    Plan::Plain
                } else {
                    Plan::Adversarial {
                        epsilon: *epsilon,
                        inner_steps: *inner_steps,
                        k: *k,
                    }
                }
            }
            TrainMethod::R2et {
                lambda1,
                lambda2,
                k,
                pairs,
            } => Plan::ranking(*lambda1, *lambda2, *k, *pairs, n),
            TrainMethod::R2etNoH { lambda1, k, pairs } => {
                Plan::ranking(*lambda1, 0.0, *k, *pairs, n)
            }
            TrainMethod::R2etMm {
                lambda1,
                lambda2,
                k,
                k_prime,
            } => Plan::ranking(
                *lambda1,
                *lambda2,
                *k,
                Some(PairScheme::MinimalGap { k_prime: *k_prime }),
                n,
            ),
            TrainMethod::R2etMmNoH { lambda1, k, k_prime } => Plan::ranking(
                *lambda1,
                0.0,
                *k,
                Some(PairScheme::MinimalGap { k_prime: *k_prime }),
                n,
            ),
        }
    }
}

impl Plan {
    fn ranking(lambda1: f64, lambda2: f64, k: usize, pairs: Option<PairScheme>, n: usize) -> Plan {
        if lambda1 == 0.0 && lambda2 == 0.0 {
            return Plan::Plain;
        }
        Plan::Ranking {
            lambda1,
            lambda2,
            k,
            scheme: pairs.unwrap_or_else(|| PairScheme::default_for(n, k)),
        }
    }
}

fn default_adam_beta1() -> f64 {
    0.9
}

fn default_adam_beta2() -> f64 {
    0.999
}

fn default_adam_epsilon() -> f64 {
    1e-8
}

/// Parameter update rule. Plain constant-rate descent is the default; Adam
/// is available for configs that ask for it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    #[default]
    Sgd,
    Adam {
        #[serde(default = "default_adam_beta1")]
        beta1: f64,
        #[serde(default = "default_adam_beta2")]
        beta2: f64,
        #[serde(default = "default_adam_epsilon")]
        epsilon: f64,
    },
}

impl Optimizer {
    fn validate(&self) -> Result<()> {
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } = self
        {
            for (name, b) in [("beta1", *beta1), ("beta2", *beta2)] {
                if !(b.is_finite() && (0.0..1.0).contains(&b)) {
                    return Err(Error::Usage(format!(
                        "adam {name} must lie in [0, 1), got {b}"
                    )));
                }
            }
            if !(epsilon.is_finite() && *epsilon > 0.0) {
                return Err(Error::Usage(format!(
                    "adam epsilon must be finite and > 0, got {epsilon}"
                )));
            }
        }
        Ok(())
    }
}

fn default_lr() -> f64 {
    1e-2
}

fn default_epochs() -> usize {
    40
}

fn default_batch_size() -> usize {
    32
}

fn default_hidden_dims() -> Vec<usize> {
    vec![16]
}

fn default_reg_stride() -> usize {
    1
}

/// Everything a training run needs besides the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub method: TrainMethod,
    /// Constant learning rate; the descent direction is the mean batch
    /// gradient of loss plus penalty.
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_hidden_dims")]
    pub hidden_dims: Vec<usize>,
    /// Hidden activation; a softplus-substitution method overrides it.
    #[serde(default = "Activation::softplus_default")]
    pub activation: Activation,
    #[serde(default)]
    pub optimizer: Optimizer,
    /// Evaluate per-sample penalties on every stride-th sample of a batch
    /// (1 = every sample). Speed knob for the expensive curvature terms.
    #[serde(default = "default_reg_stride")]
    pub reg_stride: usize,
}

impl TrainConfig {
    /// A run with everything at defaults except the method and seed.
    pub fn with_method(method: TrainMethod, seed: u64) -> TrainConfig {
        TrainConfig {
            method,
            lr: default_lr(),
            epochs: default_epochs(),
            batch_size: default_batch_size(),
            seed,
            hidden_dims: default_hidden_dims(),
            activation: Activation::softplus_default(),
            optimizer: Optimizer::default(),
            reg_stride: default_reg_stride(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Usage(format!(
                "learning rate must be finite and > 0, got {}",
                self.lr
            )));
        }
        if self.epochs == 0 {
            return Err(Error::Usage("training needs at least one epoch".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Usage("batch size must be positive".into()));
        }
        if self.reg_stride == 0 {
            return Err(Error::Usage("penalty stride must be positive".into()));
        }
        self.activation.validate()?;
        self.optimizer.validate()?;
        self.method.validate()
    }
}

/// Clean-data snapshot taken after each epoch's updates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean cross-entropy over the epoch's (possibly perturbed) batches,
    /// without the penalty term.
    pub loss: f64,
    /// Mean penalty value over the same batches.
    pub regularizer: f64,
    /// Training-set accuracy on clean inputs.
    pub accuracy: f64,
    /// Training-set AUC on clean inputs; absent for more than two classes.
    pub auc: Option<f64>,
    /// Mean per-pair saliency gap over the training set at the probe k.
    pub mean_gap: f64,
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
}

impl TrainHistory {
    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

enum OptimizerState {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
        m: ParamGradient,
        v: ParamGradient,
        t: u32,
    },
}

impl OptimizerState {
    fn new(optimizer: Optimizer, net: &DenseNet) -> OptimizerState {
        match optimizer {
            Optimizer::Sgd => OptimizerState::Sgd,
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                m: ParamGradient::zeros_like(net),
                v: ParamGradient::zeros_like(net),
                t: 0,
            },
        }
    }

    fn step(&mut self, net: &mut DenseNet, grad: &ParamGradient, lr: f64) {
        match self {
            OptimizerState::Sgd => {
                for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                    layer.weights.zip_mut_with(&grad.weights[l], |w, &g| *w -= lr * g);
                    layer.biases.zip_mut_with(&grad.biases[l], |b, &g| *b -= lr * g);
                }
            }
            OptimizerState::Adam {
                beta1,
                beta2,
                epsilon,
                m,
                v,
                t,
            } => {
                *t += 1;
                let bc1 = 1.0 - beta1.powi(*t as i32);
                let bc2 = 1.0 - beta2.powi(*t as i32);
                for (l, layer) in net.layers_mut().iter_mut().enumerate() {
                    let (b1, b2, eps) = (*beta1, *beta2, *epsilon);
                    Zip::from(&mut layer.weights)
                        .and(&mut m.weights[l])
                        .and(&mut v.weights[l])
                        .and(&grad.weights[l])
                        .for_each(|w, m, v, &g| {
                            *m = b1 * *m + (1.0 - b1) * g;
                            *v = b2 * *v + (1.0 - b2) * g * g;
                            *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                        });
                    Zip::from(&mut layer.biases)
                        .and(&mut m.biases[l])
                        .and(&mut v.biases[l])
                        .and(&grad.biases[l])
                        .for_each(|w, m, v, &g| {
                            *m = b1 * *m + (1.0 - b1) * g;
                            *v = b2 * *v + (1.0 - b2) * g * g;
                            *w -= lr * (*m / bc1) / ((*v / bc2).sqrt() + eps);
                        });
                }
            }
        }
    }
}

/// Mean per-pair cross-boundary gap over the dataset, at ranking size `k`.
/// Pairs follow each sample's current saliency ranking.
fn mean_ranking_gap(net: &DenseNet, dataset: &Dataset, k: usize) -> Result<f64> {
    let n = dataset.n_features();
    let pair_count = (k * (n - k)) as f64;
    let mut vals = Vec::with_capacity(dataset.len());
    for i in 0..dataset.len() {
        let x = dataset.sample(i);
        let saliency = simple_gradient(net, &x)?;
        let rank = ranking(&saliency, k, RankOrder::Signed)?;
        let coeffs = gap_sum_coefficients(&rank.order, k);
        vals.push(coeffs.dot(&saliency.scores) / pair_count);
    }
    Ok(pairwise_mean(&vals))
}

/// Train a classifier with the configured defense.
///
/// Deterministic given the config: the same config and dataset produce
/// bit-identical weights. Divergence (a non-finite loss, penalty, or
/// gradient) aborts with a training error naming the epoch.
pub fn train(config: &TrainConfig, dataset: &Dataset) -> Result<(DenseNet, TrainHistory)> {
    config.validate()?;
    let n = dataset.n_features();
    config.method.validate_for(n)?;
    if dataset.is_empty() {
        return Err(Error::Usage("training needs a non-empty dataset".into()));
    }
    let classes = dataset.n_classes();
    let mut seen = vec![false; classes];
    for &y in &dataset.labels {
        seen[y] = true;
    }
    if seen.iter().filter(|s| **s).count() < 2 {
        return Err(Error::Usage(
            "training needs at least two classes represented".into(),
        ));
    }

    let mut dims = vec![n];
    dims.extend_from_slice(&config.hidden_dims);
    dims.push(classes);
    let activation = match &config.method {
        TrainMethod::Sp { rho } => Activation::Softplus { rho: *rho },
        _ => config.activation,
    };
    let mut net = DenseNet::random(&dims, activation, derive_seed(config.seed, 0))?;
    let plan = config.method.plan(n);
    let probe_k = config.method.probe_k().unwrap_or_else(|| 4.min(n - 1).max(1));
    let mut state = OptimizerState::new(config.optimizer, &net);
    let mut history = TrainHistory::default();

    let mut order: Vec<usize> = (0..dataset.len()).collect();
    for epoch in 0..config.epochs {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, 1 + epoch as u64));
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut reg_sum = 0.0;
        for batch in order.chunks(config.batch_size) {
            let (loss, reg) = train_batch(&mut net, dataset, batch, &plan, config, &mut state)
                .map_err(|e| match e {
                    Error::NonFinite(message) => Error::Training { epoch, message },
                    other => other,
                })?;
            if !(loss.is_finite() && reg.is_finite()) {
                return Err(Error::Training {
                    epoch,
                    message: format!("loss {loss}, penalty {reg}"),
                });
            }
            loss_sum += loss * batch.len() as f64;
            reg_sum += reg * batch.len() as f64;
        }
        let inv = 1.0 / dataset.len() as f64;
        history.epochs.push(epoch_stats(
            &net,
            dataset,
            epoch,
            loss_sum * inv,
            reg_sum * inv,
            probe_k,
        )?);
    }
    Ok((net, history))
}

/// One mini-batch update. Returns the batch's mean classification loss and
/// mean penalty value.
fn train_batch(
    net: &mut DenseNet,
    dataset: &Dataset,
    batch: &[usize],
    plan: &Plan,
    config: &TrainConfig,
    state: &mut OptimizerState,
) -> Result<(f64, f64)> {
    let n = dataset.n_features();
    let mut xs = Array2::zeros((batch.len(), n));
    let mut ys = Vec::with_capacity(batch.len());
    for (row, &idx) in batch.iter().enumerate() {
        xs.row_mut(row).assign(&dataset.features.row(idx));
        ys.push(dataset.labels[idx]);
    }
    if let Plan::Adversarial {
        epsilon,
        inner_steps,
        k,
    } = plan
    {
        // Inner maximization at the current weights; the outer step then
        // descends the loss at the perturbed points.
        for row in 0..batch.len() {
            let x = xs.row(row).to_owned();
            let delta = at_inner_attack(net, &x, *k, *epsilon, *inner_steps)?;
            xs.row_mut(row).assign(&(&x + &delta));
        }
    }
    let (loss, mut grad) = net.loss_and_gradient(&xs, &ys)?;
    let mut reg_value = 0.0;
    match plan {
        Plan::Plain | Plan::Adversarial { .. } => {}
        Plan::Penalty(TrainMethod::Wd { lambda }) => {
            // Weight decay ignores the input; one evaluation is the batch mean.
            let (value, pg) =
                baseline_regularizer(net, &xs.row(0).to_owned(), &TrainMethod::Wd { lambda: *lambda })?;
            reg_value = value;
            grad.add_assign(&pg);
        }
        Plan::Penalty(method) => {
            let mut acc = ParamGradient::zeros_like(net);
            let mut count = 0.0;
            for row in (0..batch.len()).step_by(config.reg_stride) {
                let x = xs.row(row).to_owned();
                let (value, pg) = baseline_regularizer(net, &x, method)?;
                reg_value += value;
                acc.add_assign(&pg);
                count += 1.0;
            }
            reg_value /= count;
            grad.axpy(1.0 / count, &acc);
        }
        Plan::Ranking {
            lambda1,
            lambda2,
            k,
            scheme,
        } => {
            let mut acc = ParamGradient::zeros_like(net);
            let mut count = 0.0;
            for row in (0..batch.len()).step_by(config.reg_stride) {
                let x = xs.row(row).to_owned();
                let (value, pg) = r2et_regularizer(net, &x, *k, *lambda1, *lambda2, *scheme)?;
                reg_value += value;
                acc.add_assign(&pg);
                count += 1.0;
            }
            reg_value /= count;
            grad.axpy(1.0 / count, &acc);
        }
    }
    if !grad.is_finite() {
        return Err(Error::NonFinite("batch gradient".into()));
    }
    state.step(net, &grad, config.lr);
    Ok((loss, reg_value))
}

fn epoch_stats(
    net: &DenseNet,
    dataset: &Dataset,
    epoch: usize,
    loss: f64,
    regularizer: f64,
    probe_k: usize,
) -> Result<EpochStats> {
    let mut correct = 0usize;
    for i in 0..dataset.len() {
        if predict(net, &dataset.sample(i))? == dataset.labels[i] {
            correct += 1;
        }
    }
    let accuracy = correct as f64 / dataset.len() as f64;
    let auc = if dataset.n_classes() == 2 {
        Some(crate::metrics::auc(net, dataset)?)
    } else {
        None
    };
    // A single feature has no cross-boundary pairs to measure.
    let mean_gap = if dataset.n_features() >= 2 {
        mean_ranking_gap(net, dataset, probe_k)?
    } else {
        0.0
    };
    Ok(EpochStats {
        epoch,
        loss,
        regularizer,
        accuracy,
        auc,
        mean_gap,
    })
}
