//! Trust-region multi-objective ranking attack.
//!
//! Each cross-boundary pair (i, j) of the original top-k ranking becomes one
//! objective: drive the gap h(x, i, j) below zero while the prediction drift
//! stays small. Progress is tracked per objective by the merit
//! `phi = ||f(x) - f(x0)||_1 + |h(x) - t|` against a moving target t held
//! below the current gap. Every step solves a linear program that minimizes
//! the worst linearized merit inside an L-infinity trust region; the embedded
//! dense simplex makes the subproblem solve exact.

use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::ranking;
use crate::model::{predict, second_order, Model};

use super::simplex::{self, LpProblem, Rel};
use super::{AttackConfig, AttackFrame, AttackMethod, AttackResult};

/// Fraction of the realized merit reduction carried into the next target.
const TARGET_REDUCTION_FRACTION: f64 = 0.5;
/// Predicted reductions at or below this relative floor count as a stall.
const STALL_TOL: f64 = 1e-12;
/// Merits may rise by at most this much across an accepted step.
const MERIT_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MooParams {
    /// Trust-radius shrink factor on rejected steps.
    #[serde(default = "default_gamma")]
    pub gamma: f64,
    /// Required ratio of actual to predicted merit reduction.
    #[serde(default = "default_eta")]
    pub eta: f64,
    /// Objectives whose criticality falls to this level are retired.
    #[serde(default = "default_crit_epsilon")]
    pub crit_epsilon: f64,
    /// The attack stops when the trust radius shrinks below this floor.
    #[serde(default = "default_delta_floor")]
    pub delta_floor: f64,
}

fn default_gamma() -> f64 {
    0.5
}
fn default_eta() -> f64 {
    0.1
}
fn default_crit_epsilon() -> f64 {
    1e-4
}
fn default_delta_floor() -> f64 {
    1e-8
}

impl Default for MooParams {
    fn default() -> Self {
        MooParams {
            gamma: default_gamma(),
            eta: default_eta(),
            crit_epsilon: default_crit_epsilon(),
            delta_floor: default_delta_floor(),
        }
    }
}

impl MooParams {
    // Negated comparisons so NaN fails validation too.
    #[allow(clippy::neg_cmp_op_on_partial_ord)]
    fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Usage(format!(
                "shrink factor must lie in (0,1), got {}",
                self.gamma
            )));
        }
        if !(self.eta > 0.0 && self.eta < 1.0) {
            return Err(Error::Usage(format!(
                "acceptance ratio must lie in (0,1), got {}",
                self.eta
            )));
        }
        if !(self.crit_epsilon > 0.0) {
            return Err(Error::Usage(format!(
                "criticality threshold must be positive, got {}",
                self.crit_epsilon
            )));
        }
        if !(self.delta_floor > 0.0) {
            return Err(Error::Usage(format!(
                "trust-radius floor must be positive, got {}",
                self.delta_floor
            )));
        }
        Ok(())
    }
}

/// Why the trust-region loop stopped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MooVerdict {
    /// Some gap crossed zero: the ranking flipped.
    Flip,
    /// Every objective became critical while its gap stayed positive.
    AllCritical,
    /// The iteration budget ran out first.
    IterationCap,
    /// The trust radius shrank below its floor.
    TrustRegionCollapse,
}

/// Merit of one objective before and after an accepted step, both evaluated
/// at the targets the step was solved against.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeritRecord {
    pub iter: usize,
    pub pair: (usize, usize),
    pub before: f64,
    pub after: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MooReport {
    pub verdict: MooVerdict,
    pub merit_records: Vec<MeritRecord>,
    /// Objectives retired as critical with their gap still positive.
    pub removed_pairs: Vec<(usize, usize)>,
}

/// Live state of the trust-region loop.
#[derive(Debug, Clone)]
pub struct MooState {
    /// All cross-boundary pairs of the original ranking.
    pub pairs: Vec<(usize, usize)>,
    /// Indices into `pairs` still being driven down.
    pub active: Vec<usize>,
    /// Per-pair gap targets, indexed like `pairs`.
    pub targets: Vec<f64>,
    pub delta: f64,
    pub params: MooParams,
    /// Class predicted at the unperturbed input; all merits and gaps are
    /// evaluated for it.
    pub class0: usize,
    /// Probabilities at the unperturbed input, the origin of the drift term.
    pub probs0: Array1<f64>,
}

/// First-order data of the merit functions at one point: drift residual,
/// probability Jacobian, and per-pair gaps and gap gradients.
struct Linearization {
    resid: Array1<f64>,
    jac: Array2<f64>,
    gaps: Vec<f64>,
    grads: Vec<Array1<f64>>,
}

fn linearize<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    pairs: &[(usize, usize)],
    class0: usize,
    probs0: &Array1<f64>,
) -> Result<Linearization> {
    let probs = net.forward(x)?.probabilities;
    let resid = &probs - probs0;
    let c = net.n_classes();
    let n = net.input_dim();
    let mut jac = Array2::zeros((c, n));
    for r in 0..c {
        let row = net.output_gradient(x, r, crate::model::Head::Probability)?;
        jac.row_mut(r).assign(&row);
    }
    let scores = net.output_gradient(x, class0, net.saliency_head())?;
    let mut rows: std::collections::HashMap<usize, Array1<f64>> = std::collections::HashMap::new();
    let mut gaps = Vec::with_capacity(pairs.len());
    let mut grads = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        gaps.push(scores[i] - scores[j]);
        for feat in [i, j] {
            if let std::collections::hash_map::Entry::Vacant(slot) = rows.entry(feat) {
                slot.insert(second_order::hessian_row(net, x, feat, class0)?);
            }
        }
        grads.push(&rows[&i] - &rows[&j]);
    }
    Ok(Linearization {
        resid,
        jac,
        gaps,
        grads,
    })
}

/// Progress measure of one objective: L1 drift of the output vector plus the
/// distance of the gap to its target. The gap is evaluated for the class
/// predicted at `x0`.
pub fn merit<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    x0: &Array1<f64>,
    pair: (usize, usize),
    target: f64,
) -> Result<f64> {
    let class0 = predict(net, x0)?;
    let probs0 = net.forward(x0)?.probabilities;
    let probs = net.forward(x)?.probabilities;
    let scores = net.output_gradient(x, class0, net.saliency_head())?;
    check_pair(net.input_dim(), pair)?;
    let drift = probs
        .iter()
        .zip(probs0.iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>();
    Ok(drift + (scores[pair.0] - scores[pair.1] - target).abs())
}

fn check_pair(n: usize, (i, j): (usize, usize)) -> Result<()> {
    if i >= n || j >= n {
        return Err(Error::Index(format!(
            "pair ({i}, {j}) out of range for {n} features"
        )));
    }
    if i == j {
        return Err(Error::Usage("gap objective needs two distinct features".into()));
    }
    Ok(())
}

/// Builds the linearized-merit LP. Columns are the positive and negative
/// parts of the step d (each box-bounded by delta), absolute-value bounds s_r
/// on the drift residual components, one absolute-value bound q per
/// objective, and, when `couple_max` is set, a final column alpha bounding
/// every objective's linearized merit. Minimizes alpha in coupled form and
/// the single merit `sum s + q` otherwise.
fn funnel_lp(
    resid: &Array1<f64>,
    jac: &Array2<f64>,
    grads: &[&Array1<f64>],
    excesses: &[f64],
    delta: f64,
    couple_max: bool,
) -> LpProblem {
    let n = jac.ncols();
    let cc = jac.nrows();
    let m = grads.len();
    let cols = 2 * n + cc + m + usize::from(couple_max);
    let s0 = 2 * n;
    let q0 = 2 * n + cc;
    let alpha = cols - 1;

    let mut rows = Vec::with_capacity(2 * cc + 2 * m + 2 * n + if couple_max { m } else { 0 });
    // s_r >= |resid_r + J_r d| split into two one-sided rows.
    for r in 0..cc {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; cols];
            row[s0 + r] = 1.0;
            for i in 0..n {
                row[i] = -sign * jac[(r, i)];
                row[n + i] = sign * jac[(r, i)];
            }
            rows.push((row, Rel::Ge, sign * resid[r]));
        }
    }
    // q_a >= |excess_a + g_a . d|.
    for (a, g) in grads.iter().enumerate() {
        for sign in [1.0, -1.0] {
            let mut row = vec![0.0; cols];
            row[q0 + a] = 1.0;
            for i in 0..n {
                row[i] = -sign * g[i];
                row[n + i] = sign * g[i];
            }
            rows.push((row, Rel::Ge, sign * excesses[a]));
        }
    }
    // Trust region: every step component within the radius.
    for i in 0..2 * n {
        let mut row = vec![0.0; cols];
        row[i] = 1.0;
        rows.push((row, Rel::Le, delta));
    }
    let mut objective = vec![0.0; cols];
    if couple_max {
        // sum s + q_a <= alpha for every objective.
        for a in 0..m {
            let mut row = vec![0.0; cols];
            for r in 0..cc {
                row[s0 + r] = 1.0;
            }
            row[q0 + a] = 1.0;
            row[alpha] = -1.0;
            rows.push((row, Rel::Le, 0.0));
        }
        objective[alpha] = 1.0;
    } else {
        for r in 0..cc {
            objective[s0 + r] = 1.0;
        }
        objective[q0] = 1.0;
    }
    LpProblem { objective, rows }
}

/// Maximal linearized merit reduction within the trust radius, from the raw
/// linearization parts: drift residual, output Jacobian, gap gradient, and
/// the gap's excess over its target.
pub fn linearized_criticality(
    resid: &Array1<f64>,
    jac: &Array2<f64>,
    grad: &Array1<f64>,
    excess: f64,
    delta: f64,
) -> Result<f64> {
    if delta <= 0.0 {
        return Err(Error::Usage(format!(
            "trust radius must be positive, got {delta}"
        )));
    }
    let lp = funnel_lp(resid, jac, &[grad], &[excess], delta, false);
    let sol = simplex::solve_expect_feasible(&lp)?;
    let at_zero = resid.iter().map(|v| v.abs()).sum::<f64>() + excess.abs();
    Ok((at_zero - sol.objective_value).max(0.0))
}

/// Maximal linearized merit reduction for one pair objective within radius
/// `delta`. Near-zero values mean the objective cannot be locally improved.
pub fn criticality<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    x0: &Array1<f64>,
    pair: (usize, usize),
    target: f64,
    delta: f64,
) -> Result<f64> {
    check_pair(net.input_dim(), pair)?;
    let class0 = predict(net, x0)?;
    let probs0 = net.forward(x0)?.probabilities;
    let lin = linearize(net, x, &[pair], class0, &probs0)?;
    linearized_criticality(&lin.resid, &lin.jac, &lin.grads[0], lin.gaps[0] - target, delta)
}

fn solve_tr_step(
    lin: &Linearization,
    pairs: &[(usize, usize)],
    active: &[usize],
    targets: &[f64],
    delta: f64,
    n: usize,
) -> Result<(Array1<f64>, f64)> {
    let grads: Vec<&Array1<f64>> = active.iter().map(|&a| &lin.grads[a]).collect();
    let excesses: Vec<f64> = active.iter().map(|&a| lin.gaps[a] - targets[a]).collect();
    debug_assert_eq!(pairs.len(), lin.gaps.len());
    let lp = funnel_lp(&lin.resid, &lin.jac, &grads, &excesses, delta, true);
    let sol = simplex::solve_expect_feasible(&lp)?;
    let mut d = Array1::zeros(n);
    for i in 0..n {
        d[i] = sol.x[i] - sol.x[n + i];
    }
    Ok((d, sol.objective_value))
}

/// One trust-region subproblem solve: the joint descent direction and the
/// predicted worst-case linearized merit after the step.
pub fn tr_moo_step<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    state: &MooState,
) -> Result<(Array1<f64>, f64)> {
    if state.active.is_empty() {
        return Err(Error::Usage("no active objectives left".into()));
    }
    if state.delta <= 0.0 {
        return Err(Error::Usage(format!(
            "trust radius must be positive, got {}",
            state.delta
        )));
    }
    let lin = linearize(net, x, &state.pairs, state.class0, &state.probs0)?;
    solve_tr_step(
        &lin,
        &state.pairs,
        &state.active,
        &state.targets,
        state.delta,
        net.input_dim(),
    )
}

fn merit_from_parts(drift_l1: f64, gap: f64, target: f64) -> f64 {
    drift_l1 + (gap - target).abs()
}

/// Trust-region multi-objective attack on the top-k ranking.
///
/// Every iteration retires objectives that are critical with their gap still
/// positive, solves the joint descent LP, and accepts the step only when the
/// prediction survives, the drift budget holds, no active merit increases,
/// and the worst merit drops by at least `eta` times the predicted
/// reduction. Rejections shrink the trust radius. Targets move below each
/// accepted gap by at least the radius times the gap gradient's L1 norm.
pub fn moo_tr_attack<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    config: &AttackConfig,
) -> Result<(AttackResult, MooReport)> {
    let params = match &config.method {
        AttackMethod::MooTr(p) => p.clone(),
        _ => {
            return Err(Error::Usage(
                "config method is not the trust-region attack".into(),
            ))
        }
    };
    params.validate()?;
    let mut frame = AttackFrame::open(net, x, config)?;
    let rank0 = ranking(&frame.saliency0, config.k, config.order)?;
    let n = net.input_dim();
    let mut pairs = Vec::with_capacity(config.k * (n - config.k));
    for &i in rank0.top_set() {
        for &j in rank0.bottom_set() {
            pairs.push((i, j));
        }
    }

    let mut state = MooState {
        pairs,
        active: Vec::new(),
        targets: Vec::new(),
        delta: config.step_size,
        params: params.clone(),
        class0: frame.class0,
        probs0: frame.probs0.clone(),
    };
    let mut current = x.clone();
    let mut lin = linearize(net, &current, &state.pairs, state.class0, &state.probs0)?;
    state.active = (0..state.pairs.len()).collect();
    // Initial targets sit one full-radius linear descent below each gap.
    state.targets = lin
        .gaps
        .iter()
        .zip(lin.grads.iter())
        .map(|(h, g)| h - state.delta * g.iter().map(|v| v.abs()).sum::<f64>())
        .collect();

    let mut merit_records = Vec::new();
    let mut removed_pairs = Vec::new();
    let mut verdict = None;
    frame
        .objective
        .push(worst_merit(&lin, &state.active, &state.targets));

    let mut attempts = 0;
    while attempts < config.max_iters {
        // A negative gap means the ranking already flipped.
        if lin.gaps.iter().any(|&h| h < 0.0) {
            verdict = Some(MooVerdict::Flip);
            break;
        }
        // Retire objectives that cannot be improved. The flip check above
        // already broke on negative gaps, so every retiree still holds rank.
        let mut still_active = Vec::with_capacity(state.active.len());
        for &a in &state.active {
            let chi = linearized_criticality(
                &lin.resid,
                &lin.jac,
                &lin.grads[a],
                lin.gaps[a] - state.targets[a],
                state.delta,
            )?;
            if chi <= params.crit_epsilon {
                removed_pairs.push(state.pairs[a]);
            } else {
                still_active.push(a);
            }
        }
        state.active = still_active;
        if state.active.is_empty() {
            verdict = Some(MooVerdict::AllCritical);
            break;
        }

        let (d, alpha) = solve_tr_step(
            &lin,
            &state.pairs,
            &state.active,
            &state.targets,
            state.delta,
            n,
        )?;
        let worst_now = worst_merit(&lin, &state.active, &state.targets);
        let predicted = (worst_now - alpha).max(0.0);
        attempts += 1;

        let mut cand_eval = None;
        if predicted > STALL_TOL * worst_now.max(1.0) {
            let candidate = &current + &d;
            if frame.step_allowed(&candidate)? {
                let cand_probs = net.forward(&candidate)?.probabilities;
                let drift_l1 = cand_probs
                    .iter()
                    .zip(frame.probs0.iter())
                    .map(|(a, b)| (a - b).abs())
                    .sum::<f64>();
                let cand_saliency = frame.saliency_at(&candidate)?;
                let old_drift_l1 = lin
                    .resid
                    .iter()
                    .map(|v| v.abs())
                    .sum::<f64>();
                let mut all_non_increasing = true;
                let mut worst_after = 0.0f64;
                let mut step_records = Vec::with_capacity(state.active.len());
                for &a in &state.active {
                    let (i, j) = state.pairs[a];
                    let gap_after = cand_saliency.scores[i] - cand_saliency.scores[j];
                    let before = merit_from_parts(old_drift_l1, lin.gaps[a], state.targets[a]);
                    let after = merit_from_parts(drift_l1, gap_after, state.targets[a]);
                    if after > before + MERIT_SLACK {
                        all_non_increasing = false;
                    }
                    worst_after = worst_after.max(after);
                    step_records.push(MeritRecord {
                        iter: attempts,
                        pair: (i, j),
                        before,
                        after,
                    });
                }
                if all_non_increasing && worst_now - worst_after >= params.eta * predicted {
                    merit_records.extend(step_records);
                    cand_eval = Some((candidate, cand_saliency));
                }
            }
        }

        if let Some((candidate, cand_saliency)) = cand_eval.take() {
            current = candidate;
            lin = linearize(net, &current, &state.pairs, state.class0, &state.probs0)?;
            // Pull each active target below the fresh gap by half the
            // realized worst reduction, floored at one radius of linear
            // descent so progress cannot stall.
            let realized = merit_records
                .iter()
                .rev()
                .take(state.active.len())
                .map(|r| r.before - r.after)
                .fold(0.0f64, f64::max);
            for &a in &state.active {
                let g1 = lin.grads[a].iter().map(|v| v.abs()).sum::<f64>();
                let decrement = (TARGET_REDUCTION_FRACTION * realized).max(state.delta * g1);
                state.targets[a] = lin.gaps[a] - decrement;
            }
            let worst = worst_merit(&lin, &state.active, &state.targets);
            frame.record(&cand_saliency, worst)?;
            if *frame.p_at_k.last().unwrap() < 1.0 {
                verdict = Some(MooVerdict::Flip);
                break;
            }
        } else {
            state.delta *= params.gamma;
            let last_p = *frame.p_at_k.last().unwrap();
            let worst = worst_merit(&lin, &state.active, &state.targets);
            frame.p_at_k.push(last_p);
            frame.objective.push(worst);
            if state.delta < params.delta_floor {
                verdict = Some(MooVerdict::TrustRegionCollapse);
                break;
            }
        }
    }

    let verdict = verdict.unwrap_or(MooVerdict::IterationCap);
    let result = frame.finish(current);
    Ok((
        result,
        MooReport {
            verdict,
            merit_records,
            removed_pairs,
        },
    ))
}

fn worst_merit(lin: &Linearization, active: &[usize], targets: &[f64]) -> f64 {
    let drift = lin.resid.iter().map(|v| v.abs()).sum::<f64>();
    active
        .iter()
        .map(|&a| merit_from_parts(drift, lin.gaps[a], targets[a]))
        .fold(0.0, f64::max)
}
