//! Evaluation metrics: ranking overlap, AUC, faithfulness under feature
//! removal, and correlation.

use std::collections::BTreeMap;

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::explain::{ranking, RankOrder, SaliencyMap};
use crate::model::{predict, Model};
use crate::util::{pairwise_mean, pairwise_sum};

/// Top-k overlap between two saliency maps: `|topk(a) ∩ topk(b)| / k`.
pub fn precision_at_k(
    original: &SaliencyMap,
    perturbed: &SaliencyMap,
    k: usize,
    order: RankOrder,
) -> Result<f64> {
    if original.len() != perturbed.len() {
        return Err(Error::Shape(format!(
            "saliency maps have {} vs {} features",
            original.len(),
            perturbed.len()
        )));
    }
    if k == 0 {
        return Err(Error::Usage("top-set size must be at least 1".into()));
    }
    let ra = ranking(original, k, order)?;
    let rb = ranking(perturbed, k, order)?;
    let sa: std::collections::BTreeSet<usize> = ra.top_set().iter().copied().collect();
    let hits = rb.top_set().iter().filter(|f| sa.contains(f)).count();
    Ok(hits as f64 / k as f64)
}

/// Binary AUC of scores against 0/1 labels, Mann-Whitney form with tied
/// scores counted half.
pub fn auc_from_scores(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores vs {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if labels.iter().any(|&y| y > 1) {
        return Err(Error::Usage("AUC is defined for binary labels".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::Usage(
            "AUC needs at least one sample of each class".into(),
        ));
    }
    // Rank-sum with average ranks on ties.
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).expect("finite scores"));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && scores[idx[j + 1]] == scores[idx[i]] {
            j += 1;
        }
        // Ranks are 1-based; tied block shares the average rank.
        let avg_rank = (i + j + 2) as f64 / 2.0;
        for &s in &idx[i..=j] {
            if labels[s] == 1 {
                rank_sum_pos += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// AUC of the model's class-1 probability over a dataset.
pub fn auc<M: Model + ?Sized>(net: &M, dataset: &Dataset) -> Result<f64> {
    if net.n_classes() != 2 {
        return Err(Error::Usage(
            "model AUC is defined for two-class models".into(),
        ));
    }
    let mut scores = Vec::with_capacity(dataset.len());
    for row in dataset.features.outer_iter() {
        let x = row.to_owned();
        scores.push(net.forward(&x)?.probabilities[1]);
    }
    auc_from_scores(&scores, &dataset.labels)
}

/// What removed features are replaced with.
#[derive(Debug, Clone, PartialEq)]
pub enum RemovalBaseline {
    /// Zero in the (normalized) feature space.
    Zero,
    /// Per-feature substitute values, e.g. training-set means.
    PerFeature(Array1<f64>),
}

impl RemovalBaseline {
    fn value(&self, feature: usize) -> f64 {
        match self {
            RemovalBaseline::Zero => 0.0,
            RemovalBaseline::PerFeature(vals) => vals[feature],
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if let RemovalBaseline::PerFeature(vals) = self {
            if vals.len() != n {
                return Err(Error::Shape(format!(
                    "baseline has {} entries, input has {n}",
                    vals.len()
                )));
            }
        }
        Ok(())
    }
}

fn masked(x: &Array1<f64>, remove: &[usize], baseline: &RemovalBaseline) -> Array1<f64> {
    let mut out = x.clone();
    for &f in remove {
        out[f] = baseline.value(f);
    }
    out
}

/// Result of a decision-flip scan.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Dffot {
    /// Smallest fraction of features whose removal flips the prediction;
    /// 1.0 when no prefix flips it.
    pub fraction: f64,
    pub flipped: bool,
}

/// Decision flip under ordered feature removal: remove the top-ranked
/// feature, then the top two, and so on, until the predicted class changes.
pub fn dffot<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    saliency: &SaliencyMap,
    order: RankOrder,
    baseline: &RemovalBaseline,
) -> Result<Dffot> {
    let n = x.len();
    if saliency.len() != n {
        return Err(Error::Shape(format!(
            "saliency has {} entries, input has {n}",
            saliency.len()
        )));
    }
    baseline.check(n)?;
    let class = predict(net, x)?;
    let rank = ranking(saliency, n, order)?;
    for m in 1..=n {
        let xm = masked(x, &rank.order[..m], baseline);
        if predict(net, &xm)? != class {
            return Ok(Dffot {
                fraction: m as f64 / n as f64,
                flipped: true,
            });
        }
    }
    Ok(Dffot {
        fraction: 1.0,
        flipped: false,
    })
}

/// Removal-count schedule for comp/suff.
#[derive(Debug, Clone, PartialEq)]
pub struct RemovalSet(pub Vec<usize>);

impl RemovalSet {
    /// Every count `1..=n` for small inputs; a percentage grid
    /// (1, 5, 10, 20, 50 percent, rounded up) above 32 features.
    pub fn default_for(n: usize) -> Self {
        if n <= 32 {
            RemovalSet((1..=n).collect())
        } else {
            let mut ks: Vec<usize> = [0.01, 0.05, 0.10, 0.20, 0.50]
                .iter()
                .map(|p| ((p * n as f64).ceil() as usize).max(1))
                .collect();
            ks.dedup();
            RemovalSet(ks)
        }
    }

    fn check(&self, n: usize) -> Result<()> {
        if self.0.is_empty() {
            return Err(Error::Usage("removal set is empty".into()));
        }
        if self.0.iter().any(|&k| k == 0 || k > n) {
            return Err(Error::Usage(format!(
                "removal counts must lie in 1..={n}"
            )));
        }
        Ok(())
    }
}

/// Comprehensiveness: mean drop in the predicted-class probability when the
/// top-k features are removed, over the removal schedule.
pub fn comp<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    saliency: &SaliencyMap,
    removal: &RemovalSet,
    order: RankOrder,
    baseline: &RemovalBaseline,
) -> Result<f64> {
    faithfulness(net, x, saliency, removal, order, baseline, false)
}

/// Sufficiency: mean drop in the predicted-class probability when only the
/// top-k features are kept, over the removal schedule. Lower is better.
pub fn suff<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    saliency: &SaliencyMap,
    removal: &RemovalSet,
    order: RankOrder,
    baseline: &RemovalBaseline,
) -> Result<f64> {
    faithfulness(net, x, saliency, removal, order, baseline, true)
}

fn faithfulness<M: Model + ?Sized>(
    net: &M,
    x: &Array1<f64>,
    saliency: &SaliencyMap,
    removal: &RemovalSet,
    order: RankOrder,
    baseline: &RemovalBaseline,
    keep_top: bool,
) -> Result<f64> {
    let n = x.len();
    if saliency.len() != n {
        return Err(Error::Shape(format!(
            "saliency has {} entries, input has {n}",
            saliency.len()
        )));
    }
    baseline.check(n)?;
    removal.check(n)?;
    let class = predict(net, x)?;
    let p0 = net.forward(x)?.probabilities[class];
    let rank = ranking(saliency, n, order)?;
    let mut drops = Vec::with_capacity(removal.0.len());
    for &m in &removal.0 {
        let affected: Vec<usize> = if keep_top {
            rank.order[m..].to_vec()
        } else {
            rank.order[..m].to_vec()
        };
        let xm = masked(x, &affected, baseline);
        let pm = net.forward(&xm)?.probabilities[class];
        drops.push((p0 - pm).abs());
    }
    Ok(pairwise_mean(&drops))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Pearson,
    Spearman,
}

/// Pearson or Spearman correlation; needs at least three points and
/// non-constant series.
pub fn correlation(xs: &[f64], ys: &[f64], kind: CorrelationKind) -> Result<f64> {
    if xs.len() != ys.len() {
        return Err(Error::Shape(format!(
            "{} vs {} values",
            xs.len(),
            ys.len()
        )));
    }
    if xs.len() < 3 {
        return Err(Error::Usage(
            "correlation needs at least three points".into(),
        ));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("correlation inputs".into()));
    }
    match kind {
        CorrelationKind::Pearson => pearson(xs, ys),
        CorrelationKind::Spearman => {
            let rx = average_ranks(xs);
            let ry = average_ranks(ys);
            pearson(&rx, &ry)
        }
    }
}

fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64> {
    let mx = pairwise_mean(xs);
    let my = pairwise_mean(ys);
    let cov: Vec<f64> = xs
        .iter()
        .zip(ys)
        .map(|(x, y)| (x - mx) * (y - my))
        .collect();
    let vx: Vec<f64> = xs.iter().map(|x| (x - mx) * (x - mx)).collect();
    let vy: Vec<f64> = ys.iter().map(|y| (y - my) * (y - my)).collect();
    let denom = (pairwise_sum(&vx) * pairwise_sum(&vy)).sqrt();
    if denom == 0.0 {
        return Err(Error::Usage(
            "correlation is undefined for a constant series".into(),
        ));
    }
    Ok(pairwise_sum(&cov) / denom)
}

/// 1-based ranks with ties averaged.
fn average_ranks(xs: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..xs.len()).collect();
    idx.sort_by(|&a, &b| xs[a].partial_cmp(&xs[b]).expect("finite values"));
    let mut ranks = vec![0.0; xs.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && xs[idx[j + 1]] == xs[idx[i]] {
            j += 1;
        }
        let avg = (i + j + 2) as f64 / 2.0;
        for &s in &idx[i..=j] {
            ranks[s] = avg;
        }
        i = j + 1;
    }
    ranks
}

/// Per-sample metric values plus pairwise-summed aggregates.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub metrics: Vec<String>,
    pub per_sample: Vec<BTreeMap<String, f64>>,
    pub aggregates: BTreeMap<String, f64>,
    pub metadata: ReportMeta,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReportMeta {
    pub k: Option<usize>,
    pub removal_counts: Option<Vec<usize>>,
    pub attack_config_hash: Option<String>,
}

impl MetricReport {
    /// Builds aggregates as pairwise-summed means of the per-sample values.
    pub fn from_rows(
        metrics: Vec<String>,
        per_sample: Vec<BTreeMap<String, f64>>,
        metadata: ReportMeta,
    ) -> Self {
        let mut aggregates = BTreeMap::new();
        for name in &metrics {
            let vals: Vec<f64> = per_sample
                .iter()
                .filter_map(|row| row.get(name).copied())
                .collect();
            if !vals.is_empty() {
                aggregates.insert(name.clone(), pairwise_mean(&vals));
            }
        }
        MetricReport {
            metrics,
            per_sample,
            aggregates,
            metadata,
        }
    }
}
