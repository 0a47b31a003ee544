//! Cross-boundary pair selection for gap regularizers.

use ndarray::Array1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::explain::Ranking;

/// Which (salient, non-salient) pairs a gap regularizer sums over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "scheme", rename_all = "snake_case")]
pub enum PairScheme {
    /// All k(n-k) cross-boundary pairs.
    Full,
    /// Pairs mirrored around the boundary: (rank k-i, rank k+i) for
    /// i = 1..=k_prime, in 1-based rank space.
    Anchor { k_prime: usize },
    /// The k_prime cross-boundary pairs with the smallest current gap,
    /// greedily constrained to distinct salient and distinct non-salient
    /// features.
    MinimalGap { k_prime: usize },
}

impl PairScheme {
    /// Default scheme for a given width: the full double sum stays exact at
    /// small n, the anchor form keeps the cost near-linear beyond that.
    pub fn default_for(n: usize, k: usize) -> PairScheme {
        if n <= 64 {
            PairScheme::Full
        } else {
            PairScheme::Anchor { k_prime: k }
        }
    }
}

/// Expands a scheme into concrete feature pairs for one ranking.
///
/// `scores` are the saliency values the ranking was built from; only the
/// minimal-gap scheme reads them. Anchor widths larger than the ranking can
/// host are clamped with a warning, matching configs that ask for the
/// boundary rank itself.
pub fn select_pairs(
    ranking: &Ranking,
    scores: &Array1<f64>,
    scheme: PairScheme,
) -> Result<Vec<(usize, usize)>> {
    let n = ranking.order.len();
    let k = ranking.k;
    if scores.len() != n {
        return Err(Error::Shape(format!(
            "{} scores for a ranking of {} features",
            scores.len(),
            n
        )));
    }
    if k == 0 || k >= n {
        return Err(Error::Usage(format!(
            "top-set size must lie in 1..{n}, got {k}"
        )));
    }
    match scheme {
        PairScheme::Full => {
            let mut pairs = Vec::with_capacity(k * (n - k));
            for &i in ranking.top_set() {
                for &j in ranking.bottom_set() {
                    pairs.push((i, j));
                }
            }
            Ok(pairs)
        }
        PairScheme::Anchor { k_prime } => {
            let max = (k - 1).min(n - k);
            if max == 0 {
                return Err(Error::Usage(format!(
                    "anchor pairs need ranks on both sides of the boundary; k={k}, n={n} leave none"
                )));
            }
            let effective = if k_prime > max {
                log::warn!("anchor width {k_prime} clamped to {max} for k={k}, n={n}");
                max
            } else if k_prime == 0 {
                return Err(Error::Usage("anchor width must be at least 1".into()));
            } else {
                k_prime
            };
            // 1-based ranks k-i and k+i are order[k-i-1] and order[k+i-1].
            Ok((1..=effective)
                .map(|i| (ranking.order[k - i - 1], ranking.order[k + i - 1]))
                .collect())
        }
        PairScheme::MinimalGap { k_prime } => {
            let max = k.min(n - k);
            if k_prime == 0 {
                return Err(Error::Usage("minimal-gap width must be at least 1".into()));
            }
            if k_prime > max {
                return Err(Error::Usage(format!(
                    "at most {max} distinct-feature pairs exist for k={k}, n={n}, got width {k_prime}"
                )));
            }
            let mut candidates = Vec::with_capacity(k * (n - k));
            for &i in ranking.top_set() {
                for &j in ranking.bottom_set() {
                    candidates.push((scores[i] - scores[j], i, j));
                }
            }
            // Stable order: by gap, then by the deterministic enumeration.
            candidates.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite gaps"));
            let mut used_top = vec![false; n];
            let mut used_bottom = vec![false; n];
            let mut pairs = Vec::with_capacity(k_prime);
            for (_, i, j) in candidates {
                if used_top[i] || used_bottom[j] {
                    continue;
                }
                used_top[i] = true;
                used_bottom[j] = true;
                pairs.push((i, j));
                if pairs.len() == k_prime {
                    break;
                }
            }
            Ok(pairs)
        }
    }
}
