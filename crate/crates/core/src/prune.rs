//! Stage-1 adaptive pruning and the pruning baselines.
//!
//! The adaptive rule computes a per-document threshold `tau = mu + k * sigma`
//! from the importance scores (`sigma` is the population standard deviation,
//! dividing by N) and keeps patches with importance strictly above it. When
//! the strict comparison keeps nothing, the single highest-importance patch
//! is retained; ties break toward the smallest index.
//!
//! Every pruner is a pure function of its inputs and returns at least one
//! kept index for every valid input.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::PatchEmbeddingSet;
use crate::numeric;

/// The surviving indices (strictly increasing) and the threshold that
/// produced them, when one exists.
#[derive(Debug, Clone, PartialEq)]
pub struct PruneOutcome {
    pub kept_indices: Vec<usize>,
    /// Absent for the random and fixed-ratio pruners, and for the pivot
    /// pruner when there were no non-pivots to de-duplicate.
    pub threshold_used: Option<f64>,
}

/// Mean, population standard deviation, and `tau = mu + k * sigma`.
pub fn adaptive_threshold(scores: &[f32], k: f64) -> Result<(f64, f64, f64)> {
    if scores.is_empty() {
        return Err(Error::Empty("scores"));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let mu = numeric::mean(scores);
    let sigma = numeric::population_std(scores, mu);
    Ok((mu, sigma, mu + k * sigma))
}

/// Indices with score strictly above `tau`; falls back to the first argmax
/// when that set is empty.
fn keep_above_with_fallback(scores: &[f64], tau: f64) -> Vec<usize> {
    let kept: Vec<usize> = (0..scores.len()).filter(|&j| scores[j] > tau).collect();
    if !kept.is_empty() {
        return kept;
    }
    let mut best = 0;
    for j in 1..scores.len() {
        if scores[j] > scores[best] {
            best = j;
        }
    }
    vec![best]
}

fn importance_of(doc: &PatchEmbeddingSet) -> Result<&[f32]> {
    doc.importance.as_deref().ok_or(Error::MissingImportance)
}

/// Adaptive thresholding on the importance scores (also the DocPruner
/// baseline).
pub fn prune_adaptive(doc: &PatchEmbeddingSet, k: f64) -> Result<PruneOutcome> {
    let imp = importance_of(doc)?;
    let (_, _, tau) = adaptive_threshold(imp, k)?;
    let scores: Vec<f64> = imp.iter().map(|&s| f64::from(s)).collect();
    Ok(PruneOutcome {
        kept_indices: keep_above_with_fallback(&scores, tau),
        threshold_used: Some(tau),
    })
}

fn fnv1a(seed: u64, doc_id: &str) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in seed.to_le_bytes().iter().chain(doc_id.as_bytes()) {
        hash ^= u64::from(*byte);
        hash = hash.wrapping_mul(0x1000_0000_01b3);
    }
    hash
}

/// Number of patches a fixed-ratio pruner removes, capped so one survives.
fn removal_count(n: usize, ratio: f64) -> usize {
    let n_rm = (ratio * n as f64).floor() as usize;
    n_rm.min(n.saturating_sub(1))
}

/// Remove `floor(ratio * N_p)` patches chosen uniformly without replacement.
/// The generator is keyed on `(seed, doc_id)`, so results do not depend on
/// corpus order or thread count.
pub fn prune_random(doc: &PatchEmbeddingSet, ratio: f64, seed: u64) -> PruneOutcome {
    let n = doc.n_patches();
    let n_rm = removal_count(n, ratio);
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, &doc.doc_id));
    let mut removed = vec![false; n];
    for idx in rand::seq::index::sample(&mut rng, n, n_rm) {
        removed[idx] = true;
    }
    PruneOutcome {
        kept_indices: (0..n).filter(|&j| !removed[j]).collect(),
        threshold_used: None,
    }
}

/// Drop the `floor(ratio * N_p)` lowest-importance patches. Ties drop the
/// larger index first, so smaller indices survive.
pub fn prune_fixed_ratio_by_attention(doc: &PatchEmbeddingSet, ratio: f64) -> Result<PruneOutcome> {
    let imp = importance_of(doc)?;
    let n = doc.n_patches();
    let n_rm = removal_count(n, ratio);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| imp[a].total_cmp(&imp[b]).then(b.cmp(&a)));
    let mut kept: Vec<usize> = order[n_rm..].to_vec();
    kept.sort_unstable();
    Ok(PruneOutcome {
        kept_indices: kept,
        threshold_used: None,
    })
}

/// Keep patches with importance strictly above a fixed global threshold,
/// with the usual single-argmax fallback.
pub fn prune_static_threshold(doc: &PatchEmbeddingSet, tau_global: f64) -> Result<PruneOutcome> {
    let imp = importance_of(doc)?;
    let scores: Vec<f64> = imp.iter().map(|&s| f64::from(s)).collect();
    Ok(PruneOutcome {
        kept_indices: keep_above_with_fallback(&scores, tau_global),
        threshold_used: Some(tau_global),
    })
}

fn mean_f64(values: &[f64]) -> f64 {
    values.iter().sum::<f64>() / values.len() as f64
}

fn population_std_f64(values: &[f64], mu: f64) -> f64 {
    let acc: f64 = values.iter().map(|v| (v - mu) * (v - mu)).sum();
    (acc / values.len() as f64).sqrt()
}

/// Composite score `alpha * a + (1 - alpha) * s` where `a` is min-max
/// normalized importance and `s` is min-max normalized cosine similarity to
/// the eos embedding, thresholded with `mean + k * std` over the composite.
pub fn prune_attention_plus_similarity(
    doc: &PatchEmbeddingSet,
    k: f64,
    alpha: f64,
) -> Result<PruneOutcome> {
    let imp = importance_of(doc)?;
    let eos = doc.eos_embedding.as_deref().ok_or(Error::MissingEos)?;

    let raw_imp: Vec<f64> = imp.iter().map(|&s| f64::from(s)).collect();
    let raw_sim: Vec<f64> = doc
        .embeddings
        .iter_rows()
        .map(|row| numeric::cosine(row, eos))
        .collect();
    let a = numeric::minmax_normalize(&raw_imp);
    let s = numeric::minmax_normalize(&raw_sim);
    let composite: Vec<f64> = a
        .iter()
        .zip(&s)
        .map(|(ai, si)| alpha * ai + (1.0 - alpha) * si)
        .collect();

    let mu = mean_f64(&composite);
    let sigma = population_std_f64(&composite, mu);
    let tau = mu + k * sigma;
    Ok(PruneOutcome {
        kept_indices: keep_above_with_fallback(&composite, tau),
        threshold_used: Some(tau),
    })
}

/// Importance filtering followed by pivot-based de-duplication: the most
/// important survivors become pivots, and any other survivor whose maximum
/// cosine similarity to a pivot exceeds a second adaptive threshold
/// (`mean + k_dup * std` over those similarities) is dropped.
pub fn prune_pivot_threshold(
    doc: &PatchEmbeddingSet,
    k: f64,
    k_dup: f64,
    num_pivots: usize,
) -> Result<PruneOutcome> {
    let imp = importance_of(doc)?;
    let important = prune_adaptive(doc, k)?.kept_indices;

    let p = num_pivots.min(important.len());
    let mut by_importance = important.clone();
    by_importance.sort_by(|&a, &b| imp[b].total_cmp(&imp[a]).then(a.cmp(&b)));
    let pivots: Vec<usize> = by_importance[..p].to_vec();
    let non_pivots: Vec<usize> = important
        .iter()
        .copied()
        .filter(|j| !pivots.contains(j))
        .collect();

    if non_pivots.is_empty() {
        return Ok(PruneOutcome {
            kept_indices: important,
            threshold_used: None,
        });
    }

    let sims: Vec<f64> = non_pivots
        .iter()
        .map(|&j| {
            pivots
                .iter()
                .map(|&pv| numeric::cosine(doc.embeddings.row(j), doc.embeddings.row(pv)))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .collect();
    let mu = mean_f64(&sims);
    let tau_s = mu + k_dup * population_std_f64(&sims, mu);

    let mut kept: Vec<usize> = pivots;
    kept.extend(
        non_pivots
            .iter()
            .zip(&sims)
            .filter(|(_, &sim)| sim <= tau_s)
            .map(|(&j, _)| j),
    );
    kept.sort_unstable();
    Ok(PruneOutcome {
        kept_indices: kept,
        threshold_used: Some(tau_s),
    })
}
