//! BLEU and the n-gram machinery shared with CodeBLEU's weighted component.

use std::collections::HashMap;
use std::hash::Hash;

use super::{MetricError, TextMetric, TextScore};

pub const MAX_ORDER: usize = 4;

pub(crate) fn ngram_counts<T: Hash + Eq>(toks: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if n == 0 || toks.len() < n {
        return counts;
    }
    for w in toks.windows(n) {
        *counts.entry(w).or_insert(0) += 1;
    }
    counts
}

/// Clipped matches and candidate totals for one n-gram order.
pub(crate) fn clipped<T: Hash + Eq>(cand: &[T], refr: &[T], n: usize) -> (f64, f64) {
    let c = ngram_counts(cand, n);
    let r = ngram_counts(refr, n);
    let total: usize = c.values().sum();
    let matched: usize = c
        .iter()
        .map(|(g, &k)| k.min(r.get(g).copied().unwrap_or(0)))
        .sum();
    (matched as f64, total as f64)
}

pub(crate) fn brevity_penalty(cand_len: usize, ref_len: usize) -> f64 {
    if cand_len == 0 {
        0.0
    } else if cand_len > ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / cand_len as f64).exp()
    }
}

/// Geometric mean of per-order precisions with uniform weights.
///
/// Orders the candidate is too short to have are left out. An order with
/// zero matches contributes `1 / (2^k * total)`, where `k` counts the
/// zero-match orders seen so far, so a disjoint pair scores small but never 0.
pub(crate) fn smoothed_precision(stats: &[(f64, f64)]) -> f64 {
    let used: Vec<_> = stats.iter().filter(|(_, t)| *t > 0.0).collect();
    if used.is_empty() {
        return 0.0;
    }
    let mut k = 0;
    let mut log_sum = 0.0;
    for (m, t) in &used {
        let p = if *m > 0.0 {
            m / t
        } else {
            k += 1;
            1.0 / (2f64.powi(k) * t)
        };
        log_sum += p.ln();
    }
    (log_sum / used.len() as f64).exp()
}

/// Sentence BLEU-4, scaled to [0, 100].
pub fn bleu<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Result<TextScore, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    Ok(TextScore::new(TextMetric::Bleu, 100.0 * bleu_raw(&cand, &refr)))
}

pub(crate) fn bleu_raw<T: Hash + Eq>(cand: &[T], refr: &[T]) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let stats: Vec<_> = (1..=MAX_ORDER).map(|n| clipped(cand, refr, n)).collect();
    brevity_penalty(cand.len(), refr.len()) * smoothed_precision(&stats)
}

/// BLEU where unigram matches are weighted per token (CodeBLEU's keyword-aware
/// component). Higher orders are unweighted.
pub(crate) fn weighted_bleu_raw<T: Hash + Eq>(cand: &[T], refr: &[T], weight: impl Fn(&T) -> f64) -> f64 {
    if cand.is_empty() {
        return 0.0;
    }
    let rc = ngram_counts(refr, 1);
    let cc = ngram_counts(cand, 1);
    let mut m1 = 0.0;
    let mut t1 = 0.0;
    for (g, &k) in &cc {
        let w = weight(&g[0]);
        m1 += w * k.min(rc.get(g).copied().unwrap_or(0)) as f64;
        t1 += w * k as f64;
    }
    let mut stats = vec![(m1, t1)];
    stats.extend((2..=MAX_ORDER).map(|n| clipped(cand, refr, n)));
    brevity_penalty(cand.len(), refr.len()) * smoothed_precision(&stats)
}
