use std::collections::HashMap;

use super::{MetricError, TextMetric, TextScore};

/// ROUGE-L recall weight.
pub const ROUGE_BETA: f64 = 1.2;
pub const CHRF_ORDER: usize = 6;
pub const CHRF_BETA: f64 = 2.0;

pub(crate) fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    if a.is_empty() || b.is_empty() {
        return 0;
    }
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y {
                prev[j] + 1
            } else {
                cur[j].max(prev[j + 1])
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS-based F-measure: `(1 + β²)·P·R / (R + β²·P)` with β = 1.2.
pub fn rouge_l<T: AsRef<str>>(candidate: &[T], reference: &[T]) -> Result<TextScore, MetricError> {
    if reference.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let cand: Vec<&str> = candidate.iter().map(AsRef::as_ref).collect();
    let refr: Vec<&str> = reference.iter().map(AsRef::as_ref).collect();
    let lcs = lcs_len(&cand, &refr) as f64;
    if lcs == 0.0 {
        return Ok(TextScore::new(TextMetric::RougeL, 0.0));
    }
    let p = lcs / cand.len() as f64;
    let r = lcs / refr.len() as f64;
    let b2 = ROUGE_BETA * ROUGE_BETA;
    let f = (1.0 + b2) * p * r / (r + b2 * p);
    Ok(TextScore::new(TextMetric::RougeL, 100.0 * f))
}

/// Character n-gram F-score (n = 1..6, β = 2), whitespace excluded.
///
/// Per-order F-scores are averaged over the orders both strings are long
/// enough to have.
pub fn chrf(candidate: &str, reference: &str) -> Result<TextScore, MetricError> {
    let refr: Vec<char> = reference.chars().filter(|c| !c.is_whitespace()).collect();
    if refr.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let cand: Vec<char> = candidate.chars().filter(|c| !c.is_whitespace()).collect();
    let b2 = CHRF_BETA * CHRF_BETA;
    let mut sum = 0.0;
    let mut orders = 0;
    for n in 1..=CHRF_ORDER {
        if cand.len() < n || refr.len() < n {
            continue;
        }
        let cc = char_ngrams(&cand, n);
        let rc = char_ngrams(&refr, n);
        let matched: usize = cc
            .iter()
            .map(|(g, &k)| k.min(rc.get(g).copied().unwrap_or(0)))
            .sum();
        let p = matched as f64 / (cand.len() - n + 1) as f64;
        let r = matched as f64 / (refr.len() - n + 1) as f64;
        let f = if p + r > 0.0 {
            (1.0 + b2) * p * r / (b2 * p + r)
        } else {
            0.0
        };
        sum += f;
        orders += 1;
    }
    let value = if orders == 0 { 0.0 } else { 100.0 * sum / orders as f64 };
    Ok(TextScore::new(TextMetric::ChrF, value))
}

fn char_ngrams(chars: &[char], n: usize) -> HashMap<&[char], usize> {
    let mut m = HashMap::new();
    for w in chars.windows(n) {
        *m.entry(w).or_insert(0) += 1;
    }
    m
}

/// Character-level Levenshtein distance, two-row dynamic programme.
pub fn levenshtein(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let (a, b) = if a.len() < b.len() { (b, a) } else { (a, b) };
    let mut prev: Vec<usize> = (0..=b.len()).collect();
    let mut cur = vec![0usize; b.len() + 1];
    for (i, ca) in a.iter().enumerate() {
        cur[0] = i + 1;
        for (j, cb) in b.iter().enumerate() {
            let sub = prev[j] + usize::from(ca != cb);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// `100 · levenshtein / max(|c|, |r|)`; lower is better.
pub fn edit_distance(candidate: &str, reference: &str) -> Result<TextScore, MetricError> {
    let longest = candidate.chars().count().max(reference.chars().count());
    if longest == 0 {
        return Err(MetricError::BothEmpty);
    }
    let d = levenshtein(candidate, reference);
    Ok(TextScore::new(
        TextMetric::EditDist,
        100.0 * d as f64 / longest as f64,
    ))
}

/// `1 - levenshtein / max(|a|, |b|)` in [0, 1]; two empty strings are identical.
pub(crate) fn string_similarity(a: &str, b: &str) -> f64 {
    let longest = a.chars().count().max(b.chars().count());
    if longest == 0 {
        return 1.0;
    }
    1.0 - levenshtein(a, b) as f64 / longest as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rouge_disjoint_and_identical() {
        let a = ["x", "y"];
        let b = ["p", "q"];
        assert_eq!(rouge_l(&a, &b).unwrap().value, 0.0);
        assert!((rouge_l(&a, &a).unwrap().value - 100.0).abs() < 1e-12);
    }

    #[test]
    fn chrf_no_shared_characters() {
        assert_eq!(chrf("abc", "xyz").unwrap().value, 0.0);
        assert!((chrf("a b c", "abc").unwrap().value - 100.0).abs() < 1e-12);
    }

    #[test]
    fn chrf_whitespace_only_reference() {
        assert_eq!(chrf("a", "  \n"), Err(MetricError::EmptyReference));
    }

    #[test]
    fn edit_distance_cases() {
        assert_eq!(edit_distance("abc", "abc").unwrap().value, 0.0);
        assert_eq!(edit_distance("", "ab").unwrap().value, 100.0);
        assert_eq!(edit_distance("", ""), Err(MetricError::BothEmpty));
        assert_eq!(levenshtein("kitten", "sitting"), 3);
        assert_eq!(levenshtein("héllo", "hello"), 1);
    }
}
