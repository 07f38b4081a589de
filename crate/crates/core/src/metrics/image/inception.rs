use std::collections::BTreeMap;

use nalgebra::DMatrix;

use super::{ImageMetric, ImageMetricError, ImageScore};

/// Row-wise softmax via log-sum-exp.
pub fn softmax_rows(logits: &DMatrix<f64>) -> DMatrix<f64> {
    let mut p = logits.clone();
    for mut row in p.row_iter_mut() {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        row.apply(|v| *v = (*v - lse).exp());
    }
    p
}

/// Mean KL between each row and the mean row. The mean is accumulated as
/// offsets from the first row so identical rows give exactly zero.
fn mean_kl(p: &DMatrix<f64>) -> f64 {
    let n = p.nrows();
    let first = p.row(0).into_owned();
    let mut offset = first.clone() * 0.0;
    for r in p.row_iter() {
        offset += r - &first;
    }
    let marginal = &first + offset / n as f64;
    let mut total = 0.0;
    for r in p.row_iter() {
        for (pi, qi) in r.iter().zip(marginal.iter()) {
            if *pi > 0.0 {
                total += pi * (pi.ln() - qi.ln());
            }
        }
    }
    total / n as f64
}

/// `exp(mean KL(p(y|x) ‖ p(y)))`, averaged over `splits` contiguous chunks.
///
/// Each split's KL is clamped to `[0, ln k]` so roundoff cannot push the
/// score outside `[1, k]`.
pub fn inception_score(logits: &DMatrix<f64>, splits: usize) -> Result<ImageScore, ImageMetricError> {
    let (n, k) = logits.shape();
    if n < 2 || k < 2 {
        return Err(ImageMetricError::DegenerateInput("inception score needs n >= 2 and k >= 2".into()));
    }
    if splits == 0 || splits > n {
        return Err(ImageMetricError::DegenerateInput(format!("cannot split {n} rows into {splits}")));
    }
    if logits.iter().any(|v| !v.is_finite()) {
        return Err(ImageMetricError::NumericalFailure("non-finite logit".into()));
    }
    let p = softmax_rows(logits);
    let ln_k = (k as f64).ln();
    let mut scores = Vec::with_capacity(splits);
    for s in 0..splits {
        let lo = s * n / splits;
        let hi = (s + 1) * n / splits;
        let part = p.rows(lo, hi - lo).into_owned();
        scores.push(mean_kl(&part).clamp(0.0, ln_k).exp());
    }
    let mean = scores.iter().sum::<f64>() / splits as f64;
    let std = (scores.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / splits as f64).sqrt();
    Ok(ImageScore {
        metric: ImageMetric::Is,
        value: mean,
        detail: BTreeMap::from([("std".to_string(), std), ("splits".to_string(), splits as f64)]),
    })
}
