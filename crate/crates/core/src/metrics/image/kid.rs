use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{FeatureSet, ImageMetric, ImageMetricError, ImageScore};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KidParams {
    pub subsets: usize,
    pub subset_size: usize,
    pub seed: u64,
}

impl Default for KidParams {
    fn default() -> Self {
        KidParams {
            subsets: 10,
            subset_size: 100,
            seed: 0,
        }
    }
}

/// `(xᵀy / d + 1)³`
pub fn poly_kernel(x: &[f64], y: &[f64]) -> f64 {
    let dot: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    (dot / x.len() as f64 + 1.0).powi(3)
}

/// Unbiased MMD² over paired samples of equal size `m`:
/// `1/(m(m-1)) Σ_{i≠j} [k(xᵢ,xⱼ) + k(yᵢ,yⱼ) - k(xᵢ,yⱼ) - k(xⱼ,yᵢ)]`.
pub fn mmd2_unbiased(x: &[&[f64]], y: &[&[f64]]) -> f64 {
    let m = x.len();
    debug_assert_eq!(m, y.len());
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            if i != j {
                total += poly_kernel(x[i], x[j]) + poly_kernel(y[i], y[j])
                    - poly_kernel(x[i], y[j])
                    - poly_kernel(x[j], y[i]);
            }
        }
    }
    total / (m * (m - 1)) as f64
}

fn rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    m.row_iter().map(|r| r.iter().copied().collect()).collect()
}

/// Kernel Inception Distance: mean of [`mmd2_unbiased`] over `s` seeded
/// subsets of size `m = min(n_real, n_gen, subset_size)`.
///
/// Subset indices are sorted so a subset covering a whole set keeps its
/// order. When both sets have the same size the real and generated subsets
/// share indices. The estimator is unbiased and may be slightly negative.
pub fn kid(real: &FeatureSet, gen: &FeatureSet, params: &KidParams) -> Result<ImageScore, ImageMetricError> {
    if real.model != gen.model || real.dim() != gen.dim() {
        return Err(ImageMetricError::ModelMismatch);
    }
    let m = real.len().min(gen.len()).min(params.subset_size);
    if m < 2 {
        return Err(ImageMetricError::DegenerateInput("KID needs at least 2 vectors per set".into()));
    }
    if params.subsets == 0 {
        return Err(ImageMetricError::DegenerateInput("subset count must be positive".into()));
    }
    let xr = rows(&real.vectors);
    let xg = rows(&gen.vectors);
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let mut pick = |n: usize| -> Vec<usize> {
        let mut idx = sample(&mut rng, n, m).into_vec();
        idx.sort_unstable();
        idx
    };

    let mut values = Vec::with_capacity(params.subsets);
    for _ in 0..params.subsets {
        let ir = pick(xr.len());
        let ig = if xr.len() == xg.len() { ir.clone() } else { pick(xg.len()) };
        let x: Vec<&[f64]> = ir.iter().map(|&i| xr[i].as_slice()).collect();
        let y: Vec<&[f64]> = ig.iter().map(|&i| xg[i].as_slice()).collect();
        values.push(mmd2_unbiased(&x, &y));
    }
    let mean = values.iter().sum::<f64>() / values.len() as f64;
    let std = (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / values.len() as f64).sqrt();
    if !mean.is_finite() {
        return Err(ImageMetricError::NumericalFailure("non-finite KID".into()));
    }
    Ok(ImageScore {
        metric: ImageMetric::Kid,
        value: mean,
        detail: BTreeMap::from([
            ("std".to_string(), std),
            ("subsets".to_string(), params.subsets as f64),
            ("subset_size".to_string(), m as f64),
        ]),
    })
}
