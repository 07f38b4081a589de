use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};

use super::linalg::{matrix_sqrt_psd, trace_sqrt_psd};
use super::{FeatureModel, FeatureSet, ImageMetric, ImageMetricError, ImageScore};

/// Column means and the centered data matrix (n×d).
fn centered(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mu = x.row_sum().transpose() / n;
    let mut c = x.clone();
    for mut row in c.row_iter_mut() {
        row -= mu.transpose();
    }
    (mu, c)
}

/// Sample covariance with the `n-1` denominator.
pub fn covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
    let (_, c) = centered(x);
    let s = c.transpose() * &c / (x.nrows() as f64 - 1.0);
    (&s + s.transpose()) * 0.5
}

/// `Tr((Σ₁Σ₂)^{1/2})` through `d×d` matrices: the eigenvalues of Σ₁Σ₂ equal
/// those of `S₁Σ₂S₁` with `S₁ = Σ₁^{1/2}`, which is symmetric PSD.
fn cross_trace_cov(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<f64, ImageMetricError> {
    let r1 = matrix_sqrt_psd(s1)?;
    let m = &r1 * s2 * &r1;
    trace_sqrt_psd(&((&m + m.transpose()) * 0.5))
}

/// Same trace from the centered data when there are fewer samples than
/// dimensions: it equals the nuclear norm of `X₂X₁ᵀ` over `√((n₁-1)(n₂-1))`.
fn cross_trace_gram(c1: &DMatrix<f64>, c2: &DMatrix<f64>) -> f64 {
    let a = c2 * c1.transpose();
    let nuclear: f64 = a.singular_values().iter().sum();
    nuclear / ((c1.nrows() as f64 - 1.0) * (c2.nrows() as f64 - 1.0)).sqrt()
}

fn check_pair(real: &FeatureSet, gen: &FeatureSet) -> Result<(), ImageMetricError> {
    if real.model != gen.model || real.dim() != gen.dim() {
        return Err(ImageMetricError::ModelMismatch);
    }
    if real.len() < 2 || gen.len() < 2 {
        return Err(ImageMetricError::DegenerateInput("each feature set needs at least 2 vectors".into()));
    }
    Ok(())
}

/// Fréchet distance between Gaussian fits of two feature sets.
///
/// The cross term is evaluated in both argument orders and averaged, so the
/// result is symmetric exactly. Tiny negative roundoff is clamped to 0.
pub fn fid(real: &FeatureSet, gen: &FeatureSet) -> Result<ImageScore, ImageMetricError> {
    check_pair(real, gen)?;
    let (mu1, c1) = centered(&real.vectors);
    let (mu2, c2) = centered(&gen.vectors);
    let n1 = real.len() as f64 - 1.0;
    let n2 = gen.len() as f64 - 1.0;
    let mean_term = (&mu1 - &mu2).norm_squared();
    let tr1 = c1.norm_squared() / n1;
    let tr2 = c2.norm_squared() / n2;

    let gram = real.len().max(gen.len()) < real.dim();
    let cross = if gram {
        0.5 * (cross_trace_gram(&c1, &c2) + cross_trace_gram(&c2, &c1))
    } else {
        let s1 = c1.transpose() * &c1 / n1;
        let s2 = c2.transpose() * &c2 / n2;
        let s1 = (&s1 + s1.transpose()) * 0.5;
        let s2 = (&s2 + s2.transpose()) * 0.5;
        0.5 * (cross_trace_cov(&s1, &s2)? + cross_trace_cov(&s2, &s1)?)
    };

    let value = mean_term + tr1 + tr2 - 2.0 * cross;
    if !value.is_finite() {
        return Err(ImageMetricError::NumericalFailure("non-finite distance".into()));
    }
    let metric = match real.model {
        FeatureModel::ClipImage => ImageMetric::Cfid,
        FeatureModel::InceptionPool3 => ImageMetric::Fid,
    };
    Ok(ImageScore {
        metric,
        value: value.max(0.0),
        detail: BTreeMap::from([
            ("mean_term".to_string(), mean_term),
            ("n_real".to_string(), real.len() as f64),
            ("n_gen".to_string(), gen.len() as f64),
        ]),
    })
}
