//! Image-fidelity metrics. SSIM is computed natively; FID, KID, C-FID and IS
//! consume feature vectors or logits from the sidecar; LPIPS is delegated.

mod fid;
mod inception;
mod kid;
mod linalg;
mod ssim;

use std::collections::BTreeMap;
use std::fmt;

use image::RgbImage;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::sidecar::{SidecarClient, SidecarError};

pub use fid::{covariance, fid};
pub use inception::{inception_score, softmax_rows};
pub use kid::{kid, mmd2_unbiased, poly_kernel, KidParams};
pub use linalg::{matrix_sqrt_psd, psd_eigen, trace_sqrt_psd, PSD_TOLERANCE};
pub use ssim::{luma, ssim, ssim_gray, ssim_planes, SSIM_SIGMA, SSIM_WINDOW};

pub const INCEPTION_POOL3_DIM: usize = 2048;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureModel {
    InceptionPool3,
    ClipImage,
}

impl FeatureModel {
    pub fn wire_name(self) -> &'static str {
        match self {
            FeatureModel::InceptionPool3 => "inception_pool3",
            FeatureModel::ClipImage => "clip_image",
        }
    }

    /// Fixed feature width, when the model has one.
    pub fn expected_dim(self) -> Option<usize> {
        match self {
            FeatureModel::InceptionPool3 => Some(INCEPTION_POOL3_DIM),
            FeatureModel::ClipImage => None,
        }
    }
}

/// `n` feature vectors stored as the rows of an `n×dim` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub model: FeatureModel,
    pub vectors: DMatrix<f64>,
    pub source_ids: Vec<String>,
}

impl FeatureSet {
    pub fn new(model: FeatureModel, rows: Vec<Vec<f64>>, ids: Option<Vec<String>>) -> Result<Self, ImageMetricError> {
        let n = rows.len();
        if n == 0 {
            return Err(ImageMetricError::InvalidFeatures("no vectors".into()));
        }
        let dim = rows[0].len();
        if dim == 0 || rows.iter().any(|r| r.len() != dim) {
            return Err(ImageMetricError::InvalidFeatures("vectors differ in length".into()));
        }
        if let Some(want) = model.expected_dim() {
            if dim != want {
                return Err(ImageMetricError::InvalidFeatures(format!(
                    "{} vectors must have {want} entries, got {dim}",
                    model.wire_name()
                )));
            }
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(ImageMetricError::InvalidFeatures("non-finite entry".into()));
        }
        let ids = ids.unwrap_or_else(|| (0..n).map(|i| i.to_string()).collect());
        if ids.len() != n {
            return Err(ImageMetricError::InvalidFeatures("id count differs from vector count".into()));
        }
        let vectors = DMatrix::from_row_iterator(n, dim, rows.into_iter().flatten());
        Ok(FeatureSet {
            model,
            vectors,
            source_ids: ids,
        })
    }

    pub fn len(&self) -> usize {
        self.vectors.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.nrows() == 0
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum ImageMetric {
    #[serde(rename = "IS")]
    Is,
    #[serde(rename = "FID")]
    Fid,
    #[serde(rename = "KID")]
    Kid,
    #[serde(rename = "C-FID")]
    Cfid,
    #[serde(rename = "LPIPS")]
    Lpips,
    #[serde(rename = "SSIM")]
    Ssim,
}

impl ImageMetric {
    pub const ALL: [ImageMetric; 6] = [
        ImageMetric::Is,
        ImageMetric::Fid,
        ImageMetric::Kid,
        ImageMetric::Cfid,
        ImageMetric::Lpips,
        ImageMetric::Ssim,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ImageMetric::Is => "IS",
            ImageMetric::Fid => "FID",
            ImageMetric::Kid => "KID",
            ImageMetric::Cfid => "C-FID",
            ImageMetric::Lpips => "LPIPS",
            ImageMetric::Ssim => "SSIM",
        }
    }

    pub fn higher_is_better(self) -> bool {
        matches!(self, ImageMetric::Is | ImageMetric::Ssim)
    }

    /// Pairwise metrics are averaged per sample; the rest are set-level.
    pub fn is_pairwise(self) -> bool {
        matches!(self, ImageMetric::Lpips | ImageMetric::Ssim)
    }

    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match key.as_str() {
            "is" | "inceptionscore" => ImageMetric::Is,
            "fid" => ImageMetric::Fid,
            "kid" => ImageMetric::Kid,
            "cfid" | "clipfid" => ImageMetric::Cfid,
            "lpips" => ImageMetric::Lpips,
            "ssim" => ImageMetric::Ssim,
            _ => return None,
        })
    }
}

impl fmt::Display for ImageMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageScore {
    pub metric: ImageMetric,
    pub value: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, f64>,
}

impl ImageScore {
    pub fn new(metric: ImageMetric, value: f64) -> Self {
        ImageScore {
            metric,
            value,
            detail: BTreeMap::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ImageMetricError {
    #[error("images have different dimensions")]
    DimensionMismatch,
    #[error("matrix is not symmetric")]
    NotSymmetric,
    #[error("matrix is not positive semidefinite (eigenvalue {0})")]
    NotPsd(f64),
    #[error("feature sets come from different models or widths")]
    ModelMismatch,
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("invalid features: {0}")]
    InvalidFeatures(String),
    #[error(transparent)]
    Sidecar(#[from] SidecarError),
}

/// LPIPS distance from the sidecar, returned unchanged.
pub fn lpips_pair(a: &RgbImage, b: &RgbImage, client: &SidecarClient) -> Result<ImageScore, ImageMetricError> {
    if a.dimensions() != b.dimensions() {
        return Err(ImageMetricError::DimensionMismatch);
    }
    let v = client.lpips(a, b)?;
    Ok(ImageScore::new(ImageMetric::Lpips, v))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inception_dim_contract() {
        assert!(FeatureSet::new(FeatureModel::InceptionPool3, vec![vec![0.0; 3]], None).is_err());
        let ok = FeatureSet::new(FeatureModel::InceptionPool3, vec![vec![0.0; 2048]; 2], None).unwrap();
        assert_eq!((ok.len(), ok.dim()), (2, 2048));
    }

    #[test]
    fn rejects_ragged_and_non_finite() {
        assert!(FeatureSet::new(FeatureModel::ClipImage, vec![vec![1.0, 2.0], vec![1.0]], None).is_err());
        assert!(FeatureSet::new(FeatureModel::ClipImage, vec![vec![f64::NAN]], None).is_err());
        assert!(FeatureSet::new(FeatureModel::ClipImage, vec![], None).is_err());
    }

    #[test]
    fn metric_names() {
        for m in ImageMetric::ALL {
            assert_eq!(ImageMetric::parse(m.name()), Some(m));
        }
    }
}
