//! Client for the feature sidecar: a stateless HTTP service that runs the
//! pretrained vision models (Inception, CLIP, LPIPS).
//!
//! Wire format is JSON with base64 PNG images. Transport failures are retried;
//! HTTP error statuses are returned as-is.

use std::collections::BTreeMap;
use std::io::Cursor;
use std::thread;
use std::time::Duration;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use image::{ImageFormat, RgbImage};
use nalgebra::DMatrix;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::gate::Gate;
use crate::metrics::image::{FeatureModel, FeatureSet};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SidecarConfig {
    /// Base URL such as `http://127.0.0.1:8765`. Unset disables the sidecar.
    pub url: Option<String>,
    pub timeout_secs: f64,
    /// Extra attempts after a transport failure.
    pub retries: u32,
    /// Images per request.
    pub batch_size: usize,
    pub max_in_flight: usize,
}

impl Default for SidecarConfig {
    fn default() -> Self {
        SidecarConfig {
            url: None,
            timeout_secs: 120.0,
            retries: 2,
            batch_size: 16,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SidecarError {
    #[error("sidecar unavailable: {0}")]
    Unavailable(String),
    #[error("sidecar returned HTTP {status}: {message}")]
    Http {
        status: u16,
        message: String,
        index: Option<usize>,
    },
    #[error("malformed sidecar response: {0}")]
    BadResponse(String),
    #[error("could not encode image: {0}")]
    Encode(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Health {
    pub status: String,
    #[serde(default)]
    pub models: Vec<String>,
    #[serde(default)]
    pub versions: BTreeMap<String, String>,
}

#[derive(Debug, Deserialize)]
struct FeatureResponse {
    dim: usize,
    vectors: Vec<Vec<f64>>,
    #[serde(default)]
    model_version: String,
}

#[derive(Debug, Deserialize)]
struct LogitsResponse {
    logits: Vec<Vec<f64>>,
    #[serde(default)]
    model_version: String,
}

#[derive(Debug, Deserialize)]
struct LpipsResponse {
    value: f64,
}

#[derive(Debug, Deserialize)]
struct ErrorBody {
    error: String,
    #[serde(default)]
    index: Option<usize>,
}

/// Result of a feature request, with the model version the sidecar reported.
#[derive(Debug, Clone)]
pub struct Features {
    pub set: FeatureSet,
    pub model_version: String,
}

#[derive(Debug)]
pub struct SidecarClient {
    base: String,
    agent: ureq::Agent,
    cfg: SidecarConfig,
    gate: Gate,
}

pub fn encode_png(img: &RgbImage) -> Result<String, SidecarError> {
    let mut buf = Cursor::new(Vec::new());
    img.write_to(&mut buf, ImageFormat::Png)
        .map_err(|e| SidecarError::Encode(e.to_string()))?;
    Ok(STANDARD.encode(buf.into_inner()))
}

impl SidecarClient {
    /// `None` when no URL is configured.
    pub fn from_config(cfg: &SidecarConfig) -> Option<Self> {
        cfg.url.as_ref().map(|u| Self::new(u, cfg.clone()))
    }

    pub fn new(base_url: &str, cfg: SidecarConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        SidecarClient {
            base: base_url.trim_end_matches('/').to_string(),
            agent,
            gate: Gate::new(cfg.max_in_flight),
            cfg,
        }
    }

    pub fn base_url(&self) -> &str {
        &self.base
    }

    fn call<T: DeserializeOwned>(&self, path: &str, body: Option<&Value>) -> Result<T, SidecarError> {
        let _slot = self.gate.enter();
        let url = format!("{}{}", self.base, path);
        let mut last = String::new();
        for attempt in 0..=self.cfg.retries {
            if attempt > 0 {
                thread::sleep(Duration::from_millis(50 * attempt as u64));
                log::debug!("retrying {url} (attempt {})", attempt + 1);
            }
            let sent = match body {
                Some(b) => self.agent.post(&url).send_json(b),
                None => self.agent.get(&url).call(),
            };
            let mut resp = match sent {
                Ok(r) => r,
                Err(e) => {
                    last = e.to_string();
                    continue;
                }
            };
            let status = resp.status().as_u16();
            let text = resp
                .body_mut()
                .read_to_string()
                .map_err(|e| SidecarError::BadResponse(e.to_string()))?;
            if !(200..300).contains(&status) {
                let (message, index) = match serde_json::from_str::<ErrorBody>(&text) {
                    Ok(b) => (b.error, b.index),
                    Err(_) => (text, None),
                };
                return Err(SidecarError::Http { status, message, index });
            }
            return serde_json::from_str(&text).map_err(|e| SidecarError::BadResponse(e.to_string()));
        }
        Err(SidecarError::Unavailable(format!(
            "{url}: {last} (after {} attempts)",
            self.cfg.retries + 1
        )))
    }

    pub fn health(&self) -> Result<Health, SidecarError> {
        self.call("/health", None)
    }

    /// Feature vectors for `images`, batched by the configured size.
    pub fn features(&self, model: FeatureModel, images: &[RgbImage], ids: Vec<String>) -> Result<Features, SidecarError> {
        let mut rows = Vec::with_capacity(images.len());
        let mut version = String::new();
        for chunk in images.chunks(self.cfg.batch_size.max(1)) {
            let encoded = chunk.iter().map(encode_png).collect::<Result<Vec<_>, _>>()?;
            let resp: FeatureResponse = self.call(
                "/features",
                Some(&json!({ "model": model.wire_name(), "images": encoded })),
            )?;
            if resp.vectors.len() != chunk.len() || resp.vectors.iter().any(|v| v.len() != resp.dim) {
                return Err(SidecarError::BadResponse("feature shape does not match request".into()));
            }
            version = resp.model_version;
            rows.extend(resp.vectors);
        }
        let set = FeatureSet::new(model, rows, Some(ids)).map_err(|e| SidecarError::BadResponse(e.to_string()))?;
        Ok(Features {
            set,
            model_version: version,
        })
    }

    /// Classifier logits, one row per image.
    pub fn logits(&self, images: &[RgbImage]) -> Result<(DMatrix<f64>, String), SidecarError> {
        let mut rows: Vec<Vec<f64>> = Vec::with_capacity(images.len());
        let mut version = String::new();
        for chunk in images.chunks(self.cfg.batch_size.max(1)) {
            let encoded = chunk.iter().map(encode_png).collect::<Result<Vec<_>, _>>()?;
            let resp: LogitsResponse = self.call("/logits", Some(&json!({ "images": encoded })))?;
            if resp.logits.len() != chunk.len() {
                return Err(SidecarError::BadResponse("logit row count does not match request".into()));
            }
            version = resp.model_version;
            rows.extend(resp.logits);
        }
        let k = rows.first().map_or(0, Vec::len);
        if k == 0 || rows.iter().any(|r| r.len() != k) {
            return Err(SidecarError::BadResponse("ragged logits".into()));
        }
        let n = rows.len();
        Ok((DMatrix::from_row_iterator(n, k, rows.into_iter().flatten()), version))
    }

    pub fn lpips(&self, a: &RgbImage, b: &RgbImage) -> Result<f64, SidecarError> {
        let resp: LpipsResponse = self.call("/lpips", Some(&json!({ "a": encode_png(a)?, "b": encode_png(b)? })))?;
        if !resp.value.is_finite() || resp.value < 0.0 {
            return Err(SidecarError::BadResponse(format!("invalid LPIPS value {}", resp.value)));
        }
        Ok(resp.value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unreachable_sidecar_is_unavailable() {
        // port 9 on loopback is closed in the sandbox; connection is refused quickly
        let client = SidecarClient::new(
            "http://127.0.0.1:9",
            SidecarConfig {
                timeout_secs: 2.0,
                ..Default::default()
            },
        );
        assert!(matches!(client.health(), Err(SidecarError::Unavailable(_))));
    }

    #[test]
    fn png_round_trip() {
        let img = RgbImage::from_fn(5, 4, |x, y| image::Rgb([x as u8 * 40, y as u8 * 50, 7]));
        let bytes = STANDARD.decode(encode_png(&img).unwrap()).unwrap();
        let back = image::load_from_memory(&bytes).unwrap().to_rgb8();
        assert_eq!(back, img);
    }
}
