//! TOML run configuration.
//!
//! ```toml
//! [pipeline]
//! retry_budget = 3
//!
//! [compiler]
//! mode = "auto"
//!
//! [backends.generate]
//! kind = "scripted"
//! temperature = 0.2
//! default_reply = "..."
//!
//! [sidecar]
//! url = "http://127.0.0.1:8765"
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::agent::BackendConfig;
use crate::dataset::{InspectRules, DEFAULT_SPLIT_SEED};
use crate::metrics::image::KidParams;
use crate::orchestrator::{Agents, PipelineConfig, RoleAgent, Toolchain};
use crate::sidecar::SidecarConfig;
use crate::verify::{CompilerConfig, RasterizerConfig};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{0}")]
    Parse(#[from] toml::de::Error),
    #[error("{0}")]
    Invalid(String),
}

/// A backend bound to a role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoleConfig {
    #[serde(default)]
    pub temperature: f64,
    #[serde(flatten)]
    pub backend: BackendConfig,
}

impl RoleConfig {
    pub fn build(&self) -> RoleAgent {
        RoleAgent {
            backend: self.backend.build(),
            temperature: self.temperature,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BackendsConfig {
    pub generate: Option<RoleConfig>,
    pub edit: Option<RoleConfig>,
    pub judge: Option<RoleConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MetricsConfig {
    pub kid: KidParams,
    pub is_splits: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig { kid: KidParams::default(), is_splits: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetConfig {
    pub split_seed: u64,
    /// Writes sketch codes; unset uses the offline style-stripping fallback.
    pub sketch_backend: Option<RoleConfig>,
    pub inspect: InspectRules,
}

impl Default for DatasetConfig {
    fn default() -> Self {
        DatasetConfig {
            split_seed: DEFAULT_SPLIT_SEED,
            sketch_backend: None,
            inspect: InspectRules::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub compiler: CompilerConfig,
    pub rasterizer: RasterizerConfig,
    pub backends: BackendsConfig,
    pub sidecar: SidecarConfig,
    pub metrics: MetricsConfig,
    pub dataset: DatasetConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: Config = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.compiler.timeout_secs <= 0.0 {
            return Err(ConfigError::Invalid("compiler.timeout_secs must be positive".into()));
        }
        if self.rasterizer.dpi == 0 {
            return Err(ConfigError::Invalid("rasterizer.dpi must be positive".into()));
        }
        if self.pipeline.jobs == Some(0) {
            return Err(ConfigError::Invalid("pipeline.jobs must be at least 1".into()));
        }
        if self.metrics.is_splits == 0 {
            return Err(ConfigError::Invalid("metrics.is_splits must be at least 1".into()));
        }
        if self.metrics.kid.subsets == 0 || self.metrics.kid.subset_size < 2 {
            return Err(ConfigError::Invalid("metrics.kid needs subsets >= 1 and subset_size >= 2".into()));
        }
        for (role, r) in [
            ("generate", &self.backends.generate),
            ("edit", &self.backends.edit),
            ("judge", &self.backends.judge),
        ] {
            if let Some(r) = r {
                if !(0.0..=2.0).contains(&r.temperature) {
                    return Err(ConfigError::Invalid(format!("backends.{role}.temperature must be in [0, 2]")));
                }
            }
        }
        Ok(())
    }

    pub fn agents(&self) -> Agents {
        Agents {
            generate: self.backends.generate.as_ref().map(RoleConfig::build),
            edit: self.backends.edit.as_ref().map(RoleConfig::build),
            judge: self.backends.judge.as_ref().map(RoleConfig::build),
        }
    }

    pub fn toolchain(&self, workdir: impl Into<PathBuf>) -> Toolchain {
        Toolchain {
            compiler: self.compiler.clone(),
            rasterizer: self.rasterizer.clone(),
            workdir: workdir.into(),
        }
    }

    /// Hex SHA-256 of the parsed configuration in canonical JSON form, so
    /// formatting and comments do not change it.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }
}
