//! Mechanical verification of diagram code: TeX compilation, log parsing,
//! rasterization, and an in-process validator for machines without TeX.

mod compile;
mod preview;
mod raster;
mod texlog;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::{parse_lenient, DiagramCode, Diagnostics};

pub use compile::{compile, tex_version, wrap_document, CompilerConfig, CompilerMode};
pub use preview::render_preview;
pub use raster::{rasterize, RasterizerConfig};
pub use texlog::parse_log;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum CompileStatus {
    Success,
    CompileError,
    Timeout,
    ToolMissing,
    Skipped,
}

impl CompileStatus {
    pub fn is_failure(self) -> bool {
        matches!(self, CompileStatus::CompileError | CompileStatus::Timeout)
    }
}

/// Which checker produced a [`CompileResult`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Checker {
    /// External TeX toolchain.
    #[default]
    Tex,
    /// In-process structural validator; never produces an artifact.
    Fast,
    /// No check ran.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CompileDiagnostic {
    pub line: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompileResult {
    pub status: CompileStatus,
    #[serde(default)]
    pub checker: Checker,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub diagnostics: Vec<CompileDiagnostic>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub artifact: Option<PathBuf>,
    /// Wall-clock seconds.
    #[serde(default)]
    pub duration: f64,
}

impl CompileResult {
    pub fn skipped() -> Self {
        CompileResult {
            status: CompileStatus::Skipped,
            checker: Checker::None,
            diagnostics: Vec::new(),
            artifact: None,
            duration: 0.0,
        }
    }

    pub fn passed(&self) -> bool {
        self.status == CompileStatus::Success
    }
}

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("`{0}` not found on PATH")]
    ToolMissing(String),
    #[error("conversion failed: {0}")]
    ConversionFailed(String),
    #[error("artifact {0} does not exist")]
    ArtifactMissing(PathBuf),
    #[error("dpi must be positive")]
    InvalidDpi,
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Structural checks that approximate "compiles": balanced braces and
/// brackets, matched environments, and `;`-terminated statements. An empty
/// result means plausibly compilable; it is not a guarantee.
pub fn validate_fast(code: &DiagramCode) -> Diagnostics {
    parse_lenient(code).1
}

/// [`validate_fast`] packaged as a [`CompileResult`], with byte offsets
/// converted to 1-based lines.
pub fn check_fast(code: &DiagramCode) -> CompileResult {
    let started = std::time::Instant::now();
    let diags = validate_fast(code);
    let src = code.source();
    let diagnostics: Vec<_> = diags
        .iter()
        .map(|d| CompileDiagnostic {
            line: 1 + src[..d.offset.min(src.len())].matches('\n').count(),
            message: d.to_string(),
        })
        .collect();
    CompileResult {
        status: if diagnostics.is_empty() {
            CompileStatus::Success
        } else {
            CompileStatus::CompileError
        },
        checker: Checker::Fast,
        diagnostics,
        artifact: None,
        duration: started.elapsed().as_secs_f64(),
    }
}
