use std::path::Path;
use std::process::{Command, Stdio};

use image::RgbImage;
use serde::{Deserialize, Serialize};

use super::compile::find_on_path;
use super::VerifyError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RasterizerConfig {
    pub command: String,
    /// `{dpi}`, `{input}` and `{output_stem}` are substituted. The tool must
    /// write `<output_stem>.png`.
    pub args: Vec<String>,
    pub dpi: u32,
}

impl Default for RasterizerConfig {
    fn default() -> Self {
        RasterizerConfig {
            command: "pdftoppm".into(),
            args: ["-r", "{dpi}", "-png", "-singlefile", "{input}", "{output_stem}"]
                .map(String::from)
                .to_vec(),
            dpi: 150,
        }
    }
}

impl RasterizerConfig {
    pub fn available(&self) -> bool {
        find_on_path(&self.command)
    }
}

/// Converts the first page of `artifact` to an RGB raster. Scratch files live
/// in a private temporary directory that is removed on every path.
pub fn rasterize(artifact: &Path, dpi: u32, cfg: &RasterizerConfig) -> Result<RgbImage, VerifyError> {
    if dpi == 0 {
        return Err(VerifyError::InvalidDpi);
    }
    if !artifact.is_file() {
        return Err(VerifyError::ArtifactMissing(artifact.to_path_buf()));
    }
    if !find_on_path(&cfg.command) {
        return Err(VerifyError::ToolMissing(cfg.command.clone()));
    }
    let tmp = tempfile::Builder::new().prefix("raster-").tempdir()?;
    let stem = tmp.path().join("page");
    let input = artifact.to_string_lossy();
    let stem_s = stem.to_string_lossy();
    let args: Vec<String> = cfg
        .args
        .iter()
        .map(|a| {
            a.replace("{dpi}", &dpi.to_string())
                .replace("{input}", &input)
                .replace("{output_stem}", &stem_s)
        })
        .collect();
    let out = Command::new(&cfg.command)
        .args(&args)
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::piped())
        .output()
        .map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => VerifyError::ToolMissing(cfg.command.clone()),
            _ => VerifyError::Io(e),
        })?;
    if !out.status.success() {
        let msg = String::from_utf8_lossy(&out.stderr).trim().to_string();
        return Err(VerifyError::ConversionFailed(if msg.is_empty() {
            format!("{} exited with {}", cfg.command, out.status)
        } else {
            msg
        }));
    }
    let png = stem.with_extension("png");
    let img = image::open(&png).map_err(|e| VerifyError::ConversionFailed(format!("{}: {e}", png.display())))?;
    Ok(img.to_rgb8())
}
