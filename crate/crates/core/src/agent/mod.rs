//! The three agents: sketch-to-code generation, code editing, and the judge
//! that compares a rendered diagram with the sketch.

mod backend;
mod openai;
pub mod prompt;
mod scripted;

use std::sync::{Arc, LazyLock};

use image::RgbImage;
use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::code::DiagramCode;
use crate::sidecar::encode_png;

pub use backend::{
    BackendError, BackendErrorKind, Capabilities, ChatBackend, ChatMessage, ChatRequest, Role,
};
pub use openai::{RemoteBackend, RemoteConfig};
pub use prompt::Feedback;
pub use scripted::{ScriptRule, ScriptedBackend, ScriptedConfig};

/// Input of one pipeline run.
#[derive(Debug, Clone, PartialEq)]
pub struct SketchTask {
    pub sketch: RgbImage,
    pub instructions: Vec<String>,
    pub edit_instructions: Option<Vec<String>>,
    /// Code to edit instead of generating from the sketch (code-to-code runs).
    pub initial_code: Option<DiagramCode>,
}

impl SketchTask {
    pub fn new(sketch: RgbImage, instructions: Vec<String>) -> Result<Self, AgentError> {
        let t = SketchTask {
            sketch,
            instructions,
            edit_instructions: None,
            initial_code: None,
        };
        t.validate()?;
        Ok(t)
    }

    pub fn with_edits(mut self, edits: Vec<String>) -> Result<Self, AgentError> {
        self.edit_instructions = Some(edits);
        self.validate()?;
        Ok(self)
    }

    pub fn with_initial_code(mut self, code: DiagramCode) -> Self {
        self.initial_code = Some(code);
        self
    }

    pub fn validate(&self) -> Result<(), AgentError> {
        if self.sketch.width() == 0 || self.sketch.height() == 0 {
            return Err(AgentError::InvalidTask("sketch has zero size".into()));
        }
        let blank = |v: &[String]| v.iter().any(|s| s.trim().is_empty());
        if blank(&self.instructions) {
            return Err(AgentError::InvalidTask("empty instruction".into()));
        }
        if let Some(e) = &self.edit_instructions {
            if e.is_empty() || blank(e) {
                return Err(AgentError::InvalidTask("edit instructions must be non-empty".into()));
            }
        }
        Ok(())
    }

    pub fn has_edits(&self) -> bool {
        self.edit_instructions.as_ref().is_some_and(|e| !e.is_empty())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Blame {
    SketchToCode,
    EditingCode,
    None,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct JudgeVerdict {
    pub aligned: bool,
    pub rationale: String,
    pub blame: Blame,
}

impl JudgeVerdict {
    /// Enforces `blame == None` exactly when aligned.
    pub fn normalized(aligned: bool, rationale: String, blame: Blame) -> Self {
        let blame = match (aligned, blame) {
            (true, _) => Blame::None,
            (false, Blame::None) => Blame::SketchToCode,
            (false, b) => b,
        };
        JudgeVerdict {
            aligned,
            rationale,
            blame,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AgentError {
    #[error("backend `{0}` has no vision capability")]
    NoVision(String),
    #[error("edit instructions are empty")]
    NoEdits,
    #[error("invalid task: {0}")]
    InvalidTask(String),
    #[error("reply contained no code")]
    EmptyCode,
    #[error(transparent)]
    Backend(#[from] BackendError),
}

static FENCE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?ms)^[ \t]*```[^\n`]*\n(.*?)^[ \t]*```").unwrap());

/// Code from a model reply: the first fenced block, else the whole reply,
/// trimmed. Applying it to its own output is a no-op.
pub fn extract_code(reply: &str) -> Option<String> {
    let code = match FENCE.captures(reply) {
        Some(c) => c[1].trim().to_string(),
        None => reply.trim().to_string(),
    };
    (!code.is_empty()).then_some(code)
}

fn sketch_png(task: &SketchTask) -> String {
    encode_png(&task.sketch).expect("in-memory PNG encoding does not fail")
}

/// Sketch-to-code: produces `C_k`.
pub fn generate_code(
    task: &SketchTask,
    backend: &dyn ChatBackend,
    feedback: Option<&Feedback>,
    temperature: f64,
) -> Result<DiagramCode, AgentError> {
    if !backend.capabilities().vision {
        return Err(AgentError::NoVision(backend.name().to_string()));
    }
    task.validate()?;
    let req = prompt::generate_request(task, sketch_png(task), feedback, temperature);
    let reply = backend.complete(&req)?;
    extract_code(&reply).map(DiagramCode::new).ok_or(AgentError::EmptyCode)
}

/// Editing: produces `C_e` from `code` and the edit list.
pub fn edit_code(
    code: &DiagramCode,
    edits: &[String],
    backend: &dyn ChatBackend,
    feedback: Option<&Feedback>,
    temperature: f64,
) -> Result<DiagramCode, AgentError> {
    if edits.is_empty() {
        return Err(AgentError::NoEdits);
    }
    let req = prompt::edit_request(code, edits, feedback, temperature);
    let reply = backend.complete(&req)?;
    extract_code(&reply).map(DiagramCode::new).ok_or(AgentError::EmptyCode)
}

#[derive(Deserialize)]
struct RawVerdict {
    aligned: bool,
    #[serde(default)]
    rationale: Option<String>,
    #[serde(default)]
    blame: Option<String>,
}

fn parse_blame(s: Option<&str>) -> Option<Blame> {
    let Some(s) = s else {
        return Some(Blame::None);
    };
    let key: String = s
        .chars()
        .filter(|c| c.is_ascii_alphanumeric())
        .collect::<String>()
        .to_ascii_lowercase();
    match key.as_str() {
        "sketchtocode" | "generate" | "generator" | "sketch" => Some(Blame::SketchToCode),
        "editingcode" | "edit" | "editor" | "editing" => Some(Blame::EditingCode),
        "none" | "" | "null" => Some(Blame::None),
        _ => None,
    }
}

/// Reads the judge's JSON answer, tolerating a code fence or prose around it.
pub fn parse_verdict(reply: &str) -> Option<JudgeVerdict> {
    let body = match FENCE.captures(reply) {
        Some(c) => c[1].to_string(),
        None => reply.to_string(),
    };
    let start = body.find('{')?;
    let end = body.rfind('}')?;
    if end < start {
        return None;
    }
    let raw: RawVerdict = serde_json::from_str(&body[start..=end]).ok()?;
    let blame = parse_blame(raw.blame.as_deref())?;
    Some(JudgeVerdict::normalized(raw.aligned, raw.rationale.unwrap_or_default(), blame))
}

/// Compares `diagram` with the task's sketch. An unparseable answer is asked
/// for once more; a second failure yields a conservative rejection that
/// blames the sketch-to-code agent.
pub fn judge(
    diagram: &RgbImage,
    task: &SketchTask,
    backend: &dyn ChatBackend,
    temperature: f64,
) -> Result<JudgeVerdict, AgentError> {
    if !backend.capabilities().vision {
        return Err(AgentError::NoVision(backend.name().to_string()));
    }
    let diagram_png = encode_png(diagram).expect("in-memory PNG encoding does not fail");
    let mut req = prompt::judge_request(task, sketch_png(task), diagram_png, temperature);
    let first = backend.complete(&req)?;
    if let Some(v) = parse_verdict(&first) {
        return Ok(v);
    }
    req.messages.push(ChatMessage::assistant(first));
    req.messages.push(ChatMessage::user(prompt::JUDGE_REASK));
    let second = backend.complete(&req)?;
    Ok(parse_verdict(&second).unwrap_or_else(|| {
        JudgeVerdict::normalized(
            false,
            "judge reply could not be parsed".into(),
            Blame::SketchToCode,
        )
    }))
}

/// Backend selection for one agent role.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BackendConfig {
    Scripted(ScriptedConfig),
    #[serde(alias = "openai")]
    Remote(RemoteConfig),
}

impl BackendConfig {
    pub fn build(&self) -> Arc<dyn ChatBackend> {
        match self {
            BackendConfig::Scripted(c) => Arc::new(ScriptedBackend::new(c.clone())),
            BackendConfig::Remote(c) => Arc::new(RemoteBackend::new(c.clone())),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn task() -> SketchTask {
        SketchTask::new(RgbImage::from_pixel(8, 8, image::Rgb([255, 255, 255])), vec!["draw it".into()]).unwrap()
    }

    #[test]
    fn extraction_rules() {
        assert_eq!(
            extract_code("Here:\n```latex\n\\begin{tikzpicture}\n\\end{tikzpicture}\n```\nDone").as_deref(),
            Some("\\begin{tikzpicture}\n\\end{tikzpicture}")
        );
        assert_eq!(extract_code("just prose \\draw;").as_deref(), Some("just prose \\draw;"));
        assert_eq!(extract_code("```\n\n```"), None);
        assert_eq!(extract_code("  "), None);
    }

    #[test]
    fn generate_uses_fenced_content() {
        let b = ScriptedBackend::constant("```\n\\begin{tikzpicture}\\node (a) {A};\\end{tikzpicture}\n```");
        let c = generate_code(&task(), &b, None, 0.0).unwrap();
        assert_eq!(c.source(), "\\begin{tikzpicture}\\node (a) {A};\\end{tikzpicture}");
        let req = &b.calls()[0];
        assert!(req.has_images());
        assert!(req.text().contains("- draw it"));
    }

    #[test]
    fn generate_requires_vision() {
        let b = ScriptedBackend::constant("x").without_vision();
        assert_eq!(generate_code(&task(), &b, None, 0.0), Err(AgentError::NoVision("scripted".into())));
        assert_eq!(b.call_count(), 0);
    }

    #[test]
    fn edit_requires_edits() {
        let b = ScriptedBackend::constant("x");
        assert_eq!(edit_code(&DiagramCode::new("x"), &[], &b, None, 0.0), Err(AgentError::NoEdits));
    }

    #[test]
    fn verdict_parsing() {
        let v = parse_verdict(r#"{"aligned":true,"rationale":"ok","blame":"SketchToCode"}"#).unwrap();
        assert_eq!(v.blame, Blame::None);
        let v = parse_verdict("```json\n{\"aligned\":false,\"blame\":\"EditingCode\",\"rationale\":\"r\"}\n```").unwrap();
        assert_eq!((v.aligned, v.blame), (false, Blame::EditingCode));
        assert!(parse_verdict("looks fine to me").is_none());
        assert!(parse_verdict(r#"{"aligned":false,"blame":"Somebody"}"#).is_none());
    }

    #[test]
    fn judge_reasks_once_then_defaults() {
        let b = ScriptedBackend::constant("not json");
        let v = judge(&RgbImage::new(4, 4), &task(), &b, 0.0).unwrap();
        assert_eq!((v.aligned, v.blame), (false, Blame::SketchToCode));
        assert_eq!(b.call_count(), 2);
        assert!(b.calls()[1].text().contains(prompt::JUDGE_REASK));
    }

    #[test]
    fn judge_recovers_on_reask() {
        let b = ScriptedBackend::with_rules(
            vec![ScriptRule::reply(&[prompt::JUDGE_REASK], r#"{"aligned":true,"rationale":"fine"}"#)],
            Some("garbage"),
        );
        let v = judge(&RgbImage::new(4, 4), &task(), &b, 0.0).unwrap();
        assert!(v.aligned);
    }

    #[test]
    fn backend_config_from_toml() {
        let cfg: BackendConfig = toml::from_str(
            "kind = \"scripted\"\nvision = false\ndefault_reply = \"x\"\n[[rules]]\ncontains = [\"a\"]\nreply = \"b\"\n",
        )
        .unwrap();
        let b = cfg.build();
        assert!(!b.capabilities().vision);
        let remote: BackendConfig = toml::from_str("kind = \"openai\"\nmodel = \"m\"\n").unwrap();
        assert!(matches!(remote, BackendConfig::Remote(RemoteConfig { ref model, .. }) if model == "m"));
    }
}
