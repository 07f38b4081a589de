use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::backend::{BackendError, BackendErrorKind, Capabilities, ChatBackend, ChatRequest};

/// Replies chosen by substring rules over the request text.
///
/// The first rule whose every `contains` pattern occurs in the request (and no
/// `excludes` pattern does) answers. The reply depends only on the request, so
/// identical requests always get identical replies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScriptedConfig {
    pub name: String,
    pub vision: bool,
    pub rules: Vec<ScriptRule>,
    /// Reply when no rule matches. Unset means the call fails.
    pub default_reply: Option<String>,
}

impl Default for ScriptedConfig {
    fn default() -> Self {
        ScriptedConfig {
            name: "scripted".into(),
            vision: true,
            rules: Vec::new(),
            default_reply: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScriptRule {
    #[serde(default)]
    pub contains: Vec<String>,
    #[serde(default)]
    pub excludes: Vec<String>,
    #[serde(default)]
    pub reply: Option<String>,
    /// Simulated failure instead of a reply: `timeout`, `transport`, `http`.
    #[serde(default)]
    pub error: Option<String>,
}

impl ScriptRule {
    pub fn reply(contains: &[&str], reply: &str) -> Self {
        ScriptRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            excludes: Vec::new(),
            reply: Some(reply.to_string()),
            error: None,
        }
    }

    pub fn fail(contains: &[&str], error: &str) -> Self {
        ScriptRule {
            contains: contains.iter().map(|s| s.to_string()).collect(),
            excludes: Vec::new(),
            reply: None,
            error: Some(error.to_string()),
        }
    }

    fn matches(&self, text: &str) -> bool {
        self.contains.iter().all(|p| text.contains(p.as_str())) && !self.excludes.iter().any(|p| text.contains(p.as_str()))
    }
}

#[derive(Debug)]
pub struct ScriptedBackend {
    cfg: ScriptedConfig,
    calls: Mutex<Vec<ChatRequest>>,
}

impl ScriptedBackend {
    pub fn new(cfg: ScriptedConfig) -> Self {
        ScriptedBackend {
            cfg,
            calls: Mutex::new(Vec::new()),
        }
    }

    /// Backend that answers everything with `reply`.
    pub fn constant(reply: &str) -> Self {
        Self::new(ScriptedConfig {
            default_reply: Some(reply.to_string()),
            ..Default::default()
        })
    }

    pub fn with_rules(rules: Vec<ScriptRule>, default_reply: Option<&str>) -> Self {
        Self::new(ScriptedConfig {
            rules,
            default_reply: default_reply.map(String::from),
            ..Default::default()
        })
    }

    pub fn without_vision(mut self) -> Self {
        self.cfg.vision = false;
        self
    }

    /// Requests received so far, in call order.
    pub fn calls(&self) -> Vec<ChatRequest> {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    pub fn call_count(&self) -> usize {
        self.calls.lock().unwrap_or_else(|e| e.into_inner()).len()
    }
}

impl ChatBackend for ScriptedBackend {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { vision: self.cfg.vision }
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        self.calls
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .push(request.clone());
        let text = request.text();
        let rule = self.cfg.rules.iter().find(|r| r.matches(&text));
        match rule {
            Some(ScriptRule { error: Some(e), .. }) => {
                let kind = match e.as_str() {
                    "timeout" => BackendErrorKind::Timeout,
                    "http" => BackendErrorKind::Http,
                    "bad_response" => BackendErrorKind::BadResponse,
                    _ => BackendErrorKind::Transport,
                };
                Err(BackendError::new(kind, &self.cfg.name, format!("scripted {e}")))
            }
            Some(ScriptRule { reply: Some(r), .. }) => Ok(r.clone()),
            _ => self
                .cfg
                .default_reply
                .clone()
                .ok_or_else(|| BackendError::new(BackendErrorKind::BadResponse, &self.cfg.name, "no scripted reply matches")),
        }
    }
}
