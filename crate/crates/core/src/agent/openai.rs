use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::backend::{BackendError, BackendErrorKind, Capabilities, ChatBackend, ChatRequest};
use crate::gate::Gate;

/// Settings for an OpenAI-compatible `/chat/completions` endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RemoteConfig {
    pub name: String,
    pub base_url: String,
    pub model: String,
    /// Environment variable holding the bearer token. Unset or empty sends no
    /// `Authorization` header.
    pub api_key_env: Option<String>,
    pub vision: bool,
    pub timeout_secs: f64,
    pub max_in_flight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        RemoteConfig {
            name: "remote".into(),
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key_env: Some("OPENAI_API_KEY".into()),
            vision: true,
            timeout_secs: 120.0,
            max_in_flight: 4,
        }
    }
}

#[derive(Debug)]
pub struct RemoteBackend {
    cfg: RemoteConfig,
    agent: ureq::Agent,
    gate: Gate,
}

impl RemoteBackend {
    pub fn new(cfg: RemoteConfig) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs.max(0.001))))
            .http_status_as_error(false)
            .build()
            .into();
        RemoteBackend {
            gate: Gate::new(cfg.max_in_flight),
            cfg,
            agent,
        }
    }

    /// Request body in the chat-completions wire shape.
    pub fn wire_body(&self, request: &ChatRequest) -> Value {
        let messages: Vec<Value> = request
            .messages
            .iter()
            .map(|m| {
                if m.images.is_empty() {
                    json!({ "role": m.role, "content": m.content })
                } else {
                    let mut parts = vec![json!({ "type": "text", "text": m.content })];
                    parts.extend(m.images.iter().map(|img| {
                        json!({ "type": "image_url", "image_url": { "url": format!("data:image/png;base64,{img}") } })
                    }));
                    json!({ "role": m.role, "content": parts })
                }
            })
            .collect();
        json!({
            "model": self.cfg.model,
            "temperature": request.temperature,
            "messages": messages,
        })
    }

    fn err(&self, kind: BackendErrorKind, msg: impl Into<String>) -> BackendError {
        BackendError::new(kind, &self.cfg.name, msg)
    }
}

#[derive(Deserialize)]
struct Completion {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: ReplyMessage,
}

#[derive(Deserialize)]
struct ReplyMessage {
    #[serde(default)]
    content: Option<String>,
}

impl ChatBackend for RemoteBackend {
    fn name(&self) -> &str {
        &self.cfg.name
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities { vision: self.cfg.vision }
    }

    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError> {
        let _slot = self.gate.enter();
        let url = format!("{}/chat/completions", self.cfg.base_url.trim_end_matches('/'));
        let mut call = self.agent.post(&url);
        if let Some(key) = self
            .cfg
            .api_key_env
            .as_deref()
            .and_then(|v| std::env::var(v).ok())
            .filter(|k| !k.is_empty())
        {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = call.send_json(self.wire_body(request)).map_err(|e| match e {
            ureq::Error::Timeout(_) => self.err(BackendErrorKind::Timeout, e.to_string()),
            _ => self.err(BackendErrorKind::Transport, e.to_string()),
        })?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| self.err(BackendErrorKind::Transport, e.to_string()))?;
        if !(200..300).contains(&status) {
            return Err(self.err(BackendErrorKind::Http, format!("HTTP {status}: {}", text.trim())));
        }
        let parsed: Completion =
            serde_json::from_str(&text).map_err(|e| self.err(BackendErrorKind::BadResponse, e.to_string()))?;
        parsed
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| self.err(BackendErrorKind::BadResponse, "reply has no message content"))
    }
}
