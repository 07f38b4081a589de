use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// One chat turn. Images are base64 PNG strings attached to the turn.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub images: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

impl ChatMessage {
    pub fn system(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: text.into(),
            images: Vec::new(),
        }
    }

    pub fn user(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: text.into(),
            images: Vec::new(),
        }
    }

    pub fn assistant(text: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: text.into(),
            images: Vec::new(),
        }
    }

    pub fn with_image(mut self, png_base64: String) -> Self {
        self.images.push(png_base64);
        self
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub messages: Vec<ChatMessage>,
    pub temperature: f64,
}

impl ChatRequest {
    /// Canonical bytes of the request; equal requests give equal bytes.
    pub fn payload(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("chat requests always serialize")
    }

    /// All message texts joined, used by scripted rules for matching.
    pub fn text(&self) -> String {
        self.messages
            .iter()
            .map(|m| m.content.as_str())
            .collect::<Vec<_>>()
            .join("\n")
    }

    pub fn has_images(&self) -> bool {
        self.messages.iter().any(|m| !m.images.is_empty())
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Capabilities {
    pub vision: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendErrorKind {
    Transport,
    Timeout,
    Http,
    BadResponse,
}

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub struct BackendError {
    pub kind: BackendErrorKind,
    pub message: String,
    pub backend: String,
    /// Pipeline attempt during which the call failed, filled in by the caller.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub attempt: Option<u32>,
}

impl BackendError {
    pub fn new(kind: BackendErrorKind, backend: &str, message: impl Into<String>) -> Self {
        BackendError {
            kind,
            message: message.into(),
            backend: backend.to_string(),
            attempt: None,
        }
    }

    pub fn at_attempt(mut self, attempt: u32) -> Self {
        self.attempt = Some(attempt);
        self
    }
}

impl fmt::Display for BackendError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} backend error ({:?}): {}", self.backend, self.kind, self.message)?;
        if let Some(a) = self.attempt {
            write!(f, " [attempt {a}]")?;
        }
        Ok(())
    }
}

/// A chat-completion endpoint. Calls carry no session state, so a backend can
/// be shared by concurrent workers.
pub trait ChatBackend: Send + Sync {
    fn name(&self) -> &str;
    fn capabilities(&self) -> Capabilities;
    fn complete(&self, request: &ChatRequest) -> Result<String, BackendError>;
}
