//! Diagram source code and its token, tree and node-graph views.

mod graph;
mod parse;
mod token;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

pub use graph::{extract_node_graph, node_declaration, walk_path, Edge, Endpoint, NodeGraph, PathEvent, Vertex};
pub use parse::{parse, parse_lenient, Diagnostic, DiagnosticKind, Diagnostics, NodeKind, ParseTree, TreeNode};
pub use token::{join_tokens, tokenize, CodeToken, Span, TokenKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Language {
    #[default]
    TikZ,
}

/// Diagram source text. Tokens are computed lazily and cached.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct DiagramCode {
    source: String,
    #[serde(default)]
    language: Language,
    #[serde(skip)]
    token_cache: OnceLock<Vec<CodeToken>>,
}

impl DiagramCode {
    pub fn new(source: impl Into<String>) -> Self {
        DiagramCode {
            source: source.into(),
            language: Language::TikZ,
            token_cache: OnceLock::new(),
        }
    }

    pub fn source(&self) -> &str {
        &self.source
    }

    pub fn language(&self) -> Language {
        self.language
    }

    pub fn tokens(&self) -> &[CodeToken] {
        self.token_cache.get_or_init(|| tokenize(&self.source))
    }

    pub fn is_blank(&self) -> bool {
        self.source.trim().is_empty()
    }

    pub fn parse(&self) -> Result<ParseTree, Diagnostics> {
        parse(self)
    }

    /// The node graph, or `None` when the code does not parse cleanly.
    pub fn node_graph(&self) -> Option<NodeGraph> {
        self.parse().ok().map(|t| extract_node_graph(&t))
    }
}

impl PartialEq for DiagramCode {
    fn eq(&self, other: &Self) -> bool {
        self.language == other.language && self.source == other.source
    }
}

impl Eq for DiagramCode {}

impl From<&str> for DiagramCode {
    fn from(s: &str) -> Self {
        DiagramCode::new(s)
    }
}

impl From<String> for DiagramCode {
    fn from(s: String) -> Self {
        DiagramCode::new(s)
    }
}
