//! A total parser for the TikZ subset the benchmark cares about.
//!
//! Recognized structure:
//!
//! * `\begin{name}` ... `\end{name}` environments, nested. Inside
//!   `tikzpicture` and `scope`, statements run to a top-level `;`.
//! * Node statements: `\node`, `\coordinate`, `\matrix`, `\pic`.
//! * Path statements: `\draw`, `\path`, `\fill`, `\filldraw`, `\shade`,
//!   `\shadedraw`, `\clip`, `\useasboundingbox`. Edges inside them use `--`,
//!   `->`, `to`, `edge`, `|-` and `-|`.
//!
//! Everything else becomes a `Raw` statement. The parser never fails outright:
//! [`parse_lenient`] always yields a tree and a list of diagnostics, and
//! [`parse`] turns a non-empty diagnostic list into an error.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::token::{CodeToken, Span, TokenKind};
use super::DiagramCode;

const NODE_COMMANDS: &[&str] = &["node", "coordinate", "matrix", "pic"];
const PATH_COMMANDS: &[&str] = &[
    "draw",
    "path",
    "fill",
    "filldraw",
    "shade",
    "shadedraw",
    "clip",
    "useasboundingbox",
];
const DIAGRAM_ENVS: &[&str] = &["tikzpicture", "scope"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum NodeKind {
    Document,
    Env,
    NodeDecl,
    EdgeDecl,
    Raw,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TreeNode {
    pub kind: NodeKind,
    pub span: Span,
    /// Environment name for `Env`, command name (without `\`) for statements
    /// that start with a command.
    pub name: Option<String>,
    /// Indices into [`ParseTree::tokens`] covered by this node, children included.
    pub tokens: Range<usize>,
    pub children: Vec<TreeNode>,
}

impl TreeNode {
    /// Pre-order traversal.
    pub fn walk(&self) -> Vec<&TreeNode> {
        let mut out = vec![self];
        for c in &self.children {
            out.extend(c.walk());
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseTree {
    pub source: String,
    pub tokens: Vec<CodeToken>,
    pub root: TreeNode,
}

impl ParseTree {
    /// Statement nodes in document order, descending into environments.
    pub fn statements(&self) -> Vec<&TreeNode> {
        self.root
            .walk()
            .into_iter()
            .filter(|n| matches!(n.kind, NodeKind::NodeDecl | NodeKind::EdgeDecl | NodeKind::Raw))
            .collect()
    }

    pub fn node_tokens(&self, node: &TreeNode) -> &[CodeToken] {
        &self.tokens[node.tokens.clone()]
    }

    /// Rebuilds the source text from the tree's spans.
    pub fn unparse(&self) -> String {
        let mut out = String::with_capacity(self.source.len());
        self.emit(&self.root, &mut out);
        out
    }

    fn emit(&self, node: &TreeNode, out: &mut String) {
        let mut cursor = node.span.start;
        for child in &node.children {
            out.push_str(&self.source[cursor..child.span.start]);
            self.emit(child, out);
            cursor = child.span.end;
        }
        out.push_str(&self.source[cursor..node.span.end]);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiagnosticKind {
    BraceMismatch,
    EnvMismatch,
    UnterminatedStatement,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    /// Byte offset into the source.
    pub offset: usize,
    pub message: String,
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} at byte {}: {}", self.kind, self.offset, self.message)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostics(pub Vec<Diagnostic>);

impl Diagnostics {
    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Diagnostic> {
        self.0.iter()
    }

    pub fn has(&self, kind: DiagnosticKind) -> bool {
        self.0.iter().any(|d| d.kind == kind)
    }
}

impl fmt::Display for Diagnostics {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, d) in self.0.iter().enumerate() {
            if i > 0 {
                writeln!(f)?;
            }
            write!(f, "{d}")?;
        }
        Ok(())
    }
}

impl std::error::Error for Diagnostics {}

pub fn parse(code: &DiagramCode) -> Result<ParseTree, Diagnostics> {
    let (tree, diags) = parse_lenient(code);
    if diags.is_empty() {
        Ok(tree)
    } else {
        Err(diags)
    }
}

/// Parses without giving up: the tree is always complete and any problems
/// are reported alongside it, sorted by offset.
pub fn parse_lenient(code: &DiagramCode) -> (ParseTree, Diagnostics) {
    let tokens = code.tokens().to_vec();
    let mut diags = Vec::new();
    for t in &tokens {
        if t.unterminated {
            diags.push(Diagnostic {
                kind: DiagnosticKind::BraceMismatch,
                offset: t.span.start,
                message: format!("unclosed `{}`", &t.text[..1]),
            });
        } else if t.kind == TokenKind::Punct && (t.text == "}" || t.text == "]") {
            diags.push(Diagnostic {
                kind: DiagnosticKind::BraceMismatch,
                offset: t.span.start,
                message: format!("unmatched `{}`", t.text),
            });
        }
    }

    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        diags: &mut diags,
        env_stack: Vec::new(),
    };
    let children = parser.block(false);
    debug_assert_eq!(parser.pos, tokens.len());

    let root = TreeNode {
        kind: NodeKind::Document,
        span: Span::new(0, code.source().len()),
        name: None,
        tokens: 0..tokens.len(),
        children,
    };
    diags.sort_by_key(|d| (d.offset, d.kind as u8));
    let tree = ParseTree {
        source: code.source().to_string(),
        tokens,
        root,
    };
    (tree, Diagnostics(diags))
}

fn command_name(tok: &CodeToken) -> Option<&str> {
    (tok.kind == TokenKind::Command).then(|| tok.text.trim_start_matches('\\'))
}

fn is_statement_command(tok: &CodeToken) -> bool {
    command_name(tok).is_some_and(|n| NODE_COMMANDS.contains(&n) || PATH_COMMANDS.contains(&n))
}

fn is_semicolon(tok: &CodeToken) -> bool {
    tok.kind == TokenKind::Punct && tok.text == ";"
}

struct Parser<'t, 'd> {
    tokens: &'t [CodeToken],
    pos: usize,
    diags: &'d mut Vec<Diagnostic>,
    env_stack: Vec<String>,
}

impl<'t> Parser<'t, '_> {
    fn peek(&self) -> Option<&'t CodeToken> {
        self.tokens.get(self.pos)
    }

    fn node(&self, kind: NodeKind, name: Option<String>, range: Range<usize>, children: Vec<TreeNode>) -> TreeNode {
        let span = Span::new(
            self.tokens[range.start].span.start,
            self.tokens[range.end - 1].span.end,
        );
        TreeNode {
            kind,
            span,
            name,
            tokens: range,
            children,
        }
    }

    /// Parses statements until end of input or an `\end` this block does not own.
    fn block(&mut self, diagram: bool) -> Vec<TreeNode> {
        let mut out = Vec::new();
        while let Some(tok) = self.peek() {
            match tok.kind {
                TokenKind::BeginEnv => out.push(self.env(diagram)),
                TokenKind::EndEnv => {
                    let name = tok.env_name().unwrap_or_default().to_string();
                    if self.env_stack.iter().any(|e| *e == name) {
                        return out;
                    }
                    self.diags.push(Diagnostic {
                        kind: DiagnosticKind::EnvMismatch,
                        offset: tok.span.start,
                        message: format!("`\\end{{{name}}}` without matching `\\begin`"),
                    });
                    let start = self.pos;
                    self.pos += 1;
                    out.push(self.node(NodeKind::Raw, None, start..self.pos, Vec::new()));
                }
                _ if is_statement_command(tok) => out.push(self.statement()),
                _ => out.push(self.raw(diagram)),
            }
        }
        out
    }

    fn env(&mut self, diagram: bool) -> TreeNode {
        let start = self.pos;
        let begin = &self.tokens[start];
        let name = begin.env_name().unwrap_or_default().to_string();
        self.pos += 1;
        if self.peek().is_some_and(|t| t.kind == TokenKind::OptionBlock) {
            self.pos += 1;
        }
        let inner_diagram = diagram || DIAGRAM_ENVS.contains(&name.as_str());
        self.env_stack.push(name.clone());
        let children = self.block(inner_diagram);
        self.env_stack.pop();

        match self.peek() {
            Some(end) if end.env_name() == Some(name.as_str()) => self.pos += 1,
            Some(end) => {
                // closes an outer environment; leave it for the owner
                let found = end.env_name().unwrap_or_default().to_string();
                self.diags.push(Diagnostic {
                    kind: DiagnosticKind::EnvMismatch,
                    offset: begin.span.start,
                    message: format!("`\\begin{{{name}}}` closed by `\\end{{{found}}}`"),
                });
            }
            None => self.diags.push(Diagnostic {
                kind: DiagnosticKind::EnvMismatch,
                offset: begin.span.start,
                message: format!("`\\begin{{{name}}}` is never closed"),
            }),
        }
        self.node(NodeKind::Env, Some(name), start..self.pos, children)
    }

    fn statement(&mut self) -> TreeNode {
        let start = self.pos;
        let cmd = command_name(&self.tokens[start]).unwrap_or_default().to_string();
        let kind = if NODE_COMMANDS.contains(&cmd.as_str()) {
            NodeKind::NodeDecl
        } else {
            NodeKind::EdgeDecl
        };
        self.pos += 1;
        let mut terminated = false;
        while let Some(tok) = self.peek() {
            if is_semicolon(tok) {
                self.pos += 1;
                terminated = true;
                break;
            }
            if matches!(tok.kind, TokenKind::BeginEnv | TokenKind::EndEnv) || is_statement_command(tok) {
                break;
            }
            self.pos += 1;
        }
        if !terminated {
            self.diags.push(Diagnostic {
                kind: DiagnosticKind::UnterminatedStatement,
                offset: self.tokens[start].span.start,
                message: format!("`\\{cmd}` statement is missing its `;`"),
            });
        }
        self.node(kind, Some(cmd), start..self.pos, Vec::new())
    }

    fn raw(&mut self, diagram: bool) -> TreeNode {
        let start = self.pos;
        let name = command_name(&self.tokens[start]).map(str::to_string);
        self.pos += 1;
        if diagram && is_semicolon(&self.tokens[start]) {
            return self.node(NodeKind::Raw, name, start..self.pos, Vec::new());
        }
        while let Some(tok) = self.peek() {
            if matches!(tok.kind, TokenKind::BeginEnv | TokenKind::EndEnv) || is_statement_command(tok) {
                break;
            }
            if diagram {
                self.pos += 1;
                if is_semicolon(tok) {
                    break;
                }
            } else {
                // outside pictures a raw statement is one command plus its arguments
                if tok.kind == TokenKind::Command {
                    break;
                }
                self.pos += 1;
            }
        }
        self.node(NodeKind::Raw, name, start..self.pos, Vec::new())
    }
}
