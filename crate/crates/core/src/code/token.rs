//! Metric-oriented tokenizer for TikZ-flavoured LaTeX.
//!
//! Token granularity is deliberately coarse: a balanced `[...]` option list
//! and a balanced `{...}` argument are each a single token, so n-gram metrics
//! see diagram structure rather than styling minutiae. Comments (`%` to end of
//! line, unless escaped as `\%`) are dropped.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TokenKind {
    /// `\` followed by letters, or a control symbol such as `\\` or `\%`.
    Command,
    /// `\begin{name}`
    BeginEnv,
    /// `\end{name}`
    EndEnv,
    Ident,
    Number,
    Punct,
    /// Balanced `[...]`, brackets included.
    OptionBlock,
    /// Balanced `{...}`, braces included.
    TextBlock,
}

/// Half-open byte range into the source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Span {
    pub start: usize,
    pub end: usize,
}

impl Span {
    pub fn new(start: usize, end: usize) -> Self {
        Span { start, end }
    }

    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, other: &Span) -> bool {
        self.start <= other.start && other.end <= self.end
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CodeToken {
    pub kind: TokenKind,
    pub text: String,
    pub span: Span,
    /// Set on `[`/`{` blocks that ran to end of input without closing.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub unterminated: bool,
}

impl CodeToken {
    /// Name of the environment for `BeginEnv`/`EndEnv` tokens.
    pub fn env_name(&self) -> Option<&str> {
        let rest = match self.kind {
            TokenKind::BeginEnv => self.text.strip_prefix("\\begin")?,
            TokenKind::EndEnv => self.text.strip_prefix("\\end")?,
            _ => return None,
        };
        let rest = rest.trim_start();
        rest.strip_prefix('{')?.strip_suffix('}').map(str::trim)
    }

    /// Inner text of a block token with its delimiters removed.
    pub fn block_inner(&self) -> Option<&str> {
        let (open, close) = match self.kind {
            TokenKind::OptionBlock => ('[', ']'),
            TokenKind::TextBlock => ('{', '}'),
            _ => return None,
        };
        let inner = self.text.strip_prefix(open)?;
        Some(if self.unterminated {
            inner
        } else {
            inner.strip_suffix(close).unwrap_or(inner)
        })
    }
}

/// Multi-character operators, longest first.
const MULTI_PUNCT: &[&str] = &["<->", "--", "->", "<-", "|-", "-|", "++", ".."];

pub fn tokenize(source: &str) -> Vec<CodeToken> {
    Lexer::new(source).run()
}

/// Joins tokens with single spaces. The result re-tokenizes to the same
/// token kinds and texts.
pub fn join_tokens(tokens: &[CodeToken]) -> String {
    tokens
        .iter()
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    pos: usize,
    out: Vec<CodeToken>,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer {
            src,
            bytes: src.as_bytes(),
            pos: 0,
            out: Vec::new(),
        }
    }

    fn run(mut self) -> Vec<CodeToken> {
        while self.pos < self.bytes.len() {
            let b = self.bytes[self.pos];
            match b {
                b'%' => self.skip_comment(),
                b if b.is_ascii_whitespace() => self.pos += 1,
                b'\\' => self.command(),
                b'[' => self.block(TokenKind::OptionBlock, b'[', b']'),
                b'{' => self.block(TokenKind::TextBlock, b'{', b'}'),
                b'0'..=b'9' => self.number(),
                b'.' if self.peek(1).is_some_and(|c| c.is_ascii_digit()) => self.number(),
                b if b.is_ascii_alphabetic() || b == b'_' || b == b'@' => self.ident(),
                _ => self.punct(),
            }
        }
        self.out
    }

    fn peek(&self, ahead: usize) -> Option<u8> {
        self.bytes.get(self.pos + ahead).copied()
    }

    fn push(&mut self, kind: TokenKind, start: usize, end: usize, unterminated: bool) {
        self.out.push(CodeToken {
            kind,
            text: self.src[start..end].to_string(),
            span: Span::new(start, end),
            unterminated,
        });
        self.pos = end;
    }

    fn skip_comment(&mut self) {
        while self.pos < self.bytes.len() && self.bytes[self.pos] != b'\n' {
            self.pos += 1;
        }
    }

    fn command(&mut self) {
        let start = self.pos;
        let mut end = start + 1;
        while end < self.bytes.len() && self.bytes[end].is_ascii_alphabetic() {
            end += 1;
        }
        if end == start + 1 {
            // control symbol: backslash plus one character
            match self.src[end..].chars().next() {
                Some(c) => end += c.len_utf8(),
                None => {
                    self.push(TokenKind::Punct, start, end, false);
                    return;
                }
            }
            self.push(TokenKind::Command, start, end, false);
            return;
        }
        let name = &self.src[start + 1..end];
        if name == "begin" || name == "end" {
            if let Some(env_end) = self.env_argument(end) {
                let kind = if name == "begin" {
                    TokenKind::BeginEnv
                } else {
                    TokenKind::EndEnv
                };
                self.push(kind, start, env_end, false);
                return;
            }
        }
        self.push(TokenKind::Command, start, end, false);
    }

    /// Matches `{name}` right after `\begin`/`\end`, returning the end offset.
    fn env_argument(&self, from: usize) -> Option<usize> {
        if self.bytes.get(from) != Some(&b'{') {
            return None;
        }
        let mut i = from + 1;
        while i < self.bytes.len() {
            match self.bytes[i] {
                b'}' => return (i > from + 1).then_some(i + 1),
                b if b.is_ascii_alphanumeric() || b == b'*' || b == b'-' || b == b'_' => i += 1,
                _ => return None,
            }
        }
        None
    }

    fn block(&mut self, kind: TokenKind, open: u8, close: u8) {
        let start = self.pos;
        let mut depth = 0usize;
        let mut braces = 0usize;
        let mut i = start;
        while i < self.bytes.len() {
            match self.bytes[i] {
                b'\\' => {
                    i += 1;
                    if let Some(c) = self.src.get(i..).and_then(|s| s.chars().next()) {
                        i += c.len_utf8();
                    }
                    continue;
                }
                b'%' => {
                    while i < self.bytes.len() && self.bytes[i] != b'\n' {
                        i += 1;
                    }
                    continue;
                }
                // braces protect brackets inside option lists: `[label={a]b}]`
                b'{' if open == b'[' => braces += 1,
                b'}' if open == b'[' && braces > 0 => braces -= 1,
                b if b == open && braces == 0 => depth += 1,
                b if b == close && braces == 0 => {
                    depth -= 1;
                    if depth == 0 {
                        self.push(kind, start, i + 1, false);
                        return;
                    }
                }
                _ => {}
            }
            i += 1;
        }
        let end = self.bytes.len();
        self.push(kind, start, end, true);
    }

    fn number(&mut self) {
        let start = self.pos;
        let mut end = start;
        while end < self.bytes.len() && self.bytes[end].is_ascii_digit() {
            end += 1;
        }
        if self.bytes.get(end) == Some(&b'.')
            && self.bytes.get(end + 1).is_some_and(|c| c.is_ascii_digit())
        {
            end += 1;
            while end < self.bytes.len() && self.bytes[end].is_ascii_digit() {
                end += 1;
            }
        }
        self.push(TokenKind::Number, start, end, false);
    }

    fn ident(&mut self) {
        let start = self.pos;
        let mut end = start + 1;
        while end < self.bytes.len() {
            let b = self.bytes[end];
            let next_alnum = self
                .bytes
                .get(end + 1)
                .is_some_and(|c| c.is_ascii_alphanumeric());
            if b.is_ascii_alphanumeric() || b == b'_' || b == b'@' {
                end += 1;
            } else if (b == b'.' || b == b'-') && next_alnum {
                // anchors like `a.north`, ids like `n-1`
                end += 1;
            } else {
                break;
            }
        }
        self.push(TokenKind::Ident, start, end, false);
    }

    fn punct(&mut self) {
        let start = self.pos;
        let rest = &self.src[start..];
        for op in MULTI_PUNCT {
            if rest.starts_with(op) {
                self.push(TokenKind::Punct, start, start + op.len(), false);
                return;
            }
        }
        let c = rest.chars().next().expect("punct called at end of input");
        self.push(TokenKind::Punct, start, start + c.len_utf8(), false);
    }
}
