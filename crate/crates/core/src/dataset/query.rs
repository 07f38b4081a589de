//! Query synthesis: S2C prompts from the reference code, C2C prompts from a
//! line diff between sketch code and reference code.

use serde::{Deserialize, Serialize};
use similar::{ChangeTag, DiffOp, TextDiff};

use super::{DatasetError, DiagramCategory};
use crate::code::{node_declaration, tokenize, DiagramCode, TokenKind, Vertex};

pub const SKETCH_BEGIN: &str = "--- BEGIN SKETCH CODE ---";
pub const SKETCH_END: &str = "--- END SKETCH CODE ---";
pub const NO_CHANGES: &str = "No changes required.";

pub const S2C_TEMPLATE: &str =
    "Generate TikZ code that reproduces the attached hand-drawn sketch. Reply with a complete tikzpicture environment.";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum QueryKind {
    S2C,
    C2C,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", content = "reason")]
pub enum Inspection {
    Unreviewed,
    Passed,
    Rejected(String),
}

impl Inspection {
    pub fn is_rejected(&self) -> bool {
        matches!(self, Inspection::Rejected(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryRecord {
    pub id: String,
    pub kind: QueryKind,
    pub query: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub image_path: Option<String>,
    pub answer: String,
    pub category: DiagramCategory,
    pub provenance: String,
    pub inspection: Inspection,
}

/// Style keys that carry color or decoration rather than layout.
const COSMETIC_KEYS: &[&str] = &[
    "color", "fill", "draw", "text", "top color", "bottom color", "left color", "right color", "ball color",
    "shade", "shading", "opacity", "fill opacity", "draw opacity", "text opacity", "line width", "font",
    "rounded corners", "dash pattern", "pattern", "pattern color", "double", "drop shadow",
];

const COSMETIC_FLAGS: &[&str] = &[
    "thin", "very thin", "ultra thin", "thick", "very thick", "ultra thick", "semithick", "dashed",
    "densely dashed", "loosely dashed", "dotted", "densely dotted", "loosely dotted", "rounded corners",
    "sharp corners", "shade", "double", "drop shadow",
];

const COLORS: &[&str] = &[
    "red", "green", "blue", "cyan", "magenta", "yellow", "black", "gray", "grey", "white", "darkgray",
    "lightgray", "brown", "lime", "olive", "orange", "pink", "purple", "teal", "violet",
];

fn is_cosmetic(entry: &str) -> bool {
    let e = entry.trim();
    if e.is_empty() {
        return true;
    }
    let (key, _) = e.split_once('=').unwrap_or((e, ""));
    let key = key.trim();
    if e.contains('=') {
        return COSMETIC_KEYS.contains(&key);
    }
    let base = key.split('!').next().unwrap_or(key).trim();
    COSMETIC_FLAGS.contains(&key) || COLORS.contains(&base)
}

/// Splits an option list on commas outside braces.
pub fn split_options(inner: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut depth = 0i32;
    let mut start = 0;
    for (i, c) in inner.char_indices() {
        match c {
            '{' => depth += 1,
            '}' => depth -= 1,
            ',' if depth <= 0 => {
                out.push(&inner[start..i]);
                start = i + 1;
            }
            _ => {}
        }
    }
    out.push(&inner[start..]);
    out
}

/// Offline sketch code: the reference with color and decoration options
/// removed. Layout options survive; an option list left empty is dropped.
pub fn fallback_sketch_code(original: &str) -> String {
    let mut out = String::with_capacity(original.len());
    let mut last = 0;
    for t in tokenize(original) {
        if t.kind != TokenKind::OptionBlock || t.unterminated {
            continue;
        }
        let inner = t.block_inner().unwrap_or_default();
        let kept: Vec<&str> = split_options(inner)
            .into_iter()
            .filter(|e| !is_cosmetic(e))
            .map(str::trim)
            .collect();
        out.push_str(&original[last..t.span.start]);
        if !kept.is_empty() {
            out.push('[');
            out.push_str(&kept.join(", "));
            out.push(']');
        }
        last = t.span.end;
    }
    out.push_str(&original[last..]);
    out
}

/// Supplementary details for the S2C prompt, read off the node graph.
pub fn supplementary_details(code: &DiagramCode) -> Vec<String> {
    let Some(g) = code.node_graph() else {
        return Vec::new();
    };
    let labels: Vec<String> = g
        .vertices
        .iter()
        .filter(|v| !v.label.is_empty())
        .map(|v| format!("\"{}\"", v.label))
        .collect();
    let mut out = Vec::new();
    if !g.vertices.is_empty() {
        out.push(format!("The diagram has {} nodes and {} connections.", g.vertices.len(), g.edges.len()));
    }
    if !labels.is_empty() {
        out.push(format!("Node labels: {}.", labels.join(", ")));
    }
    out
}

pub fn s2c_query(original: &DiagramCode) -> String {
    let mut q = String::from(S2C_TEMPLATE);
    let details = supplementary_details(original);
    if !details.is_empty() {
        q.push_str("\nDetails:\n");
        for d in details {
            q.push_str("- ");
            q.push_str(&d);
            q.push('\n');
        }
    }
    q
}

fn declared(line: &str) -> Option<Vertex> {
    let toks = tokenize(line);
    let first = toks.first()?;
    if first.kind != TokenKind::Command || !matches!(first.text.as_str(), "\\node" | "\\coordinate") {
        return None;
    }
    node_declaration(&toks)
}

fn pair_instructions(old: &str, new: &str, out: &mut Vec<String>) {
    if old == new {
        // only the line ending differed
        return;
    }
    if let (Some(a), Some(b)) = (declared(old), declared(new)) {
        if a.id == b.id && a.position == b.position {
            if a.label != b.label {
                out.push(format!("Label node ({}) as {}", b.id, b.label));
            }
            if a.style != b.style {
                if b.style.is_empty() {
                    out.push(format!("Remove the style of node ({})", b.id));
                } else {
                    out.push(format!("Style node ({}) with [{}]", b.id, b.style));
                }
            }
            if a.label != b.label || a.style != b.style {
                return;
            }
        }
    }
    out.push(format!("Replace `{old}` with `{new}`"));
}

/// Instruction bullets turning `sketch` into `original`. Whitespace-only
/// lines are ignored. Empty when the codes agree line for line.
pub fn edit_instructions(sketch: &str, original: &str) -> Vec<String> {
    let diff = TextDiff::from_lines(sketch, original);
    let mut out = Vec::new();
    for op in diff.ops() {
        let mut removed = Vec::new();
        let mut added = Vec::new();
        for change in diff.iter_changes(op) {
            let line = change.value().trim();
            if line.is_empty() {
                continue;
            }
            match change.tag() {
                ChangeTag::Delete => removed.push(line.to_string()),
                ChangeTag::Insert => added.push(line.to_string()),
                ChangeTag::Equal => {}
            }
        }
        let paired = if matches!(op, DiffOp::Replace { .. }) { removed.len().min(added.len()) } else { 0 };
        for (old, new) in removed.iter().zip(&added).take(paired) {
            pair_instructions(old, new, &mut out);
        }
        for line in &removed[paired..] {
            out.push(format!("Remove `{line}`"));
        }
        for line in &added[paired..] {
            out.push(format!("Add `{line}`"));
        }
    }
    out
}

pub fn c2c_query(sketch: &str, original: &str) -> String {
    let mut q = format!("{SKETCH_BEGIN}\n{}\n{SKETCH_END}\nRequested changes:\n", sketch.trim_end());
    let bullets = edit_instructions(sketch, original);
    if bullets.is_empty() {
        q.push_str("- ");
        q.push_str(NO_CHANGES);
        q.push('\n');
    }
    for b in bullets {
        q.push_str("- ");
        q.push_str(&b);
        q.push('\n');
    }
    q
}

/// Splits a C2C query back into sketch code and edit bullets. The
/// no-change bullet yields an empty edit list.
pub fn parse_c2c_query(query: &str) -> Option<(String, Vec<String>)> {
    let start = query.find(SKETCH_BEGIN)? + SKETCH_BEGIN.len();
    let end = query[start..].find(SKETCH_END)? + start;
    let code = query[start..end].trim_matches('\n').to_string();
    let edits = query[end + SKETCH_END.len()..]
        .lines()
        .filter_map(|l| l.strip_prefix("- "))
        .filter(|l| *l != NO_CHANGES)
        .map(str::to_string)
        .collect();
    Some((code, edits))
}

/// Builds the S2C and C2C records for one source diagram.
pub fn build_queries(
    id: &str,
    sketch_code: &str,
    original: &str,
    image_path: &str,
    category: DiagramCategory,
    provenance: &str,
) -> Result<(QueryRecord, QueryRecord), DatasetError> {
    let code = DiagramCode::new(original.trim());
    if code.is_blank() {
        return Err(DatasetError::EmptyCode(provenance.to_string()));
    }
    let answer = code.source().to_string();
    let s2c = QueryRecord {
        id: format!("{id}-s2c"),
        kind: QueryKind::S2C,
        query: s2c_query(&code),
        image_path: Some(image_path.to_string()),
        answer: answer.clone(),
        category,
        provenance: provenance.to_string(),
        inspection: Inspection::Unreviewed,
    };
    let c2c = QueryRecord {
        id: format!("{id}-c2c"),
        kind: QueryKind::C2C,
        query: c2c_query(sketch_code, &answer),
        image_path: None,
        answer,
        category,
        provenance: provenance.to_string(),
        inspection: Inspection::Unreviewed,
    };
    Ok((s2c, c2c))
}
