//! Def-use view of a diagram: declared nodes and the edges that reference them.

use std::collections::{HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::parse::{NodeKind, ParseTree};
use super::token::{CodeToken, TokenKind};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vertex {
    pub id: String,
    pub label: String,
    /// Inner text of the node's option list.
    #[serde(default, skip_serializing_if = "String::is_empty")]
    pub style: String,
    /// Explicit `at (x,y)` placement, in TikZ units.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub src: String,
    pub dst: String,
    pub style: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NodeGraph {
    pub vertices: Vec<Vertex>,
    pub edges: Vec<Edge>,
    pub dangling_refs: Vec<String>,
}

impl NodeGraph {
    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty() && self.edges.is_empty()
    }

    pub fn vertex(&self, id: &str) -> Option<&Vertex> {
        self.vertices.iter().find(|v| v.id == id)
    }

    pub fn edge_pairs(&self) -> HashSet<(&str, &str)> {
        self.edges
            .iter()
            .map(|e| (e.src.as_str(), e.dst.as_str()))
            .collect()
    }
}

/// A point on a path: either a reference to a named node or a literal coordinate.
#[derive(Debug, Clone, PartialEq)]
pub enum Endpoint {
    Node(String),
    /// Parsed `(x,y)` when the literal is plain cartesian.
    Point(Option<(f64, f64)>),
}

#[derive(Debug, Clone, PartialEq)]
pub enum PathEvent {
    MoveTo(Endpoint),
    Segment {
        op: String,
        from: Endpoint,
        to: Endpoint,
        style: String,
    },
    /// `node (id) {label}` written inline on a path.
    InlineNode {
        id: Option<String>,
        label: String,
        style: String,
    },
}

pub fn extract_node_graph(tree: &ParseTree) -> NodeGraph {
    let mut graph = NodeGraph::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut refs: Vec<String> = Vec::new();

    let mut declare = |graph: &mut NodeGraph, v: Vertex| {
        if !seen.contains_key(&v.id) {
            seen.insert(v.id.clone(), graph.vertices.len());
            graph.vertices.push(v);
        }
    };

    for stmt in tree.statements() {
        let toks = tree.node_tokens(stmt);
        match stmt.kind {
            NodeKind::NodeDecl => {
                if let Some(v) = node_declaration(toks) {
                    declare(&mut graph, v);
                }
            }
            NodeKind::EdgeDecl => {
                for ev in walk_path(&toks[1..]) {
                    match ev {
                        PathEvent::Segment { from, to, style, .. } => match (from, to) {
                            (Endpoint::Node(src), Endpoint::Node(dst)) => {
                                refs.push(src.clone());
                                refs.push(dst.clone());
                                graph.edges.push(Edge { src, dst, style });
                            }
                            (Endpoint::Node(id), _) | (_, Endpoint::Node(id)) => refs.push(id),
                            _ => {}
                        },
                        PathEvent::InlineNode {
                            id: Some(id),
                            label,
                            style,
                        } => declare(
                            &mut graph,
                            Vertex {
                                id,
                                label,
                                style,
                                position: None,
                            },
                        ),
                        PathEvent::MoveTo(Endpoint::Node(id)) => refs.push(id),
                        _ => {}
                    }
                }
            }
            _ => {}
        }
    }

    let mut dangling_seen = HashSet::new();
    for r in refs {
        if !seen.contains_key(&r) && dangling_seen.insert(r.clone()) {
            graph.dangling_refs.push(r);
        }
    }
    graph
}

/// Reads `\node[opts] (id) at (x,y) {label};` and its `\coordinate` cousins.
pub fn node_declaration(toks: &[CodeToken]) -> Option<Vertex> {
    let mut i = 1;
    let mut id = None;
    let mut label = String::new();
    let mut style = Vec::new();
    let mut position = None;
    while i < toks.len() {
        let t = &toks[i];
        match t.kind {
            TokenKind::OptionBlock => style.push(t.block_inner().unwrap_or_default().trim().to_string()),
            TokenKind::Punct if t.text == "(" => {
                let (inner, next) = paren_group(toks, i);
                if id.is_none() {
                    id = name_of(inner);
                }
                i = next;
                continue;
            }
            TokenKind::Ident if t.text == "at" => {
                if toks.get(i + 1).is_some_and(|t| t.text == "(") {
                    let (inner, next) = paren_group(toks, i + 1);
                    position = cartesian(inner);
                    i = next;
                    continue;
                }
            }
            TokenKind::TextBlock => {
                label = t.block_inner().unwrap_or_default().trim().to_string();
                break;
            }
            TokenKind::Punct if t.text == ";" => break,
            _ => {}
        }
        i += 1;
    }
    Some(Vertex {
        id: id?,
        label,
        style: style.into_iter().filter(|s| !s.is_empty()).collect::<Vec<_>>().join(","),
        position,
    })
}

/// Interprets the tokens of a path statement (after the command) as a
/// sequence of moves, segments and inline nodes.
pub fn walk_path(toks: &[CodeToken]) -> Vec<PathEvent> {
    let mut events = Vec::new();
    let mut i = 0;
    let mut base_style = Vec::new();
    while i < toks.len() && toks[i].kind == TokenKind::OptionBlock {
        base_style.push(toks[i].block_inner().unwrap_or_default().trim().to_string());
        i += 1;
    }

    let mut current: Option<Endpoint> = None;
    // `edge` starts from the last point reached by a non-edge operation
    let mut pending: Option<(String, Vec<String>)> = None;

    while i < toks.len() {
        let t = &toks[i];
        match t.kind {
            TokenKind::Punct if t.text == "(" => {
                let relative = i > 0 && matches!(toks[i - 1].text.as_str(), "++" | "+");
                let (inner, next) = paren_group(toks, i);
                i = next;
                let ep = match name_of(inner) {
                    Some(id) if !relative => Endpoint::Node(id),
                    _ => Endpoint::Point(if relative { None } else { cartesian(inner) }),
                };
                match (pending.take(), current.clone()) {
                    (Some((op, extra)), Some(from)) => {
                        let mut style = base_style.clone();
                        style.extend(extra);
                        let style = style.into_iter().filter(|s| !s.is_empty()).collect::<Vec<_>>().join(",");
                        events.push(PathEvent::Segment {
                            op: op.clone(),
                            from,
                            to: ep.clone(),
                            style,
                        });
                        if op != "edge" {
                            current = Some(ep);
                        }
                    }
                    _ => {
                        events.push(PathEvent::MoveTo(ep.clone()));
                        current = Some(ep);
                    }
                }
                continue;
            }
            TokenKind::Punct if matches!(t.text.as_str(), "--" | "->" | "|-" | "-|") => {
                pending = Some((t.text.clone(), Vec::new()));
            }
            TokenKind::Ident if t.text == "to" || t.text == "edge" => {
                pending = Some((t.text.clone(), Vec::new()));
            }
            TokenKind::OptionBlock => {
                if let Some((_, extra)) = pending.as_mut() {
                    extra.push(t.block_inner().unwrap_or_default().trim().to_string());
                }
            }
            TokenKind::Ident if t.text == "node" || t.text == "coordinate" => {
                let (ev, next) = inline_node(toks, i);
                events.push(ev);
                i = next;
                continue;
            }
            _ => {}
        }
        i += 1;
    }
    events
}

fn inline_node(toks: &[CodeToken], start: usize) -> (PathEvent, usize) {
    let mut i = start + 1;
    let mut id = None;
    let mut style = Vec::new();
    let mut label = String::new();
    while i < toks.len() {
        let t = &toks[i];
        match t.kind {
            TokenKind::OptionBlock => style.push(t.block_inner().unwrap_or_default().trim().to_string()),
            TokenKind::Punct if t.text == "(" && id.is_none() => {
                let (inner, next) = paren_group(toks, i);
                id = name_of(inner);
                i = next;
                continue;
            }
            TokenKind::TextBlock => {
                label = t.block_inner().unwrap_or_default().trim().to_string();
                i += 1;
                break;
            }
            _ => break,
        }
        i += 1;
    }
    let ev = PathEvent::InlineNode {
        id,
        label,
        style: style.into_iter().filter(|s| !s.is_empty()).collect::<Vec<_>>().join(","),
    };
    (ev, i)
}

/// Returns the tokens between `(` at `open` and its matching `)`, and the
/// index just past the `)`.
fn paren_group(toks: &[CodeToken], open: usize) -> (&[CodeToken], usize) {
    let mut depth = 0usize;
    for (j, t) in toks.iter().enumerate().skip(open) {
        if t.kind != TokenKind::Punct {
            continue;
        }
        match t.text.as_str() {
            "(" => depth += 1,
            ")" => {
                depth -= 1;
                if depth == 0 {
                    return (&toks[open + 1..j], j + 1);
                }
            }
            _ => {}
        }
    }
    (&toks[open + 1..], toks.len())
}

/// A paren group naming a node: `(a)`, `(a.north)`, `(a.north east)`.
fn name_of(inner: &[CodeToken]) -> Option<String> {
    let first = inner.first()?;
    if first.kind != TokenKind::Ident {
        return None;
    }
    if inner.len() > 1 && !(first.text.contains('.') && inner[1..].iter().all(|t| t.kind == TokenKind::Ident)) {
        return None;
    }
    let base = first.text.split('.').next().unwrap_or(&first.text);
    Some(base.to_string())
}

fn cartesian(inner: &[CodeToken]) -> Option<(f64, f64)> {
    let text: String = inner.iter().map(|t| t.text.as_str()).collect();
    let (x, y) = text.split_once(',')?;
    Some((length(x)?, length(y)?))
}

fn length(s: &str) -> Option<f64> {
    let s = s.trim();
    let (num, scale) = if let Some(n) = s.strip_suffix("cm") {
        (n, 1.0)
    } else if let Some(n) = s.strip_suffix("mm") {
        (n, 0.1)
    } else if let Some(n) = s.strip_suffix("pt") {
        (n, 2.54 / 72.27)
    } else if let Some(n) = s.strip_suffix("in") {
        (n, 2.54)
    } else {
        (s, 1.0)
    };
    num.parse::<f64>().ok().filter(|v| v.is_finite()).map(|v| v * scale)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::{parse, DiagramCode};

    fn graph(src: &str) -> NodeGraph {
        extract_node_graph(&parse(&DiagramCode::new(src)).unwrap())
    }

    fn pairs(g: &NodeGraph) -> Vec<(&str, &str)> {
        g.edges.iter().map(|e| (e.src.as_str(), e.dst.as_str())).collect()
    }

    #[test]
    fn two_nodes_one_edge() {
        let g = graph(
            "\\begin{tikzpicture}\\node (a) {A};\\node (b) {B};\\draw (a) -- (b);\\end{tikzpicture}",
        );
        let ids: Vec<_> = g.vertices.iter().map(|v| v.id.as_str()).collect();
        assert_eq!(ids, ["a", "b"]);
        assert_eq!(pairs(&g), [("a", "b")]);
        assert!(g.dangling_refs.is_empty());
    }

    #[test]
    fn empty_picture() {
        assert!(graph("\\begin{tikzpicture}\\end{tikzpicture}").is_empty());
    }

    #[test]
    fn undeclared_refs_dangle() {
        let g = graph("\\draw (a) -- (b);");
        assert!(g.vertices.is_empty());
        assert_eq!(pairs(&g), [("a", "b")]);
        assert_eq!(g.dangling_refs, ["a", "b"]);
    }

    #[test]
    fn chains_and_edge_operator() {
        let g = graph("\\draw (a) -- (b) to (c); \\path (x) edge[->] (y) edge (z);");
        assert_eq!(pairs(&g), [("a", "b"), ("b", "c"), ("x", "y"), ("x", "z")]);
        assert_eq!(g.edges[2].style, "->");
    }

    #[test]
    fn statement_style_and_anchor() {
        let g = graph("\\draw[->, thick] (a.north) -- (b.south east);");
        assert_eq!(pairs(&g), [("a", "b")]);
        assert_eq!(g.edges[0].style, "->, thick");
    }

    #[test]
    fn literal_coordinates_do_not_make_edges() {
        let g = graph("\\draw (0,0) -- (a) -- (1,1);");
        assert!(g.edges.is_empty());
        assert_eq!(g.dangling_refs, ["a"]);
    }

    #[test]
    fn node_position_label_style() {
        let g = graph("\\node[draw, fill=red] (n1) at (2,-1.5) {Input};");
        let v = &g.vertices[0];
        assert_eq!(v.id, "n1");
        assert_eq!(v.label, "Input");
        assert_eq!(v.style, "draw, fill=red");
        assert_eq!(v.position, Some((2.0, -1.5)));
    }

    #[test]
    fn inline_nodes_declare_vertices() {
        let g = graph("\\draw (0,0) node (p) {P} -- (1,0) node[right] {x};");
        assert_eq!(g.vertices.len(), 1);
        assert_eq!(g.vertices[0].label, "P");
    }

    #[test]
    fn ids_are_case_sensitive() {
        let g = graph("\\node (A) {};\\node (a) {};\\draw (A) -- (a);");
        assert_eq!(g.vertices.len(), 2);
        assert!(g.dangling_refs.is_empty());
    }

    #[test]
    fn relative_coordinates_are_points() {
        let g = graph("\\node (a) {};\\draw (a) -- ++(1,0);");
        assert!(g.edges.is_empty());
    }
}
