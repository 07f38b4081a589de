//! Code-aware similarity: CodeBLEU and RUBY adapted to TikZ.
//!
//! CodeBLEU keeps the canonical four equally weighted parts. TikZ commands play
//! the role of keywords, parse subtrees stand in for the AST, and the node
//! graph replaces dataflow. RUBY cascades from the node graph to the parse
//! tree to the raw string, using the richest view both sides support.

use std::collections::{BTreeMap, HashMap, HashSet};

use serde::{Deserialize, Serialize};

use super::lexical::string_similarity;
use super::ngram::{bleu_raw, weighted_bleu_raw};
use super::{MetricError, TextMetric, TextScore};
use crate::code::{extract_node_graph, CodeToken, DiagramCode, NodeGraph, NodeKind, ParseTree, TokenKind, TreeNode};

pub const CODEBLEU_WEIGHT: f64 = 0.25;
/// Unigram weight of TikZ command tokens in the keyword-weighted component.
pub const COMMAND_WEIGHT: f64 = 4.0;

pub const COMPONENT_BLEU: &str = "bleu";
pub const COMPONENT_WEIGHTED: &str = "weighted_ngram";
pub const COMPONENT_AST: &str = "ast_match";
pub const COMPONENT_GRAPH: &str = "graph_match";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RubyTier {
    Graph,
    Tree,
    String,
}

fn texts(tokens: &[CodeToken]) -> Vec<&str> {
    tokens.iter().map(|t| t.text.as_str()).collect()
}

/// Structural signature of every subtree, as a multiset.
///
/// Statement signatures keep commands, punctuation and option-list presence
/// but abstract identifiers, numbers and labels, so a relabelled node still
/// matches structurally.
pub fn subtree_signatures(tree: &ParseTree) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    signature(tree, &tree.root, &mut out);
    out
}

fn signature(tree: &ParseTree, node: &TreeNode, out: &mut HashMap<String, usize>) -> String {
    let sig = if matches!(node.kind, NodeKind::NodeDecl | NodeKind::EdgeDecl | NodeKind::Raw) {
        let body: Vec<&str> = tree
            .node_tokens(node)
            .iter()
            .map(|t| match t.kind {
                TokenKind::Command | TokenKind::Punct | TokenKind::BeginEnv | TokenKind::EndEnv => t.text.as_str(),
                TokenKind::Ident => "I",
                TokenKind::Number => "N",
                TokenKind::OptionBlock => "[]",
                TokenKind::TextBlock => "{}",
            })
            .collect();
        format!("{:?}({})", node.kind, body.join(" "))
    } else {
        let kids: Vec<String> = node.children.iter().map(|c| signature(tree, c, out)).collect();
        format!(
            "{:?}:{}({})",
            node.kind,
            node.name.as_deref().unwrap_or(""),
            kids.join(",")
        )
    };
    *out.entry(sig.clone()).or_insert(0) += 1;
    sig
}

fn multiset_overlap(a: &HashMap<String, usize>, b: &HashMap<String, usize>) -> usize {
    a.iter().map(|(k, &n)| n.min(b.get(k).copied().unwrap_or(0))).sum()
}

/// Fraction of the reference's subtrees found in the candidate.
pub(crate) fn ast_match(cand: &ParseTree, refr: &ParseTree) -> f64 {
    let c = subtree_signatures(cand);
    let r = subtree_signatures(refr);
    let total: usize = r.values().sum();
    if total == 0 {
        return 1.0;
    }
    multiset_overlap(&c, &r) as f64 / total as f64
}

/// F1 over directed edge endpoint pairs. `None` when neither side has edges.
pub(crate) fn edge_f1(cand: &NodeGraph, refr: &NodeGraph) -> Option<f64> {
    let c = cand.edge_pairs();
    let r = refr.edge_pairs();
    if c.is_empty() && r.is_empty() {
        return None;
    }
    let hit = c.intersection(&r).count() as f64;
    if hit == 0.0 {
        return Some(0.0);
    }
    let p = hit / c.len() as f64;
    let rc = hit / r.len() as f64;
    Some(2.0 * p * rc / (p + rc))
}

/// `0.25 · (BLEU + weighted n-gram + AST match + graph match)`.
///
/// If either side fails to parse, the AST and graph parts take the BLEU
/// value. The graph part also takes the BLEU value when neither side has
/// any edges.
pub fn codebleu(candidate: &DiagramCode, reference: &DiagramCode) -> Result<TextScore, MetricError> {
    let rt = texts(reference.tokens());
    if rt.is_empty() {
        return Err(MetricError::EmptyReference);
    }
    let ct = texts(candidate.tokens());
    let bleu = 100.0 * bleu_raw(&ct, &rt);

    let weights: HashMap<&str, f64> = candidate
        .tokens()
        .iter()
        .chain(reference.tokens())
        .filter(|t| t.kind == TokenKind::Command)
        .map(|t| (t.text.as_str(), COMMAND_WEIGHT))
        .collect();
    let weighted = 100.0 * weighted_bleu_raw(&ct, &rt, |t| weights.get(t).copied().unwrap_or(1.0));

    let (ast, graph) = match (candidate.parse(), reference.parse()) {
        (Ok(c), Ok(r)) => {
            let ast = 100.0 * ast_match(&c, &r);
            let graph = edge_f1(&extract_node_graph(&c), &extract_node_graph(&r))
                .map(|f| 100.0 * f)
                .unwrap_or(bleu);
            (ast, graph)
        }
        _ => (bleu, bleu),
    };

    let components = BTreeMap::from([
        (COMPONENT_BLEU.to_string(), bleu),
        (COMPONENT_WEIGHTED.to_string(), weighted),
        (COMPONENT_AST.to_string(), ast),
        (COMPONENT_GRAPH.to_string(), graph),
    ]);
    let value = CODEBLEU_WEIGHT * (bleu + weighted + ast + graph);
    Ok(TextScore {
        metric: TextMetric::CodeBleu,
        value,
        components,
        tier: None,
    })
}

/// Graph edit distance with vertices matched by id: a relabelled vertex costs
/// 1, a vertex or edge present on one side only costs 1.
pub fn graph_edit_distance(a: &NodeGraph, b: &NodeGraph) -> usize {
    let va: HashMap<&str, &str> = a.vertices.iter().map(|v| (v.id.as_str(), v.label.as_str())).collect();
    let vb: HashMap<&str, &str> = b.vertices.iter().map(|v| (v.id.as_str(), v.label.as_str())).collect();
    let mut cost = 0;
    for (id, la) in &va {
        match vb.get(id) {
            Some(lb) if lb == la => {}
            _ => cost += 1,
        }
    }
    cost += vb.keys().filter(|id| !va.contains_key(*id)).count();
    let ea = a.edge_pairs();
    let eb = b.edge_pairs();
    cost + ea.symmetric_difference(&eb).count()
}

pub(crate) fn graph_similarity(a: &NodeGraph, b: &NodeGraph) -> f64 {
    let size = |g: &NodeGraph| {
        let ids: HashSet<&str> = g.vertices.iter().map(|v| v.id.as_str()).collect();
        ids.len() + g.edge_pairs().len()
    };
    let norm = size(a).max(size(b));
    if norm == 0 {
        return 1.0;
    }
    (1.0 - graph_edit_distance(a, b) as f64 / norm as f64).max(0.0)
}

/// Multiset Jaccard over subtree signatures.
pub(crate) fn tree_similarity(a: &ParseTree, b: &ParseTree) -> f64 {
    let sa = subtree_signatures(a);
    let sb = subtree_signatures(b);
    let inter = multiset_overlap(&sa, &sb);
    let union: usize = sa.values().sum::<usize>() + sb.values().sum::<usize>() - inter;
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn ruby(candidate: &DiagramCode, reference: &DiagramCode) -> Result<TextScore, MetricError> {
    if reference.is_blank() {
        return Err(MetricError::EmptyReference);
    }
    let (tier, sim) = match (candidate.parse(), reference.parse()) {
        (Ok(c), Ok(r)) => {
            let gc = extract_node_graph(&c);
            let gr = extract_node_graph(&r);
            if !gc.is_empty() && !gr.is_empty() {
                (RubyTier::Graph, graph_similarity(&gc, &gr))
            } else {
                (RubyTier::Tree, tree_similarity(&c, &r))
            }
        }
        _ => (
            RubyTier::String,
            string_similarity(candidate.source(), reference.source()),
        ),
    };
    Ok(TextScore {
        metric: TextMetric::Ruby,
        value: 100.0 * sim,
        components: BTreeMap::new(),
        tier: Some(tier),
    })
}
