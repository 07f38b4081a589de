//! Code-similarity metrics. Every score is on a 0-100 scale.

mod lexical;
mod ngram;
mod structural;

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::verify::CompileStatus;

pub use lexical::{chrf, edit_distance, levenshtein, rouge_l, CHRF_BETA, CHRF_ORDER, ROUGE_BETA};
pub use ngram::{bleu, MAX_ORDER};
pub use structural::{
    codebleu, graph_edit_distance, ruby, subtree_signatures, RubyTier, CODEBLEU_WEIGHT, COMMAND_WEIGHT,
    COMPONENT_AST, COMPONENT_BLEU, COMPONENT_GRAPH, COMPONENT_WEIGHTED,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum TextMetric {
    #[serde(rename = "Pass@1")]
    Pass1,
    #[serde(rename = "BLEU")]
    Bleu,
    #[serde(rename = "ROUGE-L")]
    RougeL,
    #[serde(rename = "chrF")]
    ChrF,
    #[serde(rename = "ED")]
    EditDist,
    #[serde(rename = "CodeBLEU")]
    CodeBleu,
    #[serde(rename = "RUBY")]
    Ruby,
}

impl TextMetric {
    pub const ALL: [TextMetric; 7] = [
        TextMetric::Pass1,
        TextMetric::RougeL,
        TextMetric::CodeBleu,
        TextMetric::Bleu,
        TextMetric::EditDist,
        TextMetric::ChrF,
        TextMetric::Ruby,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TextMetric::Pass1 => "Pass@1",
            TextMetric::Bleu => "BLEU",
            TextMetric::RougeL => "ROUGE-L",
            TextMetric::ChrF => "chrF",
            TextMetric::EditDist => "ED",
            TextMetric::CodeBleu => "CodeBLEU",
            TextMetric::Ruby => "RUBY",
        }
    }

    /// Whether larger values are better.
    pub fn higher_is_better(self) -> bool {
        self != TextMetric::EditDist
    }

    /// Parses names as used on the command line, case-insensitively.
    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase();
        Some(match key.as_str() {
            "pass1" | "pass" => TextMetric::Pass1,
            "bleu" => TextMetric::Bleu,
            "rougel" | "rouge" => TextMetric::RougeL,
            "chrf" => TextMetric::ChrF,
            "ed" | "editdistance" | "editdist" => TextMetric::EditDist,
            "codebleu" | "cbleu" => TextMetric::CodeBleu,
            "ruby" => TextMetric::Ruby,
            _ => return None,
        })
    }
}

impl fmt::Display for TextMetric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextScore {
    pub metric: TextMetric,
    pub value: f64,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub components: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tier: Option<RubyTier>,
}

impl TextScore {
    pub fn new(metric: TextMetric, value: f64) -> Self {
        TextScore {
            metric,
            value,
            components: BTreeMap::new(),
            tier: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("reference is empty")]
    EmptyReference,
    #[error("candidate and reference are both empty")]
    BothEmpty,
    #[error("no results to score")]
    EmptyInput,
    #[error("skipped compile results must be excluded before scoring")]
    SkippedEntry,
}

/// Token texts used by the sequence metrics (comments already stripped).
pub fn code_tokens(code: &crate::code::DiagramCode) -> Vec<&str> {
    code.tokens().iter().map(|t| t.text.as_str()).collect()
}

/// `100 · #Success / n`.
pub fn pass_at_1(results: &[CompileStatus]) -> Result<TextScore, MetricError> {
    if results.is_empty() {
        return Err(MetricError::EmptyInput);
    }
    if results.contains(&CompileStatus::Skipped) {
        return Err(MetricError::SkippedEntry);
    }
    let ok = results.iter().filter(|s| **s == CompileStatus::Success).count();
    Ok(TextScore::new(
        TextMetric::Pass1,
        100.0 * ok as f64 / results.len() as f64,
    ))
}

/// Computes one sequence/structure metric for a candidate-reference pair.
pub fn score(
    metric: TextMetric,
    candidate: &crate::code::DiagramCode,
    reference: &crate::code::DiagramCode,
) -> Result<TextScore, MetricError> {
    match metric {
        TextMetric::Bleu => bleu(&code_tokens(candidate), &code_tokens(reference)),
        TextMetric::RougeL => rouge_l(&code_tokens(candidate), &code_tokens(reference)),
        TextMetric::ChrF => chrf(&stripped(candidate), &stripped(reference)),
        TextMetric::EditDist => edit_distance(&stripped(candidate), &stripped(reference)),
        TextMetric::CodeBleu => codebleu(candidate, reference),
        TextMetric::Ruby => ruby(candidate, reference),
        TextMetric::Pass1 => Err(MetricError::EmptyInput),
    }
}

/// Source with comments removed, tokens joined by single spaces.
pub fn stripped(code: &crate::code::DiagramCode) -> String {
    crate::code::join_tokens(code.tokens())
}

#[cfg(test)]
mod tests {
    use super::*;
    use CompileStatus::*;

    #[test]
    fn pass_at_1_counts() {
        assert_eq!(pass_at_1(&[Success, CompileError, Success, Success]).unwrap().value, 75.0);
        assert_eq!(pass_at_1(&[Success, Success]).unwrap().value, 100.0);
        assert_eq!(pass_at_1(&[CompileError, Timeout]).unwrap().value, 0.0);
        assert_eq!(pass_at_1(&[]), Err(MetricError::EmptyInput));
        assert_eq!(pass_at_1(&[Success, Skipped]), Err(MetricError::SkippedEntry));
    }

    #[test]
    fn metric_names_round_trip() {
        for m in TextMetric::ALL {
            assert_eq!(TextMetric::parse(m.name()), Some(m));
        }
        assert_eq!(TextMetric::parse("C-BLEU"), Some(TextMetric::CodeBleu));
    }
}
