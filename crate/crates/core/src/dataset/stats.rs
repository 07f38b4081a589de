//! Length statistics over emitted records, one cell per split and kind.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::query::{QueryKind, QueryRecord};

/// Whitespace-separated words with each punctuation mark as its own token.
pub fn count_tokens(text: &str) -> usize {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\w+|[^\w\s]").unwrap()).find_iter(text).count()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LengthSummary {
    pub min: usize,
    pub max: usize,
    pub avg: f64,
}

impl LengthSummary {
    pub fn of(counts: &[usize]) -> Option<Self> {
        let min = *counts.iter().min()?;
        let max = *counts.iter().max()?;
        let avg = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        Some(LengthSummary { min, max, avg })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellStats {
    pub count: usize,
    /// `None` for an empty cell.
    pub query: Option<LengthSummary>,
    pub answer: Option<LengthSummary>,
}

impl CellStats {
    pub fn of(records: &[&QueryRecord]) -> Self {
        let q: Vec<usize> = records.iter().map(|r| count_tokens(&r.query)).collect();
        let a: Vec<usize> = records.iter().map(|r| count_tokens(&r.answer)).collect();
        CellStats {
            count: records.len(),
            query: LengthSummary::of(&q),
            answer: LengthSummary::of(&a),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub split_seed: u64,
    /// split → kind → cell
    pub cells: BTreeMap<Split, BTreeMap<QueryKind, CellStats>>,
    pub total: usize,
}

impl CorpusStats {
    pub fn cell(&self, split: Split, kind: QueryKind) -> Option<&CellStats> {
        self.cells.get(&split)?.get(&kind)
    }
}

/// Every split×kind cell is present, empty ones with `None` summaries.
pub fn compute_stats(splits: &BTreeMap<Split, Vec<QueryRecord>>, split_seed: u64) -> CorpusStats {
    let mut cells = BTreeMap::new();
    let mut total = 0;
    for split in [Split::Train, Split::Test] {
        let records = splits.get(&split).map(Vec::as_slice).unwrap_or_default();
        let mut row = BTreeMap::new();
        for kind in [QueryKind::S2C, QueryKind::C2C] {
            let of_kind: Vec<&QueryRecord> = records.iter().filter(|r| r.kind == kind).collect();
            total += of_kind.len();
            row.insert(kind, CellStats::of(&of_kind));
        }
        cells.insert(split, row);
    }
    CorpusStats { split_seed, cells, total }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{DiagramCategory, Inspection};

    fn rec(kind: QueryKind, query_tokens: usize) -> QueryRecord {
        QueryRecord {
            id: "r".into(),
            kind,
            query: vec!["w"; query_tokens].join(" "),
            image_path: None,
            answer: "\\node (a) {A};".into(),
            category: DiagramCategory::Unknown,
            provenance: "p".into(),
            inspection: Inspection::Unreviewed,
        }
    }

    #[test]
    fn tokenizer_splits_punctuation() {
        assert_eq!(count_tokens("\\node (a) {A};"), 9);
        assert_eq!(count_tokens("  "), 0);
        assert_eq!(count_tokens("foo_bar, baz"), 3);
    }

    #[test]
    fn two_records() {
        let mut m = BTreeMap::new();
        m.insert(Split::Train, vec![rec(QueryKind::S2C, 10), rec(QueryKind::S2C, 30)]);
        let s = compute_stats(&m, 7);
        let c = s.cell(Split::Train, QueryKind::S2C).unwrap();
        assert_eq!(c.count, 2);
        assert_eq!(c.query, Some(LengthSummary { min: 10, max: 30, avg: 20.0 }));
        assert_eq!(s.total, 2);
        assert_eq!(s.cell(Split::Test, QueryKind::C2C).unwrap().query, None);
    }

    #[test]
    fn single_record() {
        let mut m = BTreeMap::new();
        m.insert(Split::Test, vec![rec(QueryKind::C2C, 5)]);
        let q = compute_stats(&m, 0).cell(Split::Test, QueryKind::C2C).unwrap().query.unwrap();
        assert_eq!((q.min, q.max, q.avg), (5, 5, 5.0));
    }
}
