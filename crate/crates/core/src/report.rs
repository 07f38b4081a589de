//! Metric reports assembled from run records.
//!
//! [`build_report`] is a pure function of an [`EvalHeader`] and the run
//! records, so a report rebuilt from a persisted log is byte-identical to the
//! one written during evaluation.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::code::DiagramCode;
use crate::metrics::image::{ImageMetric, ImageScore, KidParams};
use crate::metrics::text::{self, TextMetric};
use crate::orchestrator::{ErrorLabel, RunRecord};
use crate::verify::CompileStatus;

pub const REPORT_VERSION: u32 = 1;

pub const AGGREGATION: &str = "macro-average of per-sample values over scored samples; \
Pass@1 counts failed runs as failures and excludes samples never compiled; \
FID, C-FID, KID and IS are computed once over the whole set";

/// A report column: a text metric or an image metric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Column {
    Text(TextMetric),
    Image(ImageMetric),
}

impl Column {
    pub fn all() -> Vec<Column> {
        TextMetric::ALL
            .iter()
            .map(|m| Column::Text(*m))
            .chain(ImageMetric::ALL.iter().map(|m| Column::Image(*m)))
            .collect()
    }

    pub fn name(self) -> &'static str {
        match self {
            Column::Text(m) => m.name(),
            Column::Image(m) => m.name(),
        }
    }

    pub fn parse(s: &str) -> Option<Column> {
        TextMetric::parse(s)
            .map(Column::Text)
            .or_else(|| ImageMetric::parse(s).map(Column::Image))
    }

    /// Whether the column is one value for the whole set rather than a
    /// mean of per-sample values.
    pub fn is_set_level(self) -> bool {
        matches!(self, Column::Image(m) if !m.is_pairwise())
    }
}

/// Parses a comma-separated metric list into canonical column order.
pub fn parse_columns(list: &str) -> Result<Vec<Column>, String> {
    let mut picked = Vec::new();
    for item in list.split(',').map(str::trim).filter(|s| !s.is_empty()) {
        let c = Column::parse(item).ok_or_else(|| format!("unknown metric {item:?}"))?;
        picked.push(c);
    }
    if picked.is_empty() {
        return Err("metric list is empty".into());
    }
    Ok(Column::all().into_iter().filter(|c| picked.contains(c)).collect())
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ToolchainInfo {
    pub checker: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tex_version: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rasterizer: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SidecarInfo {
    pub url: String,
    #[serde(default)]
    pub model_versions: BTreeMap<String, String>,
}

/// Run-level metadata written as the first line of an evaluation log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalHeader {
    pub task: String,
    pub config_hash: String,
    /// Requested column names, canonical order.
    pub metrics: Vec<String>,
    pub toolchain: ToolchainInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<SidecarInfo>,
    pub kid: KidParams,
    pub is_splits: usize,
    /// Set-level image scores keyed by column name.
    #[serde(default)]
    pub set_scores: BTreeMap<String, ImageScore>,
    /// Columns that could not be computed, with the reason.
    #[serde(default)]
    pub absent: BTreeMap<String, String>,
}

impl EvalHeader {
    pub fn columns(&self) -> Vec<Column> {
        self.metrics.iter().filter_map(|m| Column::parse(m)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub task: String,
    pub config_hash: String,
    pub toolchain: ToolchainInfo,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sidecar: Option<SidecarInfo>,
    pub kid: KidParams,
    pub is_splits: usize,
    pub aggregation: String,
    pub samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub task_id: String,
    pub outcome: String,
    pub compile: CompileStatus,
    pub attempts: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_label: Option<ErrorLabel>,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub value: f64,
    /// Samples contributing to the value.
    pub n: usize,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub detail: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Exclusions {
    /// Runs whose final code was never compiled.
    pub skipped: usize,
    /// Runs that ended without an accepted diagram.
    pub failed: usize,
    /// Per column, samples that had no score.
    pub unscored: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub v: u32,
    pub meta: ReportMeta,
    /// Columns with an aggregate, in canonical order.
    pub columns: Vec<String>,
    pub rows: Vec<SampleRow>,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub absent: BTreeMap<String, String>,
    pub exclusions: Exclusions,
}

fn compile_status(r: &RunRecord) -> CompileStatus {
    if !r.outcome.is_accepted() {
        return CompileStatus::CompileError;
    }
    match r.final_status() {
        CompileStatus::Skipped => r.eval.as_ref().and_then(|e| e.compile).unwrap_or(CompileStatus::Skipped),
        s => s,
    }
}

fn sample_score(col: Column, r: &RunRecord, status: CompileStatus) -> Option<f64> {
    match col {
        Column::Text(TextMetric::Pass1) => match status {
            CompileStatus::Skipped => None,
            CompileStatus::Success => Some(100.0),
            _ => Some(0.0),
        },
        Column::Text(m) => {
            let reference = DiagramCode::new(r.eval.as_ref()?.reference.as_str());
            let empty = DiagramCode::default();
            let candidate = r.outcome.code().unwrap_or(&empty);
            text::score(m, candidate, &reference).ok().map(|s| s.value)
        }
        Column::Image(m) => r.eval.as_ref()?.image_scores.get(m.name()).copied(),
    }
}

pub fn build_report(header: &EvalHeader, records: &[RunRecord]) -> MetricReport {
    let columns = header.columns();
    let mut absent = header.absent.clone();
    let mut exclusions = Exclusions::default();
    let mut rows = Vec::with_capacity(records.len());
    let mut sums: BTreeMap<Column, (f64, usize)> = BTreeMap::new();

    for r in records {
        let status = compile_status(r);
        if status == CompileStatus::Skipped {
            exclusions.skipped += 1;
        }
        if !r.outcome.is_accepted() {
            exclusions.failed += 1;
        }
        let mut scores = BTreeMap::new();
        for &col in &columns {
            if col.is_set_level() || absent.contains_key(col.name()) {
                continue;
            }
            match sample_score(col, r, status) {
                Some(v) => {
                    scores.insert(col.name().to_string(), v);
                    let e = sums.entry(col).or_insert((0.0, 0));
                    e.0 += v;
                    e.1 += 1;
                }
                None => *exclusions.unscored.entry(col.name().to_string()).or_insert(0) += 1,
            }
        }
        rows.push(SampleRow {
            task_id: r.task_id.clone(),
            outcome: if r.outcome.is_accepted() { "accepted" } else { "failed" }.to_string(),
            compile: status,
            attempts: r.attempts.len(),
            error_label: r.error_label,
            scores,
        });
    }

    let mut aggregates = BTreeMap::new();
    let mut present = Vec::new();
    for &col in &columns {
        let name = col.name().to_string();
        if absent.contains_key(&name) {
            continue;
        }
        let agg = if col.is_set_level() {
            header.set_scores.get(&name).map(|s| Aggregate {
                value: s.value,
                n: records.len(),
                detail: s.detail.clone(),
            })
        } else {
            sums.get(&col).filter(|(_, n)| *n > 0).map(|&(sum, n)| Aggregate {
                value: sum / n as f64,
                n,
                detail: BTreeMap::new(),
            })
        };
        match agg {
            Some(a) => {
                aggregates.insert(name.clone(), a);
                present.push(name);
            }
            None => {
                absent.insert(name, "no scorable samples".into());
            }
        }
    }

    MetricReport {
        v: REPORT_VERSION,
        meta: ReportMeta {
            task: header.task.clone(),
            config_hash: header.config_hash.clone(),
            toolchain: header.toolchain.clone(),
            sidecar: header.sidecar.clone(),
            kid: header.kid,
            is_splits: header.is_splits,
            aggregation: AGGREGATION.to_string(),
            samples: records.len(),
        },
        columns: present,
        rows,
        aggregates,
        absent,
        exclusions,
    }
}

pub fn report_json(report: &MetricReport) -> String {
    let mut s = serde_json::to_string_pretty(report).expect("report serializes");
    s.push('\n');
    s
}

fn table(header: &[String], body: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.chars().count()).collect();
    for row in body {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.chars().count());
        }
    }
    let line = |cells: &[String]| -> String {
        let mut s = String::new();
        for (i, (c, w)) in cells.iter().zip(&widths).enumerate() {
            if i == 0 {
                let _ = write!(s, "{c:<w$}");
            } else {
                let _ = write!(s, "  {c:>w$}");
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header);
    out.push_str(&line(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>()));
    for row in body {
        out.push_str(&line(row));
    }
    out
}

/// Human-readable rendering: aggregates first, then one line per sample.
pub fn render_table(report: &MetricReport) -> String {
    let m = &report.meta;
    let mut out = format!(
        "task {}  samples {}  config {}  checker {}\n\n",
        m.task,
        m.samples,
        &m.config_hash[..m.config_hash.len().min(12)],
        m.toolchain.checker
    );
    let mut header = vec!["metric".to_string()];
    header.extend(["value".to_string(), "n".to_string()]);
    let body: Vec<Vec<String>> = report
        .columns
        .iter()
        .map(|c| {
            let a = &report.aggregates[c];
            vec![c.clone(), format!("{:.2}", a.value), a.n.to_string()]
        })
        .collect();
    out.push_str(&table(&header, &body));
    if !report.absent.is_empty() {
        out.push_str("\nabsent:\n");
        for (k, v) in &report.absent {
            let _ = writeln!(out, "  {k}: {v}");
        }
    }
    let per_sample: Vec<String> = report
        .columns
        .iter()
        .filter(|c| Column::parse(c).is_some_and(|c| !c.is_set_level()))
        .cloned()
        .collect();
    let mut header = vec!["sample".to_string(), "outcome".to_string(), "attempts".to_string()];
    header.extend(per_sample.iter().cloned());
    let body: Vec<Vec<String>> = report
        .rows
        .iter()
        .map(|r| {
            let mut row = vec![r.task_id.clone(), r.outcome.clone(), r.attempts.to_string()];
            row.extend(
                per_sample
                    .iter()
                    .map(|c| r.scores.get(c).map_or("-".to_string(), |v| format!("{v:.2}"))),
            );
            row
        })
        .collect();
    out.push('\n');
    out.push_str(&table(&header, &body));
    out
}

/// Path of the text table written next to a JSON report.
pub fn table_path(json_path: &Path) -> PathBuf {
    json_path.with_extension("txt")
}

/// Writes the JSON report and its text table.
pub fn write_report(report: &MetricReport, json_path: &Path) -> std::io::Result<()> {
    if let Some(dir) = json_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    std::fs::write(json_path, report_json(report))?;
    std::fs::write(table_path(json_path), render_table(report))
}
