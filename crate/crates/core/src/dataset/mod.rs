//! Benchmark corpus construction from a directory of `.tex` diagrams.
//!
//! Each source is compiled (or previewed), cropped, normalized to 800×600
//! and binarized into a sketch image, then paired with an S2C and a C2C
//! query. Sources are split 80/20 by provenance with a seeded shuffle.

pub mod imageops;
pub mod query;
pub mod stats;

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use image::RgbImage;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::edit_code;
use crate::code::DiagramCode;
use crate::orchestrator::{RoleAgent, Toolchain};
use crate::verify::{self, CompileStatus};

pub use imageops::{crop_whitespace, normalize_size, sketchify};
pub use query::{build_queries, fallback_sketch_code, parse_c2c_query, Inspection, QueryKind, QueryRecord};
pub use stats::{compute_stats, count_tokens, CellStats, CorpusStats, LengthSummary, Split};

pub const TRAIN_FRACTION: f64 = 0.8;
pub const DEFAULT_SPLIT_SEED: u64 = 42;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("no .tex files under {0}")]
    EmptySource(PathBuf),
    #[error("{0}: diagram code is empty")]
    EmptyCode(String),
    #[error("metadata: {0}")]
    Metadata(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("image: {0}")]
    Image(#[from] image::ImageError),
    #[error("{path}:{line}: {message}")]
    Record { path: PathBuf, line: usize, message: String },
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> DatasetError + '_ {
    move |source| DatasetError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagramCategory {
    Flowchart,
    DirectedGraph,
    UndirectedGraph,
    ModelArchitecture,
    MindMap,
    Tree,
    StateMachine,
    Chart,
    #[default]
    Unknown,
}

impl DiagramCategory {
    pub const ALL: [DiagramCategory; 9] = [
        DiagramCategory::Flowchart,
        DiagramCategory::DirectedGraph,
        DiagramCategory::UndirectedGraph,
        DiagramCategory::ModelArchitecture,
        DiagramCategory::MindMap,
        DiagramCategory::Tree,
        DiagramCategory::StateMachine,
        DiagramCategory::Chart,
        DiagramCategory::Unknown,
    ];

    /// Lenient: case, spaces, dashes and underscores are ignored.
    pub fn parse(s: &str) -> Option<Self> {
        let key: String = s
            .chars()
            .filter(|c| c.is_alphanumeric())
            .flat_map(char::to_lowercase)
            .collect();
        Self::ALL.into_iter().find(|c| format!("{c:?}").to_lowercase() == key)
    }
}

/// Mechanical pre-screen thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct InspectRules {
    /// Laplacian variance below this marks an image as blurry.
    pub blur_threshold: f64,
    pub ink_threshold: u8,
}

impl Default for InspectRules {
    fn default() -> Self {
        InspectRules { blur_threshold: 10.0, ink_threshold: imageops::INK_THRESHOLD }
    }
}

/// Flags a record as rejected on the first failing rule, else leaves its
/// status alone for a human pass. `image` is the uncropped render.
pub fn inspect_flags(record: &QueryRecord, image: Option<&RgbImage>, rules: &InspectRules) -> Inspection {
    if record.query.contains("```") {
        return Inspection::Rejected("code-in-query".into());
    }
    if let Some(img) = image {
        if imageops::ink_bounds(img, rules.ink_threshold).is_none() {
            return Inspection::Rejected("blank".into());
        }
        if imageops::touches_border(img, rules.ink_threshold) {
            return Inspection::Rejected("truncated".into());
        }
        if imageops::laplacian_variance(img) < rules.blur_threshold {
            return Inspection::Rejected("blurry".into());
        }
    }
    record.inspection.clone()
}

/// One `.tex` source with its metadata.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceDiagram {
    pub path: PathBuf,
    /// Path relative to the source root, `/`-separated.
    pub relative: String,
    pub category: DiagramCategory,
    pub provenance: String,
}

#[derive(Debug, Deserialize)]
struct MetadataRow {
    file: String,
    #[serde(default)]
    category: Option<String>,
    #[serde(default)]
    provenance: Option<String>,
}

fn collect_tex(dir: &Path, root: &Path, out: &mut Vec<(String, PathBuf)>) -> Result<(), DatasetError> {
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let entry = entry.map_err(io_err(dir))?;
        let path = entry.path();
        if path.is_dir() {
            collect_tex(&path, root, out)?;
        } else if path.extension().is_some_and(|e| e == "tex") {
            let rel = path.strip_prefix(root).unwrap_or(&path);
            let rel = rel.components().map(|c| c.as_os_str().to_string_lossy()).collect::<Vec<_>>().join("/");
            out.push((rel, path));
        }
    }
    Ok(())
}

/// Record id derived from a provenance string.
pub fn sanitize_id(s: &str) -> String {
    let id: String = s
        .trim_end_matches(".tex")
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' })
        .collect();
    if id.is_empty() {
        "diagram".into()
    } else {
        id
    }
}

/// Finds every `.tex` file under `src`, sorted by relative path, and joins
/// the optional `metadata.csv` (columns `file,category,provenance`).
pub fn discover_sources(src: &Path) -> Result<Vec<SourceDiagram>, DatasetError> {
    let mut files = Vec::new();
    collect_tex(src, src, &mut files)?;
    if files.is_empty() {
        return Err(DatasetError::EmptySource(src.to_path_buf()));
    }
    files.sort();
    let mut meta: BTreeMap<String, MetadataRow> = BTreeMap::new();
    let meta_path = src.join("metadata.csv");
    if meta_path.exists() {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(&meta_path).map_err(|e| {
            DatasetError::Metadata(e.to_string())
        })?;
        for row in rdr.deserialize::<MetadataRow>() {
            let row = row.map_err(|e| DatasetError::Metadata(e.to_string()))?;
            meta.insert(row.file.clone(), row);
        }
    }
    let mut out = Vec::with_capacity(files.len());
    for (rel, path) in files {
        let row = meta.get(&rel);
        let category = match row.and_then(|r| r.category.as_deref()).filter(|c| !c.is_empty()) {
            Some(c) => DiagramCategory::parse(c)
                .ok_or_else(|| DatasetError::Metadata(format!("{rel}: unknown category {c:?}")))?,
            None => DiagramCategory::Unknown,
        };
        let provenance = row
            .and_then(|r| r.provenance.clone())
            .filter(|p| !p.is_empty())
            .unwrap_or_else(|| rel.trim_end_matches(".tex").to_string());
        out.push(SourceDiagram { path, relative: rel, category, provenance });
    }
    let mut seen = std::collections::BTreeSet::new();
    for s in &out {
        if !seen.insert(sanitize_id(&s.provenance)) {
            return Err(DatasetError::Metadata(format!("duplicate provenance id {:?}", s.provenance)));
        }
    }
    Ok(out)
}

/// Assigns provenance ids to train or test: sort, seeded shuffle, then the
/// first `round(0.8 n)` go to train.
pub fn split_provenance(ids: &[String], seed: u64) -> BTreeMap<String, Split> {
    let mut sorted: Vec<&String> = ids.iter().collect();
    sorted.sort();
    sorted.dedup();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sorted.shuffle(&mut rng);
    let n_train = (sorted.len() as f64 * TRAIN_FRACTION).round() as usize;
    sorted
        .into_iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), if i < n_train { Split::Train } else { Split::Test }))
        .collect()
}

#[derive(Clone)]
pub struct BuildOptions {
    pub split_seed: u64,
    pub toolchain: Toolchain,
    /// Writes sketch codes; `None` uses [`fallback_sketch_code`].
    pub sketch_agent: Option<RoleAgent>,
    pub rules: InspectRules,
    pub jobs: Option<usize>,
}

impl BuildOptions {
    pub fn new(toolchain: Toolchain) -> Self {
        BuildOptions {
            split_seed: DEFAULT_SPLIT_SEED,
            toolchain,
            sketch_agent: None,
            rules: InspectRules::default(),
            jobs: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildSummary {
    pub sources: usize,
    pub emitted: usize,
    /// Provenance id and reason for each excluded source.
    pub rejected: Vec<(String, String)>,
    pub stats: CorpusStats,
}

struct Processed {
    provenance: String,
    records: Option<(QueryRecord, QueryRecord)>,
    image: Option<RgbImage>,
    reject: Option<String>,
}

const SKETCH_EDITS: &[&str] = &[
    "Remove all colors, fills, shading and decorative line styles",
    "Keep every node, label and connection",
];

fn sketch_code_for(code: &DiagramCode, agent: Option<&RoleAgent>) -> String {
    if let Some(a) = agent {
        let edits: Vec<String> = SKETCH_EDITS.iter().map(|s| s.to_string()).collect();
        match edit_code(code, &edits, a.backend.as_ref(), None, a.temperature) {
            Ok(c) => return c.source().to_string(),
            Err(e) => log::warn!("sketch-code backend failed, using fallback: {e}"),
        }
    }
    fallback_sketch_code(code.source())
}

fn process(src: &SourceDiagram, opts: &BuildOptions, workdir: &Path) -> Result<Processed, DatasetError> {
    let text = fs::read_to_string(&src.path).map_err(io_err(&src.path))?;
    let code = DiagramCode::new(text.trim());
    let id = sanitize_id(&src.provenance);
    let reject = |reason: &str| Processed {
        provenance: src.provenance.clone(),
        records: None,
        image: None,
        reject: Some(reason.to_string()),
    };
    if code.is_blank() {
        return Ok(reject("empty-code"));
    }
    let compile = verify::compile(&code, &opts.toolchain.compiler, workdir);
    if compile.status.is_failure() {
        log::warn!("{}: {:?}", src.relative, compile.status);
        let reason = match compile.status {
            CompileStatus::Timeout => "compile-timeout",
            CompileStatus::ToolMissing => "tool-missing",
            _ => "compile-error",
        };
        return Ok(reject(reason));
    }
    let (render, _) = opts.toolchain.diagram_image(&compile, &code);
    if let Some(a) = &compile.artifact {
        let _ = fs::remove_file(a);
    }
    let sketch_code = sketch_code_for(&code, opts.sketch_agent.as_ref());
    let image_path = format!("images/{id}.png");
    let (mut s2c, mut c2c) = build_queries(&id, &sketch_code, code.source(), &image_path, src.category, &src.provenance)?;
    s2c.inspection = inspect_flags(&s2c, Some(&render), &opts.rules);
    c2c.inspection = inspect_flags(&c2c, None, &opts.rules);
    for r in [&s2c, &c2c] {
        if let Inspection::Rejected(reason) = &r.inspection {
            return Ok(reject(reason));
        }
    }
    let cropped = crop_whitespace(&render, opts.rules.ink_threshold, imageops::CROP_MARGIN);
    let image = sketchify(&normalize_size(&cropped));
    Ok(Processed {
        provenance: src.provenance.clone(),
        records: Some((s2c, c2c)),
        image: Some(image),
        reject: None,
    })
}

fn write_jsonl(path: &Path, records: &[&QueryRecord]) -> Result<(), DatasetError> {
    let mut buf = Vec::new();
    for r in records {
        serde_json::to_writer(&mut buf, r).map_err(|e| DatasetError::Io { path: path.to_path_buf(), source: e.into() })?;
        buf.push(b'\n');
    }
    fs::write(path, buf).map_err(io_err(path))
}

pub fn split_file_name(split: Split, kind: QueryKind) -> String {
    let k = match kind {
        QueryKind::S2C => "s2c",
        QueryKind::C2C => "c2c",
    };
    format!("{}_{k}.jsonl", split.name())
}

/// Builds the corpus from `src` into `out`. Output bytes depend only on the
/// sources, the seed and the toolchain.
pub fn build_dataset(src: &Path, out: &Path, opts: &BuildOptions) -> Result<BuildSummary, DatasetError> {
    let sources = discover_sources(src)?;
    let images_dir = out.join("images");
    fs::create_dir_all(&images_dir).map_err(io_err(&images_dir))?;
    let workdir = tempfile::Builder::new()
        .prefix("build-")
        .tempdir()
        .map_err(io_err(&std::env::temp_dir()))?;

    let run = || -> Vec<Result<Processed, DatasetError>> {
        sources.par_iter().map(|s| process(s, opts, workdir.path())).collect()
    };
    let processed = match opts.jobs {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
            .map_err(|e| DatasetError::Metadata(e.to_string()))?
            .install(run),
        None => run(),
    };

    let mut kept = Vec::new();
    let mut rejected = Vec::new();
    for p in processed {
        let p = p?;
        match (p.records, p.image, p.reject) {
            (Some(recs), Some(img), None) => kept.push((p.provenance, recs, img)),
            (_, _, reason) => rejected.push((p.provenance, reason.unwrap_or_default())),
        }
    }
    kept.sort_by(|a, b| a.0.cmp(&b.0));

    let ids: Vec<String> = kept.iter().map(|k| k.0.clone()).collect();
    let assignment = split_provenance(&ids, opts.split_seed);
    let mut splits: BTreeMap<Split, Vec<QueryRecord>> = BTreeMap::new();
    for (prov, (s2c, c2c), img) in &kept {
        let file = images_dir.join(format!("{}.png", sanitize_id(prov)));
        img.save_with_format(&file, image::ImageFormat::Png)?;
        let split = assignment[prov];
        splits.entry(split).or_default().extend([s2c.clone(), c2c.clone()]);
    }
    for split in [Split::Train, Split::Test] {
        let recs = splits.get(&split).map(Vec::as_slice).unwrap_or_default();
        for kind in [QueryKind::S2C, QueryKind::C2C] {
            let of_kind: Vec<&QueryRecord> = recs.iter().filter(|r| r.kind == kind).collect();
            write_jsonl(&out.join(split_file_name(split, kind)), &of_kind)?;
        }
    }
    let stats = compute_stats(&splits, opts.split_seed);
    let stats_path = out.join("stats.json");
    let mut json = serde_json::to_vec_pretty(&stats).map_err(|e| DatasetError::Io { path: stats_path.clone(), source: e.into() })?;
    json.push(b'\n');
    fs::write(&stats_path, json).map_err(io_err(&stats_path))?;
    rejected.sort();
    Ok(BuildSummary { sources: sources.len(), emitted: stats.total, rejected, stats })
}

/// Reads one emitted JSONL split. Blank lines are skipped.
pub fn read_records(path: &Path) -> Result<Vec<QueryRecord>, DatasetError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: QueryRecord = serde_json::from_str(line).map_err(|e| DatasetError::Record {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rec(query: &str) -> QueryRecord {
        QueryRecord {
            id: "x".into(),
            kind: QueryKind::S2C,
            query: query.into(),
            image_path: None,
            answer: "a".into(),
            category: DiagramCategory::Unknown,
            provenance: "x".into(),
            inspection: Inspection::Unreviewed,
        }
    }

    fn clean_image() -> RgbImage {
        let mut img = RgbImage::from_pixel(60, 40, image::Rgb([255, 255, 255]));
        for x in 10..50 {
            img.put_pixel(x, 20, image::Rgb([0, 0, 0]));
        }
        img
    }

    #[test]
    fn inspection_rules() {
        let rules = InspectRules::default();
        assert_eq!(
            inspect_flags(&rec("see ```code```"), None, &rules),
            Inspection::Rejected("code-in-query".into())
        );
        assert_eq!(inspect_flags(&rec("q"), Some(&clean_image()), &rules), Inspection::Unreviewed);
        let mut cut = clean_image();
        cut.put_pixel(59, 10, image::Rgb([0, 0, 0]));
        assert_eq!(inspect_flags(&rec("q"), Some(&cut), &rules), Inspection::Rejected("truncated".into()));
        let blank = RgbImage::from_pixel(10, 10, image::Rgb([255, 255, 255]));
        assert_eq!(inspect_flags(&rec("q"), Some(&blank), &rules), Inspection::Rejected("blank".into()));
        let soft = RgbImage::from_fn(40, 40, |x, y| {
            let v = if (5..35).contains(&x) && (5..35).contains(&y) { 249 } else { 255 };
            image::Rgb([v, v, v])
        });
        assert_eq!(inspect_flags(&rec("q"), Some(&soft), &rules), Inspection::Rejected("blurry".into()));
    }

    #[test]
    fn category_parsing() {
        assert_eq!(DiagramCategory::parse("directed graph"), Some(DiagramCategory::DirectedGraph));
        assert_eq!(DiagramCategory::parse("Mind-Map"), Some(DiagramCategory::MindMap));
        assert_eq!(DiagramCategory::parse("bogus"), None);
    }

    #[test]
    fn split_is_seeded_and_eighty_percent() {
        let ids: Vec<String> = (0..10).map(|i| format!("d{i}")).collect();
        let a = split_provenance(&ids, 1);
        assert_eq!(a.values().filter(|s| **s == Split::Train).count(), 8);
        let mut rev = ids.clone();
        rev.reverse();
        assert_eq!(split_provenance(&rev, 1), a);
        let five: Vec<String> = ids[..5].to_vec();
        assert_eq!(split_provenance(&five, 3).values().filter(|s| **s == Split::Train).count(), 4);
    }

    #[test]
    fn ids_are_filesystem_safe() {
        assert_eq!(sanitize_id("graphs/a b.tex"), "graphs_a_b");
        assert_eq!(sanitize_id(""), "diagram");
    }
}
