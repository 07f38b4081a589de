//! Benchmark evaluation: run the pipeline over a dataset split, then score.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use image::RgbImage;
use thiserror::Error;

use crate::agent::SketchTask;
use crate::code::DiagramCode;
use crate::config::Config;
use crate::dataset::{self, imageops, parse_c2c_query, DatasetError, QueryKind, QueryRecord};
use crate::metrics::image::{self as im, FeatureModel, FeatureSet, ImageMetric, ImageMetricError, ImageScore};
use crate::orchestrator::{self, EvalContext, RunRecord, Toolchain};
use crate::report::{Column, EvalHeader, SidecarInfo, ToolchainInfo};
use crate::sidecar::SidecarClient;
use crate::verify::{self, Checker, CompileStatus};

pub const C2C_INSTRUCTION: &str = "Apply the requested changes to the sketch code.";

#[derive(Debug, Error)]
pub enum EvalError {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error("{0}")]
    Config(String),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
}

#[derive(Debug, Clone)]
pub struct EvalOptions {
    pub dataset: PathBuf,
    pub task: QueryKind,
    /// `None` evaluates every column.
    pub columns: Option<Vec<Column>>,
    pub jobs: Option<usize>,
    /// Scratch space for compile artifacts and renders.
    pub workdir: PathBuf,
}

pub fn task_name(kind: QueryKind) -> &'static str {
    match kind {
        QueryKind::S2C => "s2c",
        QueryKind::C2C => "c2c",
    }
}

/// Loads the records of one kind. A directory resolves to its
/// `test_<task>.jsonl`. Image paths are relative to the file's directory.
pub fn load_dataset(path: &Path, kind: QueryKind) -> Result<(Vec<QueryRecord>, PathBuf), EvalError> {
    let file = if path.is_dir() { path.join(format!("test_{}.jsonl", task_name(kind))) } else { path.to_path_buf() };
    let base = file.parent().map(Path::to_path_buf).unwrap_or_default();
    let records: Vec<QueryRecord> = dataset::read_records(&file)?.into_iter().filter(|r| r.kind == kind).collect();
    if records.is_empty() {
        return Err(EvalError::Config(format!("{}: no {} records", file.display(), task_name(kind))));
    }
    Ok((records, base))
}

/// Turns a dataset record into a pipeline task.
pub fn task_for(record: &QueryRecord, base: &Path) -> Result<SketchTask, EvalError> {
    let bad = |m: String| EvalError::Config(format!("{}: {m}", record.id));
    match record.kind {
        QueryKind::S2C => {
            let rel = record.image_path.as_deref().ok_or_else(|| bad("S2C record without image_path".into()))?;
            let path = base.join(rel);
            let sketch = image::open(&path)
                .map_err(|e| bad(format!("{}: {e}", path.display())))?
                .to_rgb8();
            SketchTask::new(sketch, vec![record.query.trim().to_string()]).map_err(|e| bad(e.to_string()))
        }
        QueryKind::C2C => {
            let (code, edits) = parse_c2c_query(&record.query).ok_or_else(|| bad("C2C query without sketch code".into()))?;
            let code = DiagramCode::new(code);
            let sketch = imageops::sketchify(&verify::render_preview(&code));
            let task = SketchTask::new(sketch, vec![C2C_INSTRUCTION.to_string()]).map_err(|e| bad(e.to_string()))?;
            let task = if edits.is_empty() { task } else { task.with_edits(edits).map_err(|e| bad(e.to_string()))? };
            Ok(task.with_initial_code(code))
        }
    }
}

fn toolchain_info(tools: &Toolchain) -> ToolchainInfo {
    let checker = tools.compiler.effective_checker();
    ToolchainInfo {
        checker: match checker {
            Checker::Tex => "tex",
            Checker::Fast => "fast",
            Checker::None => "none",
        }
        .to_string(),
        tex_version: if checker == Checker::Tex { verify::tex_version(&tools.compiler) } else { None },
        rasterizer: tools.rasterizer.available().then(|| tools.rasterizer.command.clone()),
    }
}

/// Real render of `code`, normalized to the dataset frame. `None` when the
/// code does not compile or no rasterizer is present.
fn render(code: &DiagramCode, tools: &Toolchain) -> Option<RgbImage> {
    let c = verify::compile(code, &tools.compiler, &tools.workdir);
    let pdf = c.artifact.as_ref().filter(|_| c.passed())?;
    let img = verify::rasterize(pdf, tools.rasterizer.dpi, &tools.rasterizer).ok();
    let _ = fs::remove_file(pdf);
    let img = img?;
    let cropped = imageops::crop_whitespace(&img, imageops::INK_THRESHOLD, imageops::CROP_MARGIN);
    Some(imageops::normalize_size(&cropped))
}

fn save(img: &RgbImage, path: &Path) -> Option<PathBuf> {
    match img.save_with_format(path, image::ImageFormat::Png) {
        Ok(()) => Some(path.to_path_buf()),
        Err(e) => {
            log::warn!("could not save {}: {e}", path.display());
            None
        }
    }
}

fn reason(e: &ImageMetricError) -> String {
    e.to_string()
}

struct ImagePass<'a> {
    columns: &'a [Column],
    header_absent: BTreeMap<String, String>,
    set_scores: BTreeMap<String, ImageScore>,
}

impl ImagePass<'_> {
    fn wants(&self, m: ImageMetric) -> bool {
        self.columns.contains(&Column::Image(m))
    }

    fn mark_absent(&mut self, metrics: &[ImageMetric], why: &str) {
        for &m in metrics {
            if self.wants(m) {
                self.header_absent.insert(m.name().to_string(), why.to_string());
            }
        }
    }

    fn set_result(&mut self, m: ImageMetric, r: Result<ImageScore, ImageMetricError>) {
        match r {
            Ok(s) => {
                self.set_scores.insert(m.name().to_string(), s);
            }
            Err(e) => {
                log::warn!("{} not computed: {e}", m.name());
                self.header_absent.insert(m.name().to_string(), reason(&e));
            }
        }
    }
}

const SIDECAR_METRICS: [ImageMetric; 5] =
    [ImageMetric::Fid, ImageMetric::Cfid, ImageMetric::Kid, ImageMetric::Is, ImageMetric::Lpips];

/// Runs the pipeline on every record and attaches the evaluation context.
/// Returns the log header and the records in dataset order.
pub fn run_eval(cfg: &Config, opts: &EvalOptions) -> Result<(EvalHeader, Vec<RunRecord>), EvalError> {
    let (records, base) = load_dataset(&opts.dataset, opts.task)?;
    let columns = opts.columns.clone().unwrap_or_else(Column::all);
    fs::create_dir_all(&opts.workdir).map_err(|source| EvalError::Io { path: opts.workdir.clone(), source })?;
    let tools = cfg.toolchain(&opts.workdir);
    let agents = cfg.agents();
    let mut pipeline = cfg.pipeline.clone();
    if opts.jobs.is_some() {
        pipeline.jobs = opts.jobs;
    }

    let mut tasks = Vec::with_capacity(records.len());
    for r in &records {
        tasks.push((r.id.clone(), task_for(r, &base)?));
    }
    let mut runs = orchestrator::run_batch(&tasks, &pipeline, &agents, &tools)
        .map_err(|e| EvalError::Config(e.to_string()))?;

    let wants_pass = columns.contains(&Column::Text(crate::metrics::text::TextMetric::Pass1));
    for (run, rec) in runs.iter_mut().zip(&records) {
        let mut ctx = EvalContext {
            reference: rec.answer.clone(),
            category: Some(format!("{:?}", rec.category)),
            render: None,
            reference_render: None,
            compile: None,
            image_scores: BTreeMap::new(),
        };
        // the compiler ablation never compiles; Pass@1 still needs a verdict
        if wants_pass && run.outcome.is_accepted() && run.final_status() == CompileStatus::Skipped {
            if let Some(code) = run.outcome.code() {
                let c = verify::compile(code, &tools.compiler, &tools.workdir);
                if let Some(a) = &c.artifact {
                    let _ = fs::remove_file(a);
                }
                ctx.compile = Some(c.status);
            }
        }
        run.eval = Some(ctx);
    }

    let mut pass = ImagePass { columns: &columns, header_absent: BTreeMap::new(), set_scores: BTreeMap::new() };
    let any_image = columns.iter().any(|c| matches!(c, Column::Image(_)));
    let info = toolchain_info(&tools);
    let mut sidecar_info = None;
    if any_image {
        let real_renders = info.checker == "tex" && info.rasterizer.is_some();
        if !real_renders {
            log::warn!("image metrics need a TeX toolchain and a rasterizer; marking them absent");
            pass.mark_absent(&ImageMetric::ALL, "TeX compiler or rasterizer unavailable");
        } else {
            let render_dir = opts.workdir.join("renders");
            fs::create_dir_all(&render_dir).map_err(|source| EvalError::Io { path: render_dir.clone(), source })?;
            let mut pairs: Vec<(usize, RgbImage, RgbImage)> = Vec::new();
            for (i, (run, rec)) in runs.iter_mut().zip(&records).enumerate() {
                let Some(code) = run.outcome.code().cloned() else { continue };
                let gen = render(&code, &tools);
                let reference = render(&DiagramCode::new(rec.answer.as_str()), &tools);
                let ctx = run.eval.as_mut().expect("set above");
                let stem = dataset::sanitize_id(&rec.id);
                if let Some(g) = &gen {
                    ctx.render = save(g, &render_dir.join(format!("{stem}.png")));
                }
                if let Some(r) = &reference {
                    ctx.reference_render = save(r, &render_dir.join(format!("{stem}.ref.png")));
                }
                if let (Some(g), Some(r)) = (gen, reference) {
                    if pass.wants(ImageMetric::Ssim) {
                        if let Ok(s) = im::ssim(&g, &r) {
                            ctx.image_scores.insert(ImageMetric::Ssim.name().to_string(), s.value);
                        }
                    }
                    pairs.push((i, g, r));
                }
            }
            match SidecarClient::from_config(&cfg.sidecar) {
                None => pass.mark_absent(&SIDECAR_METRICS, "sidecar not configured"),
                Some(client) => match client.health() {
                    Err(e) => {
                        log::warn!("sidecar unreachable, image columns degrade: {e}");
                        pass.mark_absent(&SIDECAR_METRICS, &format!("sidecar unreachable: {e}"));
                    }
                    Ok(h) => {
                        sidecar_info = Some(SidecarInfo { url: client.base_url().to_string(), model_versions: h.versions });
                        sidecar_metrics(&client, cfg, &mut pass, &mut runs, &pairs);
                    }
                },
            }
        }
    }

    let header = EvalHeader {
        task: task_name(opts.task).to_string(),
        config_hash: cfg.hash(),
        metrics: columns.iter().map(|c| c.name().to_string()).collect(),
        toolchain: info,
        sidecar: sidecar_info,
        kid: cfg.metrics.kid,
        is_splits: cfg.metrics.is_splits,
        set_scores: pass.set_scores,
        absent: pass.header_absent,
    };
    Ok((header, runs))
}

fn sidecar_metrics(
    client: &SidecarClient,
    cfg: &Config,
    pass: &mut ImagePass<'_>,
    runs: &mut [RunRecord],
    pairs: &[(usize, RgbImage, RgbImage)],
) {
    if pairs.is_empty() {
        pass.mark_absent(&SIDECAR_METRICS, "no sample rendered on both sides");
        return;
    }
    let ids: Vec<String> = pairs.iter().map(|(i, _, _)| runs[*i].task_id.clone()).collect();
    let gen: Vec<RgbImage> = pairs.iter().map(|p| p.1.clone()).collect();
    let refs: Vec<RgbImage> = pairs.iter().map(|p| p.2.clone()).collect();

    if pass.wants(ImageMetric::Lpips) {
        for (i, g, r) in pairs {
            match client.lpips(g, r) {
                Ok(v) => {
                    if let Some(ctx) = runs[*i].eval.as_mut() {
                        ctx.image_scores.insert(ImageMetric::Lpips.name().to_string(), v);
                    }
                }
                Err(e) => log::warn!("LPIPS for {} failed: {e}", runs[*i].task_id),
            }
        }
    }

    let sets = |model: FeatureModel| -> Result<(FeatureSet, FeatureSet), ImageMetricError> {
        let real = client.features(model, &refs, ids.clone())?.set;
        let generated = client.features(model, &gen, ids.clone())?.set;
        Ok((real, generated))
    };
    if pass.wants(ImageMetric::Fid) || pass.wants(ImageMetric::Kid) {
        match sets(FeatureModel::InceptionPool3) {
            Ok((real, generated)) => {
                if pass.wants(ImageMetric::Fid) {
                    pass.set_result(ImageMetric::Fid, im::fid(&real, &generated));
                }
                if pass.wants(ImageMetric::Kid) {
                    pass.set_result(ImageMetric::Kid, im::kid(&real, &generated, &cfg.metrics.kid));
                }
            }
            Err(e) => pass.mark_absent(&[ImageMetric::Fid, ImageMetric::Kid], &reason(&e)),
        }
    }
    if pass.wants(ImageMetric::Cfid) {
        let r = sets(FeatureModel::ClipImage).and_then(|(real, generated)| im::fid(&real, &generated));
        pass.set_result(ImageMetric::Cfid, r);
    }
    if pass.wants(ImageMetric::Is) {
        let r = client
            .logits(&gen)
            .map_err(ImageMetricError::from)
            .and_then(|(logits, _)| im::inception_score(&logits, cfg.metrics.is_splits.min(logits.nrows()).max(1)));
        pass.set_result(ImageMetric::Is, r);
    }
}
