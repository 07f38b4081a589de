//! The generate / edit / verify / judge loop with bounded retries.
//!
//! Routing rules:
//! * a compile failure goes back to the phase that produced the code;
//! * a judge rejection goes to the blamed agent, coerced onto the phases the
//!   run actually has;
//! * a backend error repeats the phase that failed.
//!
//! Every pass consumes one attempt; a run makes at most `1 + retry_budget`.

mod runlog;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use image::RgbImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent::{self, AgentError, Blame, ChatBackend, Feedback, JudgeVerdict, SketchTask};
use crate::code::DiagramCode;
use crate::verify::{self, CompileResult, CompileStatus, CompilerConfig, RasterizerConfig};

pub use runlog::{persist_run, read_run_log, write_header, RunLog, RunLogError};

pub const RUN_RECORD_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub retry_budget: u32,
    pub judge_enabled: bool,
    pub compiler_enabled: bool,
    /// Worker threads for batch runs; unset uses the CPU count.
    pub jobs: Option<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            retry_budget: 3,
            judge_enabled: true,
            compiler_enabled: true,
            jobs: None,
        }
    }
}

/// A backend bound to one role, with its sampling temperature.
#[derive(Clone)]
pub struct RoleAgent {
    pub backend: Arc<dyn ChatBackend>,
    pub temperature: f64,
}

impl RoleAgent {
    pub fn new(backend: Arc<dyn ChatBackend>) -> Self {
        RoleAgent {
            backend,
            temperature: 0.0,
        }
    }
}

impl std::fmt::Debug for RoleAgent {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("RoleAgent")
            .field("backend", &self.backend.name())
            .field("temperature", &self.temperature)
            .finish()
    }
}

#[derive(Debug, Clone, Default)]
pub struct Agents {
    pub generate: Option<RoleAgent>,
    pub edit: Option<RoleAgent>,
    pub judge: Option<RoleAgent>,
}

/// External tools and scratch space used for verification.
#[derive(Debug, Clone)]
pub struct Toolchain {
    pub compiler: CompilerConfig,
    pub rasterizer: RasterizerConfig,
    pub workdir: PathBuf,
}

impl Toolchain {
    pub fn new(workdir: impl Into<PathBuf>) -> Self {
        Toolchain {
            compiler: CompilerConfig::default(),
            rasterizer: RasterizerConfig::default(),
            workdir: workdir.into(),
        }
    }

    /// Raster of a compiled page when the rasterizer works, else the
    /// schematic preview of the code. The flag is true for a real render.
    pub fn diagram_image(&self, compile: &CompileResult, code: &DiagramCode) -> (RgbImage, bool) {
        if let Some(pdf) = &compile.artifact {
            if self.rasterizer.available() {
                match verify::rasterize(pdf, self.rasterizer.dpi, &self.rasterizer) {
                    Ok(img) => return (img, true),
                    Err(e) => log::warn!("rasterizing {} failed, using preview: {e}", pdf.display()),
                }
            }
        }
        (verify::render_preview(code), false)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Phase {
    Generate,
    Edit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ErrorLabel {
    MisalignedStructure,
    MisidentifiedElement,
    MisconnectedRelationship,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    /// 1-based.
    pub index: u32,
    pub phase: Phase,
    /// Sketch-to-code output when an edit followed it in the same pass.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediate: Option<DiagramCode>,
    pub code: DiagramCode,
    pub compile: CompileResult,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verdict: Option<JudgeVerdict>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Phase the next attempt starts from; unset when this attempt ended the run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub route: Option<Phase>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum Outcome {
    Accepted {
        code: DiagramCode,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        diagram_path: Option<PathBuf>,
    },
    Failed {
        reason: String,
        /// Latest attempt that compiled, if any.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        best_attempt: Option<u32>,
        /// Code kept for similarity scoring.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        code: Option<DiagramCode>,
    },
}

impl Outcome {
    pub fn is_accepted(&self) -> bool {
        matches!(self, Outcome::Accepted { .. })
    }

    /// The code a run contributes to similarity metrics.
    pub fn code(&self) -> Option<&DiagramCode> {
        match self {
            Outcome::Accepted { code, .. } => Some(code),
            Outcome::Failed { code, .. } => code.as_ref(),
        }
    }
}

/// Evaluation context carried in run logs so reports can be rebuilt offline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalContext {
    pub reference: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub category: Option<String>,
    /// Rasterized render of the final code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub render: Option<PathBuf>,
    /// Rasterized render of the reference code.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reference_render: Option<PathBuf>,
    /// Post-hoc compile of the final code when the run itself did not compile.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub compile: Option<CompileStatus>,
    /// Per-sample image scores keyed by metric name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub image_scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub v: u32,
    pub task_id: String,
    pub attempts: Vec<Attempt>,
    #[serde(rename = "final")]
    pub outcome: Outcome,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_label: Option<ErrorLabel>,
    /// Seconds per phase: generate, edit, compile, judge, total.
    #[serde(default)]
    pub timings: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eval: Option<EvalContext>,
}

impl RunRecord {
    /// Attaches a manual error annotation.
    pub fn annotate(&mut self, label: ErrorLabel) {
        self.error_label = Some(label);
    }

    /// Compile status of the final code, as counted by Pass@1. Failed runs
    /// count as failures whatever their last compile said.
    pub fn final_status(&self) -> CompileStatus {
        match &self.outcome {
            Outcome::Failed { .. } => CompileStatus::CompileError,
            Outcome::Accepted { .. } => self
                .attempts
                .last()
                .map(|a| a.compile.status)
                .unwrap_or(CompileStatus::Skipped),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OrchestratorError {
    #[error("configuration error: {0}")]
    Config(String),
}

/// Maps a rejection rationale to a failure category by keyword.
pub fn classify_failure(rationale: &str) -> Option<ErrorLabel> {
    let r = rationale.to_lowercase();
    let has = |words: &[&str]| words.iter().any(|w| r.contains(w));
    if has(&["connect", "edge", "arrow", "link", "relation"]) {
        Some(ErrorLabel::MisconnectedRelationship)
    } else if has(&["label", "text", "missing", "element", "shape", "node"]) {
        Some(ErrorLabel::MisidentifiedElement)
    } else if has(&["layout", "position", "align", "structure", "order", "placement"]) {
        Some(ErrorLabel::MisalignedStructure)
    } else {
        None
    }
}

fn require_vision(role: &str, agent: &Option<RoleAgent>) -> Result<(), OrchestratorError> {
    match agent {
        None => Err(OrchestratorError::Config(format!("no backend configured for the {role} agent"))),
        Some(a) if !a.backend.capabilities().vision => Err(OrchestratorError::Config(format!(
            "{role} backend `{}` lacks vision",
            a.backend.name()
        ))),
        Some(_) => Ok(()),
    }
}

fn describe_compile(r: &CompileResult) -> Vec<String> {
    if r.status == CompileStatus::Timeout {
        return vec!["compilation timed out".into()];
    }
    r.diagnostics
        .iter()
        .map(|d| {
            if d.line > 0 {
                format!("line {}: {}", d.line, d.message)
            } else {
                d.message.clone()
            }
        })
        .collect()
}

/// Runs one task through the loop. Backend and tool failures are recorded in
/// the returned record; only a missing backend is reported as an error.
pub fn run_pipeline(
    task_id: &str,
    task: &SketchTask,
    cfg: &PipelineConfig,
    agents: &Agents,
    tools: &Toolchain,
) -> Result<RunRecord, OrchestratorError> {
    task.validate().map_err(|e| OrchestratorError::Config(e.to_string()))?;
    let from_code = task.initial_code.is_some();
    let edits: &[String] = task.edit_instructions.as_deref().unwrap_or(&[]);
    let has_edit = !edits.is_empty();
    if !from_code {
        require_vision("sketch-to-code", &agents.generate)?;
    }
    if has_edit && agents.edit.is_none() {
        return Err(OrchestratorError::Config("no backend configured for the editing agent".into()));
    }
    if cfg.judge_enabled {
        require_vision("judge", &agents.judge)?;
    }

    let started = Instant::now();
    let mut timings: BTreeMap<String, f64> = ["generate", "edit", "compile", "judge"]
        .iter()
        .map(|k| (k.to_string(), 0.0))
        .collect();
    let mut add_time = |k: &str, t: Instant| *timings.get_mut(k).unwrap() += t.elapsed().as_secs_f64();

    let max_attempts = 1 + cfg.retry_budget;
    let mut attempts: Vec<Attempt> = Vec::new();
    let mut phase = if from_code { Phase::Edit } else { Phase::Generate };
    let mut base: Option<DiagramCode> = task.initial_code.clone();
    let mut feedback: Option<Feedback> = None;
    let mut outcome: Option<Outcome> = None;
    let mut last_problem = String::new();

    for k in 1..=max_attempts {
        let mut attempt = Attempt {
            index: k,
            phase,
            intermediate: None,
            code: DiagramCode::default(),
            compile: CompileResult::skipped(),
            verdict: None,
            error: None,
            route: None,
        };
        let retry = |problems: Vec<String>, previous: Option<&DiagramCode>| Feedback {
            attempt: k + 1,
            previous_code: previous.map(|c| c.source().to_string()),
            problems,
        };

        // produce code
        let mut producer = phase;
        let produced: Result<DiagramCode, (Phase, AgentError)> = (|| {
            if phase == Phase::Generate {
                let g = agents.generate.as_ref().expect("checked above");
                let t = Instant::now();
                let ck = agent::generate_code(task, g.backend.as_ref(), feedback.as_ref(), g.temperature);
                add_time("generate", t);
                let ck = ck.map_err(|e| (Phase::Generate, e))?;
                if !has_edit {
                    return Ok(ck);
                }
                base = Some(ck.clone());
                attempt.intermediate = Some(ck);
                producer = Phase::Edit;
            }
            let b = base.clone().expect("an edit pass always has a base");
            if !has_edit {
                return Ok(b);
            }
            let e = agents.edit.as_ref().expect("checked above");
            // a fresh generation gets a fresh edit; feedback targets the phase it routed to
            let fb = if phase == Phase::Edit { feedback.as_ref() } else { None };
            let t = Instant::now();
            let ce = agent::edit_code(&b, edits, e.backend.as_ref(), fb, e.temperature);
            add_time("edit", t);
            ce.map_err(|e| (Phase::Edit, e))
        })();

        let code = match produced {
            Ok(c) => c,
            Err((failed, err)) => {
                let err = match err {
                    AgentError::Backend(b) => AgentError::Backend(b.at_attempt(k)),
                    e => e,
                };
                last_problem = err.to_string();
                attempt.error = Some(last_problem.clone());
                attempt.route = Some(failed);
                feedback = Some(retry(vec![last_problem.clone()], None));
                phase = failed;
                attempts.push(attempt);
                continue;
            }
        };
        attempt.code = code.clone();

        // compile
        if cfg.compiler_enabled {
            let t = Instant::now();
            attempt.compile = verify::compile(&code, &tools.compiler, &tools.workdir);
            add_time("compile", t);
            match attempt.compile.status {
                CompileStatus::ToolMissing => {
                    let reason = format!("compiler `{}` not found", tools.compiler.command);
                    attempts.push(attempt);
                    outcome = Some(failed_outcome(reason, &attempts));
                    break;
                }
                s if s.is_failure() => {
                    let problems = describe_compile(&attempt.compile);
                    last_problem = format!("compile failed: {}", problems.first().cloned().unwrap_or_default());
                    attempt.route = Some(producer);
                    feedback = Some(retry(problems, Some(&code)));
                    phase = producer;
                    attempts.push(attempt);
                    continue;
                }
                _ => {}
            }
        }

        // judge
        if cfg.judge_enabled {
            let j = agents.judge.as_ref().expect("checked above");
            let t = Instant::now();
            let (img, _) = tools.diagram_image(&attempt.compile, &code);
            let verdict = agent::judge(&img, task, j.backend.as_ref(), j.temperature);
            add_time("judge", t);
            match verdict {
                Ok(v) if v.aligned => {
                    attempt.verdict = Some(v);
                }
                Ok(v) => {
                    let route = match v.blame {
                        Blame::EditingCode if has_edit => Phase::Edit,
                        _ if from_code => Phase::Edit,
                        _ => Phase::Generate,
                    };
                    last_problem = format!("judge rejected: {}", v.rationale);
                    attempt.route = Some(route);
                    feedback = Some(retry(vec![v.rationale.clone()], Some(&code)));
                    attempt.verdict = Some(v);
                    phase = route;
                    attempts.push(attempt);
                    continue;
                }
                Err(e) => {
                    last_problem = format!("judge unavailable: {e}");
                    attempt.error = Some(last_problem.clone());
                    attempt.route = Some(producer);
                    feedback = Some(retry(vec![last_problem.clone()], Some(&code)));
                    phase = producer;
                    attempts.push(attempt);
                    continue;
                }
            }
        }

        let diagram_path = attempt.compile.artifact.clone();
        attempts.push(attempt);
        outcome = Some(Outcome::Accepted { code, diagram_path });
        break;
    }

    let outcome = outcome.unwrap_or_else(|| {
        failed_outcome(
            format!("retry budget exhausted after {} attempts; last problem: {last_problem}", attempts.len()),
            &attempts,
        )
    });
    let error_label = match &outcome {
        Outcome::Failed { .. } => attempts
            .iter()
            .rev()
            .find_map(|a| a.verdict.as_ref().filter(|v| !v.aligned))
            .and_then(|v| classify_failure(&v.rationale)),
        Outcome::Accepted { .. } => None,
    };
    timings.insert("total".into(), started.elapsed().as_secs_f64());
    Ok(RunRecord {
        v: RUN_RECORD_VERSION,
        task_id: task_id.to_string(),
        attempts,
        outcome,
        error_label,
        timings,
        eval: None,
    })
}

fn failed_outcome(reason: String, attempts: &[Attempt]) -> Outcome {
    let best = attempts.iter().rev().find(|a| a.compile.passed());
    let code = best
        .map(|a| a.code.clone())
        .or_else(|| attempts.iter().rev().find(|a| !a.code.is_blank()).map(|a| a.code.clone()));
    Outcome::Failed {
        reason,
        best_attempt: best.map(|a| a.index),
        code,
    }
}

/// Runs many tasks on a bounded pool. Results keep the input order.
pub fn run_batch(
    tasks: &[(String, SketchTask)],
    cfg: &PipelineConfig,
    agents: &Agents,
    tools: &Toolchain,
) -> Result<Vec<RunRecord>, OrchestratorError> {
    let jobs = cfg.jobs.unwrap_or_else(rayon::current_num_threads).max(1);
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| OrchestratorError::Config(format!("worker pool: {e}")))?;
    pool.install(|| {
        tasks
            .par_iter()
            .map(|(id, t)| run_pipeline(id, t, cfg, agents, tools))
            .collect()
    })
}

/// Scratch directory helper for callers that do not care where artifacts go.
pub fn default_workdir(out: &Path) -> PathBuf {
    out.join("work")
}
