use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::{error, info, warn};

use tikzbench::agent::SketchTask;
use tikzbench::config::Config;
use tikzbench::dataset::{self, BuildOptions, QueryKind};
use tikzbench::eval::{self, EvalOptions};
use tikzbench::orchestrator::{self, Outcome, RunLog};
use tikzbench::report::{self, EvalHeader};

const EXIT_OK: u8 = 0;
const EXIT_USAGE: u8 = 1;
const EXIT_FAILED: u8 = 2;

#[derive(Parser)]
#[command(name = "tikzbench", version, about = "Sketch-to-TikZ pipeline and benchmark harness")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Turn one sketch into TikZ code.
    Run(RunArgs),
    /// Build a benchmark corpus.
    #[command(subcommand)]
    Dataset(DatasetCommand),
    /// Run the pipeline over a dataset split and score it.
    Eval(EvalArgs),
    /// Rebuild a report from an evaluation run log.
    Report(ReportArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    sketch: PathBuf,
    #[arg(long, num_args = 1.., required = true)]
    instructions: Vec<String>,
    #[arg(long, num_args = 1..)]
    edits: Vec<String>,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum DatasetCommand {
    Build(BuildArgs),
}

#[derive(Args)]
struct BuildArgs {
    #[arg(long)]
    src: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    split_seed: Option<u64>,
    /// Toolchain and sketch-code backend settings.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Task {
    S2c,
    C2c,
}

#[derive(Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_enum)]
    task: Task,
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated metric names, e.g. `chrf,bleu,ssim`.
    #[arg(long)]
    metrics: Option<String>,
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    from: PathBuf,
    #[arg(long)]
    out: PathBuf,
}

fn usage(msg: impl std::fmt::Display) -> u8 {
    error!("{msg}");
    eprintln!("error: {msg}");
    EXIT_USAGE
}

fn load_config(path: &Path) -> Result<Config, u8> {
    Config::load(path).map_err(|e| usage(format!("config {}: {e}", path.display())))
}

fn cmd_run(a: RunArgs) -> u8 {
    let cfg = match load_config(&a.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let sketch = match image::open(&a.sketch) {
        Ok(i) => i.to_rgb8(),
        Err(e) => return usage(format!("sketch {}: {e}", a.sketch.display())),
    };
    let task = SketchTask::new(sketch, a.instructions).and_then(|t| {
        if a.edits.is_empty() {
            Ok(t)
        } else {
            t.with_edits(a.edits)
        }
    });
    let task = match task {
        Ok(t) => t,
        Err(e) => return usage(e),
    };
    if let Err(e) = std::fs::create_dir_all(&a.out) {
        return usage(format!("{}: {e}", a.out.display()));
    }
    let tools = cfg.toolchain(orchestrator::default_workdir(&a.out));
    if let Err(e) = std::fs::create_dir_all(&tools.workdir) {
        return usage(format!("{}: {e}", tools.workdir.display()));
    }
    let id = a.sketch.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "sketch".into());
    let mut record = match orchestrator::run_pipeline(&id, &task, &cfg.pipeline, &cfg.agents(), &tools) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };

    if let Some(code) = record.outcome.code() {
        let path = a.out.join("final.tex");
        if let Err(e) = std::fs::write(&path, format!("{}\n", code.source().trim_end())) {
            return usage(format!("{}: {e}", path.display()));
        }
    }
    if let Outcome::Accepted { code, diagram_path } = &mut record.outcome {
        if let Some(pdf) = diagram_path.take() {
            let kept = a.out.join("diagram.pdf");
            if std::fs::copy(&pdf, &kept).is_ok() {
                let last = record.attempts.last().map(|at| at.compile.clone());
                if let Some(c) = last {
                    let (img, real) = tools.diagram_image(&c, code);
                    if real {
                        let _ = img.save_with_format(a.out.join("diagram.png"), image::ImageFormat::Png);
                    }
                }
                *diagram_path = Some(kept);
            }
        }
    }
    let log_path = a.out.join("run.jsonl");
    if let Err(e) = orchestrator::persist_run(&record, &log_path) {
        return usage(format!("{}: {e}", log_path.display()));
    }
    match &record.outcome {
        Outcome::Accepted { .. } => {
            info!("accepted after {} attempt(s)", record.attempts.len());
            println!("accepted after {} attempt(s): {}", record.attempts.len(), a.out.join("final.tex").display());
            EXIT_OK
        }
        Outcome::Failed { reason, .. } => {
            eprintln!("failed: {reason}");
            EXIT_FAILED
        }
    }
}

fn cmd_dataset(cmd: DatasetCommand) -> u8 {
    let DatasetCommand::Build(a) = cmd;
    let cfg = match &a.config {
        Some(p) => match load_config(p) {
            Ok(c) => c,
            Err(code) => return code,
        },
        None => Config::default(),
    };
    let mut opts = BuildOptions::new(cfg.toolchain(std::env::temp_dir()));
    opts.split_seed = a.split_seed.unwrap_or(cfg.dataset.split_seed);
    opts.rules = cfg.dataset.inspect;
    opts.sketch_agent = cfg.dataset.sketch_backend.as_ref().map(|r| r.build());
    opts.jobs = cfg.pipeline.jobs;
    match dataset::build_dataset(&a.src, &a.out, &opts) {
        Ok(s) => {
            for (prov, why) in &s.rejected {
                warn!("excluded {prov}: {why}");
            }
            println!(
                "{} sources, {} records emitted, {} excluded -> {}",
                s.sources,
                s.emitted,
                s.rejected.len(),
                a.out.display()
            );
            EXIT_OK
        }
        Err(e) => usage(e),
    }
}

/// Run log written next to a report: `report.json` → `report.runs.jsonl`.
fn log_path_for(out: &Path) -> PathBuf {
    out.with_extension("runs.jsonl")
}

fn cmd_eval(a: EvalArgs) -> u8 {
    let cfg = match load_config(&a.config) {
        Ok(c) => c,
        Err(code) => return code,
    };
    let columns = match a.metrics.as_deref().map(report::parse_columns).transpose() {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    if a.jobs == Some(0) {
        return usage("--jobs must be at least 1");
    }
    let stem = a.out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_else(|| "report".into());
    let dir = a.out.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let opts = EvalOptions {
        dataset: a.dataset,
        task: match a.task {
            Task::S2c => QueryKind::S2C,
            Task::C2c => QueryKind::C2C,
        },
        columns,
        jobs: a.jobs,
        workdir: dir.join(format!("{stem}-work")),
    };
    let (header, records) = match eval::run_eval(&cfg, &opts) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };
    for (k, why) in &header.absent {
        warn!("{k} absent: {why}");
    }
    let log_path = log_path_for(&a.out);
    let written = orchestrator::write_header(&log_path, &header).and_then(|_| {
        let log = RunLog::open(&log_path)?;
        records.iter().try_for_each(|r| log.append(r))
    });
    if let Err(e) = written {
        return usage(format!("{}: {e}", log_path.display()));
    }
    let rep = report::build_report(&header, &records);
    if let Err(e) = report::write_report(&rep, &a.out) {
        return usage(format!("{}: {e}", a.out.display()));
    }
    print!("{}", report::render_table(&rep));
    EXIT_OK
}

fn cmd_report(a: ReportArgs) -> u8 {
    let (header, records) = match orchestrator::read_run_log(&a.from) {
        Ok(r) => r,
        Err(e) => return usage(format!("{}: {e}", a.from.display())),
    };
    let Some(header) = header else {
        return usage(format!("{}: log has no evaluation header", a.from.display()));
    };
    let header: EvalHeader = match serde_json::from_value(header) {
        Ok(h) => h,
        Err(e) => return usage(format!("{}: line 1: {e}", a.from.display())),
    };
    let rep = report::build_report(&header, &records);
    if let Err(e) = report::write_report(&rep, &a.out) {
        return usage(format!("{}: {e}", a.out.display()));
    }
    print!("{}", report::render_table(&rep));
    EXIT_OK
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let code = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Dataset(c) => cmd_dataset(c),
        Command::Eval(a) => cmd_eval(a),
        Command::Report(a) => cmd_report(a),
    };
    ExitCode::from(code)
}
