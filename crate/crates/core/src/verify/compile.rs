use std::fs;
use std::io;
use std::path::Path;
use std::process::{Command, Stdio};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use super::texlog::parse_log;
use super::{check_fast, Checker, CompileDiagnostic, CompileResult, CompileStatus};
use crate::code::DiagramCode;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CompilerMode {
    /// TeX when the compiler is on PATH, otherwise the fast validator.
    #[default]
    Auto,
    Tex,
    Fast,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CompilerConfig {
    pub mode: CompilerMode,
    pub command: String,
    /// Arguments placed before the input file name.
    pub args: Vec<String>,
    pub timeout_secs: f64,
    /// Inserted between `\documentclass` and `\begin{document}` when the code
    /// is not already a full document.
    pub preamble: String,
}

impl Default for CompilerConfig {
    fn default() -> Self {
        CompilerConfig {
            mode: CompilerMode::Auto,
            command: "pdflatex".into(),
            args: vec![
                "-interaction=nonstopmode".into(),
                "-halt-on-error".into(),
                "-no-shell-escape".into(),
            ],
            timeout_secs: 30.0,
            preamble: "\\usepackage{tikz}\n\\usetikzlibrary{arrows.meta,positioning,shapes,calc}\n".into(),
        }
    }
}

impl CompilerConfig {
    /// The checker `compile` will use under this configuration.
    pub fn effective_checker(&self) -> Checker {
        match self.mode {
            CompilerMode::Fast => Checker::Fast,
            CompilerMode::Tex => Checker::Tex,
            CompilerMode::Auto => {
                if find_on_path(&self.command) {
                    Checker::Tex
                } else {
                    Checker::Fast
                }
            }
        }
    }
}

pub(crate) fn find_on_path(cmd: &str) -> bool {
    let p = Path::new(cmd);
    if p.components().count() > 1 {
        return p.is_file();
    }
    std::env::var_os("PATH")
        .map(|paths| std::env::split_paths(&paths).any(|d| d.join(cmd).is_file()))
        .unwrap_or(false)
}

/// Wraps bare picture code into a standalone document. Returns the document
/// and how many lines precede the user's code.
pub fn wrap_document(code: &str, preamble: &str) -> (String, usize) {
    if code.contains("\\documentclass") {
        return (code.to_string(), 0);
    }
    let mut head = String::from("\\documentclass[border=8pt]{standalone}\n");
    head.push_str(preamble);
    if !head.ends_with('\n') {
        head.push('\n');
    }
    head.push_str("\\begin{document}\n");
    let needs_picture = !code.contains("\\begin{tikzpicture}");
    if needs_picture {
        head.push_str("\\begin{tikzpicture}\n");
    }
    let offset = head.matches('\n').count();
    let mut doc = head;
    doc.push_str(code);
    if !doc.ends_with('\n') {
        doc.push('\n');
    }
    if needs_picture {
        doc.push_str("\\end{tikzpicture}\n");
    }
    doc.push_str("\\end{document}\n");
    (doc, offset)
}

/// First line of `<compiler> --version`, if the compiler runs.
pub fn tex_version(cfg: &CompilerConfig) -> Option<String> {
    let out = Command::new(&cfg.command)
        .arg("--version")
        .stdin(Stdio::null())
        .stderr(Stdio::null())
        .output()
        .ok()?;
    String::from_utf8_lossy(&out.stdout)
        .lines()
        .next()
        .map(|l| l.trim().to_string())
}

/// Compiles `code` in a fresh temporary directory under `workdir`.
///
/// Never fails: every outcome is a [`CompileResult`]. On success the page is
/// moved out of the temporary directory into `workdir` before it is removed.
pub fn compile(code: &DiagramCode, cfg: &CompilerConfig, workdir: &Path) -> CompileResult {
    match cfg.effective_checker() {
        Checker::Fast | Checker::None => return check_fast(code),
        Checker::Tex => {}
    }
    let started = Instant::now();
    let finish = |status, diagnostics, artifact| CompileResult {
        status,
        checker: Checker::Tex,
        diagnostics,
        artifact,
        duration: started.elapsed().as_secs_f64(),
    };
    if !find_on_path(&cfg.command) {
        return finish(CompileStatus::ToolMissing, Vec::new(), None);
    }
    match run_tex(code, cfg, workdir) {
        Ok(TexOutcome::Done { pdf, diagnostics }) => match pdf {
            Some(p) => finish(CompileStatus::Success, Vec::new(), Some(p)),
            None => finish(CompileStatus::CompileError, diagnostics, None),
        },
        Ok(TexOutcome::TimedOut) => finish(CompileStatus::Timeout, Vec::new(), None),
        Err(e) if e.kind() == io::ErrorKind::NotFound => finish(CompileStatus::ToolMissing, Vec::new(), None),
        Err(e) => finish(
            CompileStatus::CompileError,
            vec![CompileDiagnostic {
                line: 0,
                message: format!("failed to run {}: {e}", cfg.command),
            }],
            None,
        ),
    }
}

enum TexOutcome {
    Done {
        pdf: Option<std::path::PathBuf>,
        diagnostics: Vec<CompileDiagnostic>,
    },
    TimedOut,
}

fn run_tex(code: &DiagramCode, cfg: &CompilerConfig, workdir: &Path) -> io::Result<TexOutcome> {
    fs::create_dir_all(workdir)?;
    let tmp = tempfile::Builder::new().prefix("compile-").tempdir_in(workdir)?;
    let (doc, offset) = wrap_document(code.source(), &cfg.preamble);
    fs::write(tmp.path().join("diagram.tex"), doc)?;

    let mut child = Command::new(&cfg.command)
        .args(&cfg.args)
        .arg("diagram.tex")
        .current_dir(tmp.path())
        .stdin(Stdio::null())
        .stdout(Stdio::null())
        .stderr(Stdio::null())
        .spawn()?;
    let timeout = Duration::from_secs_f64(cfg.timeout_secs.max(0.001));
    let status = match child.wait_timeout(timeout)? {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Ok(TexOutcome::TimedOut);
        }
    };

    let pdf = tmp.path().join("diagram.pdf");
    if status.success() && pdf.is_file() {
        let kept = tempfile::Builder::new()
            .prefix("artifact-")
            .suffix(".pdf")
            .tempfile_in(workdir)?;
        let (_, dest) = kept.keep().map_err(|e| e.error)?;
        fs::copy(&pdf, &dest)?;
        return Ok(TexOutcome::Done {
            pdf: Some(dest),
            diagnostics: Vec::new(),
        });
    }

    let log = fs::read(tmp.path().join("diagram.log"))
        .map(|b| String::from_utf8_lossy(&b).into_owned())
        .unwrap_or_default();
    let mut diagnostics = parse_log(&log, offset);
    if diagnostics.is_empty() {
        diagnostics.push(CompileDiagnostic {
            line: 0,
            message: match status.code() {
                Some(c) => format!("{} exited with status {c} and produced no page", cfg.command),
                None => format!("{} was terminated by a signal", cfg.command),
            },
        });
    }
    Ok(TexOutcome::Done { pdf: None, diagnostics })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wrap_bare_statements() {
        let (doc, offset) = wrap_document("\\node (a) {A};", "\\usepackage{tikz}\n");
        assert!(doc.starts_with("\\documentclass[border=8pt]{standalone}\n"));
        assert!(doc.contains("\\begin{tikzpicture}\n\\node (a) {A};\n\\end{tikzpicture}"));
        assert_eq!(doc.lines().nth(offset), Some("\\node (a) {A};"));
    }

    #[test]
    fn full_documents_are_untouched() {
        let src = "\\documentclass{article}\\begin{document}x\\end{document}";
        assert_eq!(wrap_document(src, ""), (src.to_string(), 0));
    }

    #[test]
    fn missing_tool() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = CompilerConfig {
            mode: CompilerMode::Tex,
            command: "definitely-not-a-tex-binary".into(),
            ..Default::default()
        };
        let r = compile(&DiagramCode::new("\\node {};"), &cfg, dir.path());
        assert_eq!(r.status, CompileStatus::ToolMissing);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 0);
    }

    #[test]
    fn auto_mode_falls_back_to_fast() {
        let cfg = CompilerConfig {
            command: "definitely-not-a-tex-binary".into(),
            ..Default::default()
        };
        assert_eq!(cfg.effective_checker(), Checker::Fast);
        let dir = tempfile::tempdir().unwrap();
        let r = compile(&DiagramCode::new("\\node {};"), &cfg, dir.path());
        assert_eq!(r.checker, Checker::Fast);
        assert_eq!(r.status, CompileStatus::Success);
    }
}
