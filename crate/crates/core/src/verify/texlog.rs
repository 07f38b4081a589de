//! TeX log scraping.
//!
//! Only the two stable patterns are interpreted: `! <message>` error lines and
//! the `l.<num>` context line that follows them.

use std::sync::LazyLock;

use regex::Regex;

use super::CompileDiagnostic;

static LINE_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^l\.(\d+)").unwrap());

/// How far below a `!` line the matching `l.<num>` may appear.
const CONTEXT_WINDOW: usize = 12;

/// Extracts diagnostics from a TeX log. `line_offset` is subtracted from every
/// reported line so numbers refer to the user's code rather than the wrapper;
/// lines that fall inside the wrapper are reported as 0.
pub fn parse_log(log: &str, line_offset: usize) -> Vec<CompileDiagnostic> {
    let lines: Vec<&str> = log.lines().collect();
    let mut out = Vec::new();
    for (i, line) in lines.iter().enumerate() {
        let Some(msg) = line.strip_prefix("! ") else {
            continue;
        };
        let line_no = lines
            .iter()
            .skip(i + 1)
            .take(CONTEXT_WINDOW)
            .take_while(|l| !l.starts_with("! "))
            .find_map(|l| LINE_REF.captures(l))
            .and_then(|c| c[1].parse::<usize>().ok())
            .map(|n| n.saturating_sub(line_offset))
            .unwrap_or(0);
        out.push(CompileDiagnostic {
            line: line_no,
            message: msg.trim().to_string(),
        });
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const LOG: &str = r"This is pdfTeX, Version 3.141592653-2.6-1.40.25 (TeX Live 2023) (preloaded format=pdflatex)
(./diagram.tex
LaTeX2e <2022-11-01> patch level 1
! Undefined control sequence.
l.9 \undefinedmacro

?
! Emergency stop.
l.9 \undefinedmacro

No pages of output.
";

    #[test]
    fn pairs_messages_with_lines() {
        let d = parse_log(LOG, 6);
        assert_eq!(d.len(), 2);
        assert_eq!(d[0].message, "Undefined control sequence.");
        assert_eq!(d[0].line, 3);
        assert_eq!(d[1].message, "Emergency stop.");
    }

    #[test]
    fn error_without_line_reference() {
        let d = parse_log("! LaTeX Error: File `foo.sty' not found.\n\nType X to quit\n", 0);
        assert_eq!(d.len(), 1);
        assert_eq!(d[0].line, 0);
    }

    #[test]
    fn line_ref_does_not_leak_into_next_error() {
        let d = parse_log("! First.\n! Second.\nl.4 x\n", 0);
        assert_eq!(d[0].line, 0);
        assert_eq!(d[1].line, 4);
    }

    #[test]
    fn clean_log_has_no_diagnostics() {
        assert!(parse_log("Output written on diagram.pdf (1 page).\n", 0).is_empty());
    }
}
