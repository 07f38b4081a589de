//! Append-only JSONL run log.
//!
//! One record per line. An optional first line of the form
//! `{"v":1,"header":{...}}` carries run metadata.

use std::fs::{File, OpenOptions};
use std::io::{self, BufRead, BufReader, Write};
use std::path::Path;
use std::sync::Mutex;

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use super::{RunRecord, RUN_RECORD_VERSION};

/// Serializes appends from threads that call [`persist_run`] directly.
static APPEND_LOCK: Mutex<()> = Mutex::new(());

#[derive(Debug, Error)]
pub enum RunLogError {
    #[error("run log is empty")]
    Empty,
    #[error("line {line}: {message}")]
    Corrupt { line: usize, message: String },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn line_of(record: &RunRecord) -> io::Result<Vec<u8>> {
    let mut buf = serde_json::to_vec(record).map_err(io::Error::other)?;
    buf.push(b'\n');
    Ok(buf)
}

/// Appends one record as a single line. The whole line goes out in one write
/// under a process-wide lock, so concurrent callers never interleave.
pub fn persist_run(record: &RunRecord, path: &Path) -> io::Result<()> {
    let buf = line_of(record)?;
    let _g = APPEND_LOCK.lock().unwrap_or_else(|e| e.into_inner());
    let mut f = OpenOptions::new().create(true).append(true).open(path)?;
    f.write_all(&buf)?;
    f.flush()
}

/// Truncates `path` and writes the header line.
pub fn write_header<T: Serialize>(path: &Path, header: &T) -> io::Result<()> {
    let mut buf = serde_json::to_vec(&serde_json::json!({ "v": RUN_RECORD_VERSION, "header": header }))
        .map_err(io::Error::other)?;
    buf.push(b'\n');
    std::fs::write(path, buf)
}

/// A log file held open for a batch of appends.
#[derive(Debug)]
pub struct RunLog {
    file: Mutex<File>,
}

impl RunLog {
    pub fn open(path: &Path) -> io::Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(RunLog { file: Mutex::new(file) })
    }

    pub fn append(&self, record: &RunRecord) -> io::Result<()> {
        let buf = line_of(record)?;
        let mut f = self.file.lock().unwrap_or_else(|e| e.into_inner());
        f.write_all(&buf)?;
        f.flush()
    }
}

/// Reads a log: the optional header and every record. Any unparseable line,
/// including a truncated last line, is an error naming its 1-based number.
pub fn read_run_log(path: &Path) -> Result<(Option<Value>, Vec<RunRecord>), RunLogError> {
    let reader = BufReader::new(File::open(path)?);
    let mut header = None;
    let mut records = Vec::new();
    let mut saw_any = false;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line).map_err(|e| RunLogError::Corrupt {
            line: n,
            message: e.to_string(),
        })?;
        if let Some(h) = value.get("header") {
            if saw_any {
                return Err(RunLogError::Corrupt {
                    line: n,
                    message: "header must be the first line".into(),
                });
            }
            header = Some(h.clone());
            saw_any = true;
            continue;
        }
        saw_any = true;
        let rec: RunRecord = serde_json::from_value(value).map_err(|e| RunLogError::Corrupt {
            line: n,
            message: e.to_string(),
        })?;
        if rec.v != RUN_RECORD_VERSION {
            return Err(RunLogError::Corrupt {
                line: n,
                message: format!("unsupported record version {}", rec.v),
            });
        }
        records.push(rec);
    }
    if records.is_empty() {
        return Err(RunLogError::Empty);
    }
    Ok((header, records))
}
