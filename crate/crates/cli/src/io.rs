//! File helpers. Every output is written to a temporary sibling and renamed
//! into place, so a reader never sees a half-written file.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{CliError, CliResult};

pub fn read_to_string(path: &Path) -> CliResult<String> {
    fs::read_to_string(path).map_err(|e| CliError::read(path, e))
}

pub fn open(path: &Path) -> CliResult<fs::File> {
    fs::File::open(path).map_err(|e| CliError::read(path, e))
}

pub fn write_atomic(path: &Path, contents: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::write(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, contents).map_err(|e| CliError::write(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::write(path, e))
}

pub fn write_json(path: &Path, value: &impl Serialize) -> CliResult<()> {
    let mut doc = serde_json::to_string_pretty(value).expect("output types serialize");
    doc.push('\n');
    write_atomic(path, doc.as_bytes())
}

pub fn write_jsonl<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> CliResult<()> {
    let mut doc = String::new();
    for r in rows {
        doc.push_str(&serde_json::to_string(&r).expect("output rows serialize"));
        doc.push('\n');
    }
    write_atomic(path, doc.as_bytes())
}

/// Fixed three-decimal rendering used for every human-facing number.
pub fn f3(v: f64) -> String {
    format!("{v:.3}")
}
