use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::generate::Example;
use crate::error::{Error, Result};

/// Writes one JSON object per line: `{"input", "target", "split"}`.
pub fn save_jsonl(path: impl AsRef<Path>, examples: &[Example]) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    for ex in examples {
        serde_json::to_writer(&mut w, ex)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a JSONL dataset. Blank lines are skipped and CRLF line endings are
/// accepted; any malformed line is reported with its 1-based line number.
pub fn load_jsonl(path: impl AsRef<Path>) -> Result<Vec<Example>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| match e.kind() {
        std::io::ErrorKind::NotFound => Error::MissingArtifact(path.to_path_buf()),
        _ => Error::Io(e),
    })?;
    parse_jsonl(&text).map_err(|(line, msg)| Error::Line {
        path: path.to_path_buf(),
        line,
        msg,
    })
}

pub(crate) fn parse_jsonl(text: &str) -> std::result::Result<Vec<Example>, (usize, String)> {
    let mut out = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let ex: Example = serde_json::from_str(line).map_err(|e| (i + 1, e.to_string()))?;
        if ex.input.trim().is_empty() {
            return Err((i + 1, "empty input".into()));
        }
        out.push(ex);
    }
    Ok(out)
}
