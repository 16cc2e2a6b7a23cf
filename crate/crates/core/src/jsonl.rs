//! One-JSON-value-per-line files.

use std::io::{BufRead, Write};

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::ingest::{IngestError, SchemaError};

pub fn write<'a, T: Serialize + 'a, W: Write>(items: impl IntoIterator<Item = &'a T>, mut w: W) -> std::io::Result<()> {
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Reads every non-blank line; the first malformed line aborts with its
/// 1-based number.
pub fn read<T: DeserializeOwned, R: BufRead>(r: R) -> Result<Vec<T>, IngestError> {
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| SchemaError { line: i + 1, reason: e.to_string() })?);
    }
    Ok(out)
}
