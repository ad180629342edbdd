//! Artifact writers. CSV files start with `# key: value` metadata lines
//! followed by a column header.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use serde::Serialize;
use sls_core::{json, DVector};

use crate::Failure;

pub fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir).map_err(|e| Failure::Other(format!("cannot create {}: {e}", dir.display())))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    json::write_json(path, value).map_err(|e| Failure::Other(format!("{}: {e}", path.display())))
}

pub fn write_csv(
    path: &Path,
    meta: &[(&str, String)],
    body: impl FnOnce(&mut dyn Write) -> std::io::Result<()>,
) -> Result<(), Failure> {
    let mut w = BufWriter::new(File::create(path)?);
    for (k, v) in meta {
        writeln!(w, "# {k}: {v}")?;
    }
    body(&mut w)?;
    w.flush()?;
    Ok(())
}

/// Columns `t, <prefix>1 .. <prefix>k` for a sequence of vectors.
pub fn series(w: &mut dyn Write, prefix: &str, seq: &[DVector<f64>]) -> std::io::Result<()> {
    let k = seq.first().map_or(0, |v| v.len());
    let mut header = vec!["t".to_string()];
    header.extend((1..=k).map(|i| format!("{prefix}{i}")));
    writeln!(w, "{}", header.join(","))?;
    for (t, v) in seq.iter().enumerate() {
        let row: Vec<String> = v.iter().map(f64::to_string).collect();
        writeln!(w, "{t},{}", row.join(","))?;
    }
    Ok(())
}
