use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use elicit_core::serial::{self, Versioned};

pub fn ensure_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))
}

pub fn save<T: Versioned>(value: &T, path: &Path) -> Result<()> {
    if let Some(parent) = path.parent() {
        ensure_dir(parent)?;
    }
    serial::save(value, path).with_context(|| format!("writing {}", path.display()))
}

/// Writes rows through the csv crate and replaces `path` atomically.
pub fn write_csv<I, R>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = R>,
    R: IntoIterator,
    R::Item: AsRef<[u8]>,
{
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(row)?;
    }
    let bytes = w.into_inner().map_err(|e| e.into_error())?;
    serial::write_atomic(path, &bytes).with_context(|| format!("writing {}", path.display()))
}
