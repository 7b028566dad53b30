//! Field-named, versioned JSON documents.
//!
//! Every persisted type is wrapped in an envelope carrying a format tag and a
//! version number, so files can be recognised and rejected when stale:
//!
//! ```json
//! { "format": "elicit.dataset", "version": 1, "body": { ... } }
//! ```
//!
//! Matrices are written row-major as nested arrays.

use std::fs;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// A type with a stable on-disk representation.
pub trait Versioned: Serialize + DeserializeOwned {
    const FORMAT: &'static str;
    const VERSION: u32;
}

#[derive(Serialize)]
struct EnvelopeRef<'a, T> {
    format: &'a str,
    version: u32,
    body: &'a T,
}

#[derive(Deserialize)]
struct Envelope<T> {
    body: T,
}

#[derive(Deserialize)]
struct Header {
    format: String,
    version: u32,
}

pub fn to_string<T: Versioned>(value: &T) -> Result<String> {
    Ok(serde_json::to_string_pretty(&EnvelopeRef {
        format: T::FORMAT,
        version: T::VERSION,
        body: value,
    })?)
}

pub fn to_value<T: Versioned>(value: &T) -> Result<serde_json::Value> {
    Ok(serde_json::to_value(EnvelopeRef {
        format: T::FORMAT,
        version: T::VERSION,
        body: value,
    })?)
}

pub fn from_str<T: Versioned>(text: &str) -> Result<T> {
    let header: Header = serde_json::from_str(text)?;
    check_header::<T>(&header)?;
    let env: Envelope<T> = serde_json::from_str(text)?;
    Ok(env.body)
}

pub fn from_value<T: Versioned>(value: serde_json::Value) -> Result<T> {
    let header: Header = serde_json::from_value(value.clone())?;
    check_header::<T>(&header)?;
    let env: Envelope<T> = serde_json::from_value(value)?;
    Ok(env.body)
}

fn check_header<T: Versioned>(header: &Header) -> Result<()> {
    if header.format != T::FORMAT || header.version != T::VERSION {
        return Err(Error::Format {
            expected: T::FORMAT,
            expected_version: T::VERSION,
            found: header.format.clone(),
            found_version: header.version,
        });
    }
    Ok(())
}

pub fn save<T: Versioned>(value: &T, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), to_string(value)?.as_bytes())
}

pub fn load<T: Versioned>(path: impl AsRef<Path>) -> Result<T> {
    from_str(&fs::read_to_string(path)?)
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    fs::create_dir_all(&dir)?;
    let file_name = path
        .file_name()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let tmp = dir.join(format!(".{file_name}.tmp{}", std::process::id()));
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Row-major `Vec<Vec<f64>>` representation for `DMatrix<f64>`.
pub(crate) mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = (0..m.nrows())
            .map(|i| m.row(i).iter().copied().collect())
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows: Vec<Vec<f64>> = Vec::deserialize(d)?;
        from_rows(&rows).map_err(serde::de::Error::custom)
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if let Some((i, r)) = rows.iter().enumerate().find(|(_, r)| r.len() != ncols) {
            return Err(format!(
                "ragged matrix: row {i} has {} entries, expected {ncols}",
                r.len()
            ));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}

pub(crate) mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.as_slice().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let v: Vec<f64> = Vec::deserialize(d)?;
        Ok(DVector::from_vec(v))
    }
}
