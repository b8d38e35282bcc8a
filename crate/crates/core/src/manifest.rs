//! Run manifests and deterministic table output.
//!
//! Every command writes a manifest carrying the fully resolved inputs, so
//! any output file is reproducible bit-for-bit from its manifest on the
//! same build. Timing lives only here, never in the data files. Floats
//! are printed with the shortest round-trip representation.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::params::ParameterSet;

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub params: ParameterSet,
    pub rtol: f64,
    pub atol: f64,
    pub outputs: Vec<String>,
    pub wall_ms: u128,
    #[serde(skip_serializing_if = "serde_json::Value::is_null")]
    pub extra: serde_json::Value,
}

impl RunManifest {
    pub fn new(command: &str, params: &ParameterSet) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            params: *params,
            rtol: 1e-10,
            atol: 1e-12,
            outputs: Vec::new(),
            wall_ms: 0,
            extra: serde_json::Value::Null,
        }
    }
}

/// Shortest round-trip float formatting (deterministic per build).
pub fn fmt(v: f64) -> String {
    if v.is_nan() {
        "nan".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v}")
    }
}

pub fn write_csv<P: AsRef<Path>>(path: P, header: &str, rows: &[Vec<String>]) -> Result<()> {
    let mut buf = String::with_capacity(rows.len() * 64 + header.len() + 1);
    buf.push_str(header);
    buf.push('\n');
    for row in rows {
        buf.push_str(&row.join(","));
        buf.push('\n');
    }
    fs::write(path.as_ref(), buf).map_err(|e| Error::Config(format!("write csv: {e}")))
}

pub fn write_json<P: AsRef<Path>, T: Serialize>(path: P, value: &T) -> Result<()> {
    let mut f = fs::File::create(path.as_ref())
        .map_err(|e| Error::Config(format!("create json: {e}")))?;
    let s = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Config(format!("serialize: {e}")))?;
    f.write_all(s.as_bytes())
        .and_then(|_| f.write_all(b"\n"))
        .map_err(|e| Error::Config(format!("write json: {e}")))
}

pub fn ensure_dir<P: AsRef<Path>>(dir: P) -> Result<PathBuf> {
    let p = dir.as_ref().to_path_buf();
    fs::create_dir_all(&p).map_err(|e| Error::Config(format!("create out dir: {e}")))?;
    Ok(p)
}
