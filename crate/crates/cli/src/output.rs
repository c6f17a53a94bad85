//! Result files: JSON with 17 significant digits, CSV and run manifests.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use serde_json::ser::{CompactFormatter, Formatter};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

/// Writes floats as `d.ddddddddddddddddde±x`.
struct Digits17(CompactFormatter);

impl Formatter for Digits17 {
    fn write_f64<W: ?Sized + Write>(&mut self, writer: &mut W, value: f64) -> io::Result<()> {
        write!(writer, "{value:.16e}")
    }

    fn write_f32<W: ?Sized + Write>(&mut self, writer: &mut W, value: f32) -> io::Result<()> {
        self.write_f64(writer, value as f64)
    }
}

pub fn to_json_string<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, Digits17(CompactFormatter));
    value.serialize(&mut ser)?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf)?)
}

/// JSON for a float that may be infinite.
pub fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else if v > 0.0 {
        json!("inf")
    } else if v < 0.0 {
        json!("-inf")
    } else {
        json!("nan")
    }
}

pub fn nums(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|&x| num(x)).collect())
}

/// A CSV table built row by row; fields are written with the shortest
/// round-trip representation.
pub struct Csv {
    out: String,
}

impl Csv {
    pub fn new<S: AsRef<str>>(header: impl IntoIterator<Item = S>) -> Self {
        let mut csv = Csv { out: String::new() };
        let cols: Vec<String> = header.into_iter().map(|s| s.as_ref().to_string()).collect();
        csv.out.push_str(&cols.join(","));
        csv.out.push('\n');
        csv
    }

    pub fn row(&mut self, values: impl IntoIterator<Item = f64>) {
        let cells: Vec<String> = values.into_iter().map(format_field).collect();
        self.out.push_str(&cells.join(","));
        self.out.push('\n');
    }

    pub fn into_string(self) -> String {
        self.out
    }
}

pub fn format_field(v: f64) -> String {
    if v.is_finite() {
        format!("{v:?}")
    } else if v > 0.0 {
        "inf".into()
    } else if v < 0.0 {
        "-inf".into()
    } else {
        "nan".into()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Collects output files of one run and writes them with a manifest.
pub struct RunOutputs {
    subcommand: String,
    config: Value,
    seeds: Vec<u64>,
    files: Vec<(PathBuf, String)>,
}

impl RunOutputs {
    pub fn new(subcommand: &str, config: Value, seeds: Vec<u64>) -> Self {
        RunOutputs {
            subcommand: subcommand.to_string(),
            config,
            seeds,
            files: Vec::new(),
        }
    }

    pub fn add(&mut self, path: impl Into<PathBuf>, contents: String) {
        self.files.push((path.into(), contents));
    }

    /// Writes every file and `<first file>.manifest.json`. Returns the
    /// manifest path, or `None` when there was nothing to write.
    pub fn write(self) -> Result<Option<PathBuf>> {
        let Some((first, _)) = self.files.first() else {
            return Ok(None);
        };
        let manifest_path = manifest_path(first);
        let mut digests = Vec::new();
        for (path, contents) in &self.files {
            if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
                fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
            }
            fs::write(path, contents).with_context(|| format!("writing {}", path.display()))?;
            digests.push(json!({
                "path": path.display().to_string(),
                "sha256": sha256_hex(contents.as_bytes()),
            }));
        }
        let manifest = json!({
            "subcommand": self.subcommand,
            "config": self.config,
            "seeds": self.seeds,
            "tool_version": env!("CARGO_PKG_VERSION"),
            "outputs": digests,
        });
        fs::write(&manifest_path, to_json_string(&manifest)?)
            .with_context(|| format!("writing {}", manifest_path.display()))?;
        Ok(Some(manifest_path))
    }
}

pub fn manifest_path(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    output.with_file_name(name)
}

/// `report.json` → `report.<suffix>`.
pub fn sibling(path: &Path, suffix: &str) -> PathBuf {
    let stem = path.file_stem().unwrap_or_default().to_string_lossy();
    path.with_file_name(format!("{stem}.{suffix}"))
}
