//! Output directories, CSV formatting and run manifests.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{Context as _, Result};
use motsdn::sphere::SphereField;
use serde::Serialize;

use crate::config::{sha256_hex, InputRecord, RunConfig};

/// Hash of a written artifact, relative to the output root.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct OutputRecord {
    pub path: String,
    pub bytes: usize,
    pub sha256: String,
}

/// A directory that records what is written into it.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    prefix: String,
    records: Vec<OutputRecord>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        std::fs::create_dir_all(root).with_context(|| format!("cannot create output directory {}", root.display()))?;
        Ok(OutputDir { root: root.to_path_buf(), prefix: String::new(), records: Vec::new() })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// A subdirectory owned by one worker.
    pub fn subdir(&self, name: &str) -> Result<Self> {
        let root = self.root.join(name);
        std::fs::create_dir_all(&root).with_context(|| format!("cannot create {}", root.display()))?;
        Ok(OutputDir { root, prefix: format!("{}{name}/", self.prefix), records: Vec::new() })
    }

    /// Takes over the records of a finished subdirectory.
    pub fn absorb(&mut self, sub: OutputDir) {
        self.records.extend(sub.records);
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        std::fs::write(&path, bytes).with_context(|| format!("cannot write {}", path.display()))?;
        self.records.push(OutputRecord { path: format!("{}{name}", self.prefix), bytes: bytes.len(), sha256: sha256_hex(bytes) });
        Ok(())
    }

    pub fn write_json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    pub fn write_field(&mut self, name: &str, f: &SphereField<f64>) -> Result<()> {
        self.write_json(name, &f.snapshot())
    }

    pub fn records(&self) -> &[OutputRecord] {
        &self.records
    }
}

/// Everything needed to repeat a run.
#[derive(Clone, Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: &'a str,
    pub arguments: &'a serde_json::Value,
    pub config: &'a RunConfig,
    pub inputs: &'a [InputRecord],
    pub outputs: Vec<OutputRecord>,
}

/// Writes `manifest.json` listing every artifact written so far.
pub fn write_manifest(out: &mut OutputDir, command: &str, arguments: &serde_json::Value, config: &RunConfig, inputs: &[InputRecord]) -> Result<()> {
    let mut outputs = out.records().to_vec();
    outputs.sort_by(|a, b| a.path.cmp(&b.path));
    let manifest = Manifest { tool: "motsdn", version: env!("CARGO_PKG_VERSION"), command, arguments, config, inputs, outputs };
    let mut text = serde_json::to_string_pretty(&manifest)?;
    text.push('\n');
    let path = out.root().join("manifest.json");
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}

/// A CSV table with fixed columns.
#[derive(Clone, Debug)]
pub struct Csv {
    text: String,
    columns: usize,
}

/// One CSV cell.
pub enum Cell<'a> {
    Num(f64),
    Int(i64),
    Text(&'a str),
    Bool(bool),
}

impl Csv {
    pub fn new(header: &[&str]) -> Self {
        Csv { text: format!("{}\n", header.join(",")), columns: header.len() }
    }

    pub fn row(&mut self, cells: &[Cell<'_>]) {
        assert_eq!(cells.len(), self.columns, "CSV row width");
        for (i, c) in cells.iter().enumerate() {
            if i > 0 {
                self.text.push(',');
            }
            match c {
                Cell::Num(x) => {
                    let _ = write!(self.text, "{x:.17e}");
                }
                Cell::Int(x) => {
                    let _ = write!(self.text, "{x}");
                }
                Cell::Text(t) => self.text.push_str(t),
                Cell::Bool(b) => {
                    let _ = write!(self.text, "{b}");
                }
            }
        }
        self.text.push('\n');
    }

    pub fn as_bytes(&self) -> &[u8] {
        self.text.as_bytes()
    }

    pub fn into_string(self) -> String {
        self.text
    }
}
