//! Output directory handling: CSV and JSON writers plus the run manifest.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};
use sha1::{Digest, Sha1};

use crate::error::{CliError, Result};

pub const MANIFEST_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "run_manifest.json";

/// Git blob id of `content`: sha1 over `"blob <len>\0"` followed by the bytes.
pub fn git_blob_sha1(content: &[u8]) -> String {
    let mut h = Sha1::new();
    h.update(format!("blob {}\0", content.len()).as_bytes());
    h.update(content);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Pretty JSON with sorted keys and a trailing newline.
pub fn json_bytes<T: Serialize>(value: &T) -> Vec<u8> {
    // round-tripping through Value sorts object keys (serde_json's map is a BTreeMap)
    let v = serde_json::to_value(value).expect("outputs serialize");
    let mut out = serde_json::to_vec_pretty(&v).expect("values serialize");
    out.push(b'\n');
    out
}

/// Rows for a CSV file; every cell is already rendered.
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(header: impl IntoIterator<Item = S>) -> Self {
        Self {
            header: header.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(Vec::new());
        w.write_record(&self.header).expect("in-memory write");
        for r in &self.rows {
            w.write_record(r).expect("in-memory write");
        }
        w.into_inner().expect("in-memory flush")
    }
}

/// Shortest round-trip rendering of a float.
pub fn num(x: f64) -> String {
    format!("{x}")
}

/// A command's output directory. Files are hashed as they are written and
/// listed in the manifest by [`OutputDir::finish`].
pub struct OutputDir {
    root: PathBuf,
    outputs: BTreeMap<String, String>,
    inputs: BTreeMap<String, String>,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
        Ok(Self {
            root: root.to_path_buf(),
            outputs: BTreeMap::new(),
            inputs: BTreeMap::new(),
        })
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.root.join(name);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.outputs.insert(name.to_string(), git_blob_sha1(bytes));
        Ok(())
    }

    pub fn write_csv(&mut self, name: &str, table: &Table) -> Result<()> {
        self.write(name, &table.to_bytes())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, &json_bytes(value))
    }

    /// Records the hash of an input file under its base name.
    pub fn record_input(&mut self, path: &Path, bytes: &[u8]) {
        let name = path
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_else(|| path.display().to_string());
        self.inputs.insert(name, git_blob_sha1(bytes));
    }

    /// Writes the manifest echoing `config` and the hashes of every file.
    pub fn finish<C: Serialize>(self, command: &str, config: &C) -> Result<PathBuf> {
        let manifest = json!({
            "manifest_version": MANIFEST_VERSION,
            "command": command,
            "config": serde_json::to_value(config).expect("configs serialize"),
            "outputs": self.outputs,
            "inputs": self.inputs,
        });
        let path = self.root.join(MANIFEST_FILE);
        let bytes = json_bytes(&manifest);
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}

/// Reads a manifest back as JSON.
pub fn read_manifest(path: &Path) -> Result<Value> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}
