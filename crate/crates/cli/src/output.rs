use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Value};

use crate::error::{CliError, Result};

/// Artifacts of one run. Files are written as produced; the manifest comes
/// last and is moved into place with a rename.
pub struct Output {
    dir: PathBuf,
    files: BTreeMap<String, u64>,
    seeds: Vec<u64>,
}

impl Output {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        Ok(Self { dir: dir.to_path_buf(), files: BTreeMap::new(), seeds: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    /// Records a seed and prints it; randomized runs call this before any other output.
    pub fn seed(&mut self, seed: u64) {
        if self.seeds.is_empty() {
            println!("seed = {seed}");
        }
        if !self.seeds.contains(&seed) {
            self.seeds.push(seed);
        }
    }

    pub fn bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.insert(name.to_string(), bytes.len() as u64);
        Ok(())
    }

    /// CSV with a header row taken from the field names of `S`.
    pub fn csv<S: Serialize>(&mut self, name: &str, rows: &[S]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(true).from_writer(Vec::new());
        for r in rows {
            w.serialize(r).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(self.dir.join(name), e.into_error()))?;
        self.bytes(name, &bytes)
    }

    /// CSV from explicit header and string records.
    pub fn table(&mut self, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let io = |e: csv::Error| CliError::Validation(format!("{name}: {e}"));
        w.write_record(header).map_err(io)?;
        for r in rows {
            w.write_record(r).map_err(io)?;
        }
        let bytes = w.into_inner().map_err(|e| CliError::io(self.dir.join(name), e.into_error()))?;
        self.bytes(name, &bytes)
    }

    pub fn json<S: Serialize>(&mut self, name: &str, value: &S) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Validation(format!("{name}: {e}")))?;
        bytes.push(b'\n');
        self.bytes(name, &bytes)
    }

    pub fn artifacts(&self) -> impl Iterator<Item = &String> {
        self.files.keys()
    }

    /// Writes manifest.json through a temporary file and a rename.
    pub fn finish(self, command: &str, config: &Value, status: &str, wall_time: Value) -> Result<()> {
        let manifest = json!({
            "command": command,
            "status": status,
            "config": config,
            "versions": { "kolmo-lab": env!("CARGO_PKG_VERSION"), "kolmo-core": kolmo_core::VERSION },
            "seeds": self.seeds,
            "artifacts": self.files.iter().map(|(k, v)| json!({ "file": k, "bytes": v })).collect::<Vec<_>>(),
            "wall_time": wall_time,
        });
        let tmp = self.dir.join("manifest.json.tmp");
        let fin = self.dir.join("manifest.json");
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("manifest serializes");
        bytes.push(b'\n');
        fs::write(&tmp, bytes).map_err(|e| CliError::io(&tmp, e))?;
        fs::rename(&tmp, &fin).map_err(|e| CliError::io(&fin, e))
    }
}

/// Shortest round-trip text of a float, as used in every table.
pub fn num(x: f64) -> String {
    x.to_string()
}
