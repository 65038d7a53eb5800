//! Run directory writer. Every artifact goes through one [`RunWriter`], which
//! hashes it and finally emits `manifest.json`.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::RunConfig;

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Serialize)]
struct FileEntry {
    bytes: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    command: &'a str,
    seed: u64,
    config: &'a RunConfig,
    inputs: &'a BTreeMap<String, FileEntry>,
    outputs: &'a BTreeMap<String, FileEntry>,
}

#[derive(Debug)]
pub struct RunWriter {
    dir: PathBuf,
    inputs: BTreeMap<String, FileEntry>,
    outputs: BTreeMap<String, FileEntry>,
}

impl RunWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn record_input(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(
            name.to_string(),
            FileEntry {
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            },
        );
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.insert(
            name.to_string(),
            FileEntry {
                bytes: bytes.len(),
                sha256: sha256_hex(bytes),
            },
        );
        Ok(())
    }

    pub fn write_json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Write the manifest; no timestamps, so identical runs give identical bytes.
    pub fn finish(mut self, command: &str, cfg: &RunConfig) -> Result<()> {
        let manifest = Manifest {
            tool: env!("CARGO_PKG_NAME"),
            version: env!("CARGO_PKG_VERSION"),
            command,
            seed: cfg.seed,
            config: cfg,
            inputs: &self.inputs,
            outputs: &self.outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest)?;
        bytes.push(b'\n');
        let path = self.dir.join("manifest.json");
        fs::write(&path, &bytes).with_context(|| format!("writing {}", path.display()))?;
        self.outputs.clear();
        Ok(())
    }
}

/// Build CSV bytes from a header and rows of floats.
pub fn csv_bytes(
    header: &[String],
    rows: impl IntoIterator<Item = Vec<String>>,
) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.into_inner().map_err(|e| anyhow::anyhow!("csv: {e}"))
}

/// Shortest round-trip decimal form; `NaN` for missing values.
pub fn num(v: f64) -> String {
    if v.is_nan() {
        "NaN".into()
    } else {
        format!("{v:?}")
    }
}
