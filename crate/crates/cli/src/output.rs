//! CSV files and the run manifest written next to them.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};
use vrjp_core::mc::Table;

use crate::config::{hex, RunConfig};

#[derive(Debug, Serialize)]
struct FileEntry {
    name: String,
    rows: usize,
    sha256: String,
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    /// Decimal string: TOML integers stop at `i64::MAX`.
    seed: String,
    workers: usize,
    only: &'a [String],
    config_sha256: String,
    core_version: &'a str,
    cli_version: &'a str,
    pivot_floor: f64,
    passed: bool,
    files: Vec<FileEntry>,
}

/// Collects the tables of one run and writes them with a manifest.
pub struct RunOutput {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl RunOutput {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))?;
        Ok(RunOutput { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write(&mut self, name: &str, table: &Table) -> Result<()> {
        let text = table.to_csv_string();
        let path = self.dir.join(name);
        fs::write(&path, &text).with_context(|| format!("writing {}", path.display()))?;
        self.files.push(FileEntry { name: name.into(), rows: table.rows.len(), sha256: hex(&Sha256::digest(&text)) });
        Ok(())
    }

    pub fn finish(self, experiment: &str, config: &RunConfig, passed: bool) -> Result<PathBuf> {
        let manifest = Manifest {
            experiment,
            seed: config.run.seed.to_string(),
            workers: config.run.workers,
            only: &config.run.only,
            config_sha256: config.fingerprint(),
            core_version: vrjp_core::VERSION,
            cli_version: env!("CARGO_PKG_VERSION"),
            pivot_floor: vrjp_core::linalg::PIVOT_FLOOR,
            passed,
            files: self.files,
        };
        let path = self.dir.join("manifest.toml");
        fs::write(&path, toml::to_string(&manifest)?).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

/// Concatenate tables that share a header, prefixing each row with its key
/// cells.
pub fn keyed(keys: &[&str], parts: Vec<(Vec<String>, Table)>) -> Table {
    let inner = parts.first().map(|(_, t)| t.header.clone()).unwrap_or_default();
    let mut out = Table::new(keys.iter().map(|k| k.to_string()).chain(inner));
    for (key, t) in parts {
        for row in t.rows {
            out.push(key.iter().cloned().chain(row).collect());
        }
    }
    out
}
