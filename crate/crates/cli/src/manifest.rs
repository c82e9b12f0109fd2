//! Run manifests: what ran, with which settings, on which bytes.
//!
//! Files are named without directories and carry content hashes, so two runs
//! with the same config and seed produce identical manifests wherever they
//! write.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::PipelineConfig;
use crate::error::CliError;

#[derive(Debug, Serialize)]
pub struct FileRecord {
    pub role: String,
    pub file: String,
    pub sha256: String,
    pub bytes: usize,
}

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_hash: String,
    pub versions: BTreeMap<&'static str, String>,
    pub config: serde_json::Value,
    pub inputs: Vec<FileRecord>,
    pub outputs: Vec<FileRecord>,
    pub summary: serde_json::Value,
}

fn record(role: &str, path: &Path, bytes: &[u8]) -> FileRecord {
    FileRecord {
        role: role.to_string(),
        file: path
            .file_name()
            .map(|f| f.to_string_lossy().into_owned())
            .unwrap_or_default(),
        sha256: format!("{:x}", Sha256::digest(bytes)),
        bytes: bytes.len(),
    }
}

impl Manifest {
    pub fn new(command: &str, cfg: &PipelineConfig) -> Self {
        let mut versions = BTreeMap::new();
        versions.insert("termnmt", termnmt::VERSION.to_string());
        versions.insert("termnmt-cli", env!("CARGO_PKG_VERSION").to_string());
        versions.insert("checkpoint_format", termnmt::nmt::CHECKPOINT_VERSION.to_string());
        Manifest {
            command: command.to_string(),
            seed: cfg.seed,
            config_hash: cfg.hash(),
            versions,
            config: cfg.experiment_json(),
            inputs: Vec::new(),
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn input(&mut self, role: &str, path: &Path, bytes: &[u8]) {
        self.inputs.push(record(role, path, bytes));
    }

    /// Writes `bytes` to `path` and records it.
    pub fn write_output(&mut self, role: &str, path: &Path, bytes: &[u8]) -> Result<(), CliError> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| CliError::io(path, e))?;
        self.outputs.push(record(role, path, bytes));
        Ok(())
    }

    /// Writes `<out_dir>/<command>.manifest.json` and returns its path.
    pub fn finish(self, out_dir: &Path) -> Result<PathBuf, CliError> {
        std::fs::create_dir_all(out_dir).map_err(|e| CliError::io(out_dir, e))?;
        let path = out_dir.join(format!("{}.manifest.json", self.command));
        let mut text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))?;
        Ok(path)
    }
}
