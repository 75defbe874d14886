//! Run manifests: every command writes one alongside its outputs, recording
//! the resolved config, seeds, input/output checksums, and wall-clock
//! timestamps. Checksums cover artifact contents only, so re-runs with
//! identical flags produce byte-identical artifacts even though the manifest
//! timestamps differ.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::Context;
use chrono::{DateTime, Utc};
use serde::Serialize;

use crate::CliResult;

#[derive(Serialize)]
pub struct FileStamp {
    pub path: String,
    pub crc32: u32,
    pub bytes: u64,
}

#[derive(Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub inputs: Vec<FileStamp>,
    pub outputs: Vec<FileStamp>,
    pub started_at: DateTime<Utc>,
    pub finished_at: DateTime<Utc>,
    pub duration_ms: u64,
}

pub struct ManifestBuilder {
    command: String,
    config: serde_json::Value,
    seeds: serde_json::Value,
    inputs: Vec<FileStamp>,
    outputs: Vec<FileStamp>,
    started_at: DateTime<Utc>,
    timer: Instant,
}

fn stamp(path: &Path) -> anyhow::Result<FileStamp> {
    let bytes = fs::read(path).with_context(|| format!("cannot checksum {}", path.display()))?;
    Ok(FileStamp {
        path: path.display().to_string(),
        crc32: crc32fast::hash(&bytes),
        bytes: bytes.len() as u64,
    })
}

impl ManifestBuilder {
    pub fn new(command: &str, config: serde_json::Value, seeds: serde_json::Value) -> Self {
        Self {
            command: command.to_string(),
            config,
            seeds,
            inputs: Vec::new(),
            outputs: Vec::new(),
            started_at: Utc::now(),
            timer: Instant::now(),
        }
    }

    pub fn input(&mut self, path: &Path) -> CliResult<()> {
        self.inputs.push(stamp(path).map_err(crate::CliError::Runtime)?);
        Ok(())
    }

    pub fn output(&mut self, path: &Path) -> CliResult<()> {
        self.outputs.push(stamp(path).map_err(crate::CliError::Runtime)?);
        Ok(())
    }

    /// Writes `manifest.json` into `out_dir` and returns its path.
    pub fn write(self, out_dir: &Path) -> CliResult<PathBuf> {
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            seeds: self.seeds,
            inputs: self.inputs,
            outputs: self.outputs,
            started_at: self.started_at,
            finished_at: Utc::now(),
            duration_ms: self.timer.elapsed().as_millis() as u64,
        };
        let path = out_dir.join("manifest.json");
        let text = serde_json::to_string_pretty(&manifest)
            .map_err(|e| crate::CliError::Runtime(e.into()))?;
        fs::write(&path, text + "\n")
            .with_context(|| format!("cannot write {}", path.display()))
            .map_err(crate::CliError::Runtime)?;
        Ok(path)
    }
}

/// Creates the output directory (and parents) if needed.
pub fn ensure_out_dir(path: &Path) -> CliResult<()> {
    fs::create_dir_all(path)
        .with_context(|| format!("cannot create output directory {}", path.display()))
        .map_err(crate::CliError::Runtime)
}
