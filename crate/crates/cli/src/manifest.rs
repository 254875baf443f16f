//! Run manifests written beside every output artifact.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct InputDigest {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub command: String,
    pub config: serde_json::Value,
    pub inputs: Vec<InputDigest>,
    pub seed: Option<u64>,
    pub artifacts: Vec<String>,
    pub wall_clock_seconds: f64,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    Ok(hex::encode(Sha256::digest(fs::read(path)?)))
}

/// `results.jsonl` -> `results.jsonl.manifest.json`.
pub fn manifest_path(artifact: &Path) -> PathBuf {
    let mut name = artifact.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest.json");
    artifact.with_file_name(name)
}

pub struct Recorder {
    command: String,
    config: serde_json::Value,
    inputs: Vec<PathBuf>,
    seed: Option<u64>,
    started: Instant,
}

impl Recorder {
    pub fn start<C: Serialize>(
        command: &str,
        config: &C,
        inputs: &[&Path],
        seed: Option<u64>,
    ) -> Self {
        Recorder {
            command: command.to_string(),
            config: serde_json::to_value(config).unwrap_or(serde_json::Value::Null),
            inputs: inputs.iter().map(|p| p.to_path_buf()).collect(),
            seed,
            started: Instant::now(),
        }
    }

    /// Writes the manifest next to the first artifact.
    pub fn finish(self, artifacts: &[&Path]) -> io::Result<()> {
        let Some(first) = artifacts.first() else {
            return Ok(());
        };
        let inputs = self
            .inputs
            .iter()
            .map(|p| {
                Ok(InputDigest {
                    path: p.display().to_string(),
                    sha256: sha256_file(p)?,
                })
            })
            .collect::<io::Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: self.command,
            config: self.config,
            inputs,
            seed: self.seed,
            artifacts: artifacts.iter().map(|p| p.display().to_string()).collect(),
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
        };
        let text = serde_json::to_string_pretty(&manifest).map_err(io::Error::other)?;
        fs::write(manifest_path(first), text + "\n")
    }
}
