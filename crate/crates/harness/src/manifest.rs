use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use crate::config::sha256_hex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Relative to the output directory.
    pub path: PathBuf,
    pub bytes: u64,
    pub sha256: String,
}

/// Written as `manifest.json` next to every command's outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    /// SHA-256 of `config.toml` in the output directory, which is a
    /// byte-for-byte copy of the file passed with `--config`.
    pub config_sha256: Option<String>,
    pub seed: u64,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    pub outputs: Vec<OutputFile>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, config_bytes: Option<&[u8]>, seed: u64) -> Self {
        Self {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_sha256: config_bytes.map(sha256_hex),
            seed,
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            outputs: Vec::new(),
        }
    }

    pub fn record(&mut self, out_dir: &Path, file: &Path) -> std::io::Result<()> {
        let bytes = std::fs::read(file)?;
        self.outputs.push(OutputFile {
            path: file.strip_prefix(out_dir).unwrap_or(file).to_path_buf(),
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    pub fn finish(mut self, out_dir: &Path) -> std::io::Result<PathBuf> {
        self.finished_unix_ms = now_ms();
        self.outputs.sort_by(|a, b| a.path.cmp(&b.path));
        let path = out_dir.join("manifest.json");
        std::fs::write(&path, serde_json::to_string_pretty(&self)? + "\n")?;
        Ok(path)
    }
}
