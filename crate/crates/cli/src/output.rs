use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::CliError;

pub const RUN_MANIFEST: &str = "run_manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub tool_version: &'static str,
    pub command: String,
    pub config_path: Option<String>,
    pub config_sha256: String,
    pub seed: u64,
    /// Seconds since the epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub timestamp: u64,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<FileHash, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
    Ok(FileHash { path: path.display().to_string(), sha256: sha256_hex(&bytes) })
}

fn timestamp() -> u64 {
    if let Some(t) = std::env::var("SOURCE_DATE_EPOCH").ok().and_then(|v| v.trim().parse().ok()) {
        return t;
    }
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map_or(0, |d| d.as_secs())
}

/// Writes files under the output directory and records their hashes.
pub struct Output {
    dir: PathBuf,
    written: Vec<FileHash>,
}

impl Output {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir).map_err(|e| CliError::internal(format!("{}: {e}", dir.display())))?;
        Ok(Output { dir: dir.to_owned(), written: Vec::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: impl AsRef<[u8]>) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| CliError::internal(format!("{}: {e}", parent.display())))?;
        }
        let bytes = contents.as_ref();
        std::fs::write(&path, bytes).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))?;
        self.record(name, sha256_hex(bytes));
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        let mut s = serde_json::to_string_pretty(value).map_err(|e| CliError::internal(e.to_string()))?;
        s.push('\n');
        self.write(name, s)
    }

    /// Records a file written by someone else, relative to the output directory.
    pub fn record(&mut self, name: &str, sha256: String) {
        self.written.retain(|f| f.path != name);
        self.written.push(FileHash { path: name.to_owned(), sha256 });
    }

    pub fn finish(
        mut self,
        command: &str,
        config_path: Option<&Path>,
        config_text: &str,
        seed: u64,
        mut inputs: Vec<FileHash>,
    ) -> Result<(), CliError> {
        self.written.sort_by(|a, b| a.path.cmp(&b.path));
        inputs.sort_by(|a, b| a.path.cmp(&b.path));
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME"),
            tool_version: env!("CARGO_PKG_VERSION"),
            command: command.to_owned(),
            config_path: config_path.map(|p| p.display().to_string()),
            config_sha256: sha256_hex(config_text.as_bytes()),
            seed,
            timestamp: timestamp(),
            inputs,
            outputs: std::mem::take(&mut self.written),
        };
        let mut s = serde_json::to_string_pretty(&manifest).map_err(|e| CliError::internal(e.to_string()))?;
        s.push('\n');
        let path = self.dir.join(RUN_MANIFEST);
        std::fs::write(&path, s).map_err(|e| CliError::internal(format!("{}: {e}", path.display())))
    }
}
