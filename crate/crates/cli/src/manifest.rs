use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use lidar_energy::{Error, Result};
use serde::{Deserialize, Serialize};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Record of one command invocation, written as `manifest.json` in the
/// output directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<PathBuf>,
    pub output_dir: PathBuf,
    pub tool_version: String,
    pub started_unix_ms: u128,
    pub finished_unix_ms: u128,
    /// Command-specific facts such as the threshold used.
    pub notes: BTreeMap<String, String>,
}

pub fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

impl RunManifest {
    pub fn start(command: &str, config_hash: String, seed: u64, output_dir: &Path) -> Self {
        RunManifest {
            command: command.to_string(),
            config_hash,
            seed,
            inputs: Vec::new(),
            output_dir: output_dir.to_path_buf(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix_ms: now_ms(),
            finished_unix_ms: 0,
            notes: BTreeMap::new(),
        }
    }

    pub fn finish(mut self) -> Result<Self> {
        self.finished_unix_ms = now_ms();
        let path = self.output_dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(&self).expect("manifest serializes");
        fs::write(&path, text + "\n").map_err(|e| Error::Io { path, source: e })?;
        Ok(self)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = fs::read_to_string(&path).map_err(|e| Error::Io {
            path: path.clone(),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Format {
            path,
            msg: e.to_string(),
        })
    }
}
