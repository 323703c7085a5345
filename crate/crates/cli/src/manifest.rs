use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

/// Bumped whenever a CSV header or column meaning changes.
pub const CSV_SCHEMA_VERSION: u32 = 1;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Effective configuration after defaults and flag overrides.
    pub config: Value,
    pub seed: Option<u64>,
    pub tool_version: String,
    pub csv_schema_version: u32,
    pub threads: usize,
    pub outputs: Vec<PathBuf>,
    pub wall_time_s: f64,
    pub error: Option<String>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            command: command.to_string(),
            config: Value::Null,
            seed: None,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            csv_schema_version: CSV_SCHEMA_VERSION,
            threads: rayon::current_num_threads(),
            outputs: Vec::new(),
            wall_time_s: 0.0,
            error: None,
        }
    }

    pub fn write(&self, dir: &Path) -> std::io::Result<PathBuf> {
        std::fs::create_dir_all(dir)?;
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self).map_err(std::io::Error::other)?;
        std::fs::write(&path, text + "\n")?;
        Ok(path)
    }
}
