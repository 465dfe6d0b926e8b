use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::Failure;

/// What was run, with what, and what it produced. Written before any
/// computation starts and rewritten with the artifact list at the end.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool_version: &'static str,
    pub command: serde_json::Value,
    pub config_path: Option<PathBuf>,
    pub config_hash: String,
    pub seed: u64,
    pub engine: String,
    pub trajectories: Option<usize>,
    pub workers: usize,
    pub out_dir: PathBuf,
    /// Hash of everything that determines the results (not paths or workers).
    pub run_id: String,
    pub status: &'static str,
    pub error: Option<String>,
    pub artifacts: Vec<PathBuf>,
    pub warnings: Vec<String>,
}

pub fn run_id(
    command: &serde_json::Value,
    config_hash: &str,
    seed: u64,
    engine: &str,
    trajectories: Option<usize>,
) -> String {
    let key = serde_json::json!({
        "command": command,
        "config_hash": config_hash,
        "seed": seed,
        "engine": engine,
        "trajectories": trajectories,
    });
    let digest = Sha256::digest(serde_json::to_vec(&key).expect("json"));
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn path(out: &Path) -> PathBuf {
        out.join("manifest.json")
    }

    pub fn write(&self) -> Result<(), Failure> {
        std::fs::create_dir_all(&self.out_dir)?;
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(Self::path(&self.out_dir), text)?;
        Ok(())
    }
}
