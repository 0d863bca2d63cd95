use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

/// Everything needed to rerun a command: written next to its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub argv: Vec<String>,
    pub cwd: PathBuf,
    pub inputs: Vec<PathBuf>,
    pub outputs: Vec<PathBuf>,
    pub config: serde_json::Value,
    pub seed: u64,
    pub toolkit_version: String,
    pub config_digest: String,
    pub started_at: String,
    pub finished_at: String,
}

/// `a/b.json` -> `a/b.manifest.json`; a directory gets `manifest.json`.
pub fn manifest_path(out: &Path, out_is_dir: bool) -> PathBuf {
    if out_is_dir {
        return out.join("manifest.json");
    }
    let stem = out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    out.with_file_name(format!("{stem}.manifest.json"))
}

impl RunManifest {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| qabias_core::Error::io(path, e))?;
        let manifest: RunManifest = serde_json::from_str(&text).map_err(|e| qabias_core::Error::Parse {
            path: path.display().to_string(),
            byte: 0,
            message: e.to_string(),
        })?;
        Ok(manifest)
    }
}
