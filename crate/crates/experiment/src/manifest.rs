use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::config::Kind;
use crate::error::{RunError, RunResult};
use crate::fsio;
use crate::records::FailureCounts;

/// Written last; its presence marks a finished run.
pub const MANIFEST_FILE: &str = "manifest.json";
/// Written first; a resumed run must match it.
pub const SNAPSHOT_FILE: &str = "run_config.toml";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Artifact {
    /// Relative to the output directory, `/`-separated.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub kind: Kind,
    /// Result-relevant configuration, TOML.
    pub config: String,
    pub code_version: String,
    pub seed: u64,
    pub workers: usize,
    /// RFC 3339.
    pub started: String,
    pub finished: String,
    /// Every file in the output directory except the manifest itself.
    pub artifacts: Vec<Artifact>,
    pub failures: FailureCounts,
    pub notes: Vec<String>,
}

impl RunManifest {
    pub fn load(dir: &Path) -> RunResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path)
            .map_err(|e| RunError::runtime(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| RunError::runtime(format!("{}: {e}", path.display())))
    }

    pub fn checksums(&self) -> BTreeMap<&str, &str> {
        self.artifacts.iter().map(|a| (a.path.as_str(), a.sha256.as_str())).collect()
    }

    /// Recomputes every listed checksum and checks that nothing unlisted
    /// was added.
    pub fn verify(&self, dir: &Path) -> RunResult<()> {
        let present = artifact_paths(dir)?;
        let listed: Vec<&str> = self.artifacts.iter().map(|a| a.path.as_str()).collect();
        if present.iter().map(String::as_str).collect::<Vec<_>>() != listed {
            return Err(RunError::runtime("output directory does not match the manifest file list"));
        }
        for a in &self.artifacts {
            if fsio::sha256_file(&dir.join(&a.path))? != a.sha256 {
                return Err(RunError::runtime(format!("checksum mismatch for {}", a.path)));
            }
        }
        Ok(())
    }
}

fn is_hidden(rel: &str) -> bool {
    rel.rsplit('/').next().is_some_and(|name| name.starts_with('.'))
}

/// Files a manifest must list.
pub fn artifact_paths(dir: &Path) -> RunResult<Vec<String>> {
    Ok(fsio::list_files(dir)?.into_iter().filter(|p| p != MANIFEST_FILE && !is_hidden(p)).collect())
}

pub fn collect_artifacts(dir: &Path) -> RunResult<Vec<Artifact>> {
    artifact_paths(dir)?
        .into_iter()
        .map(|path| {
            let full = dir.join(&path);
            Ok(Artifact { sha256: fsio::sha256_file(&full)?, bytes: std::fs::metadata(&full)?.len(), path })
        })
        .collect()
}
