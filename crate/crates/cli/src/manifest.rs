//! Run manifests: every command records which artifacts it produced, their
//! SHA-256 digests, the digests of the configuration sections that shaped
//! them, and the seeds involved.
//!
//! The manifest is a run log.  Regenerated *artifacts* are byte-identical
//! under fixed seeds; the manifest itself carries a timestamp and is the one
//! file excluded from that contract.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use sha2::{Digest, Sha256};

use crate::{formats::write_text, CliError, Result};

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// One produced file, addressed relative to the manifest's directory.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ArtifactEntry {
    pub path: String,
    pub role: String,
    pub sha256: String,
}

/// Record of a single pipeline command invocation.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RunManifest {
    pub tool_version: String,
    pub command: String,
    /// Wall-clock seconds since the Unix epoch at manifest creation.
    pub created_unix: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub jobs: Option<usize>,
    /// Digests of the canonical TOML serialization of each config section
    /// the command consumed.
    pub config_digests: BTreeMap<String, String>,
    pub artifacts: Vec<ArtifactEntry>,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        let created_unix = SystemTime::now()
            .duration_since(UNIX_EPOCH)
            .map(|d| d.as_secs())
            .unwrap_or(0);
        RunManifest {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            created_unix,
            seed: None,
            jobs: None,
            config_digests: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    /// Digest a config section under its canonical TOML serialization.
    pub fn digest_config<T: serde::Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = toml::to_string(value).map_err(|e| {
            CliError::Format { path: format!("config section {name}"), message: e.to_string() }
        })?;
        self.config_digests.insert(name.into(), sha256_hex(text.as_bytes()));
        Ok(())
    }

    /// Register a file already written under `dir`.
    pub fn add_artifact(&mut self, dir: &Path, name: &str, role: &str) -> Result<()> {
        let full = dir.join(name);
        let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        self.artifacts.push(ArtifactEntry {
            path: name.into(),
            role: role.into(),
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Write `<command>_manifest.toml` into `dir` and return its path.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join(format!("{}_manifest.toml", self.command));
        let text = toml::to_string(self)
            .map_err(|e| CliError::Format { path: path.display().to_string(), message: e.to_string() })?;
        write_text(&path, &text)?;
        Ok(path)
    }
}

/// Re-read a manifest and recompute every artifact digest.
pub fn verify_manifest(path: &Path) -> Result<RunManifest> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let manifest: RunManifest =
        toml::from_str(&text).map_err(|e| CliError::format(path, e.to_string()))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    for artifact in &manifest.artifacts {
        let full = dir.join(&artifact.path);
        let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
        let digest = sha256_hex(&bytes);
        if digest != artifact.sha256 {
            return Err(CliError::format(
                &full,
                format!("digest mismatch: manifest {} vs file {digest}", artifact.sha256),
            ));
        }
    }
    Ok(manifest)
}
