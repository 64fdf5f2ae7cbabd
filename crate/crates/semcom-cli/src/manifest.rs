//! Per-command provenance manifests: config hash, seed, and checksums of
//! every artifact the command wrote.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

#[derive(Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
    pub counts: BTreeMap<String, u64>,
    pub artifacts: Vec<Artifact>,
}

#[derive(Debug, Serialize)]
pub struct Artifact {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    hex_string(&hasher.finalize())
}

fn hex_string(digest: &[u8]) -> String {
    digest.iter().map(|b| format!("{b:02x}")).collect()
}

impl Manifest {
    pub fn new(command: &str, seed: u64, config_bytes: &[u8]) -> Self {
        Manifest {
            command: command.to_string(),
            seed,
            config_sha256: sha256_hex(config_bytes),
            counts: BTreeMap::new(),
            artifacts: Vec::new(),
        }
    }

    pub fn count(&mut self, name: &str, value: u64) {
        self.counts.insert(name.to_string(), value);
    }

    /// Records a written artifact; `path` must be inside `out_dir`.
    pub fn artifact(&mut self, out_dir: &Path, path: &Path) -> Result<()> {
        let bytes = fs::read(path)
            .with_context(|| format!("cannot hash artifact {}", path.display()))?;
        let rel = path
            .strip_prefix(out_dir)
            .unwrap_or(path)
            .to_string_lossy()
            .into_owned();
        self.artifacts.push(Artifact {
            path: rel,
            bytes: bytes.len() as u64,
            sha256: sha256_hex(&bytes),
        });
        Ok(())
    }

    /// Writes `manifest-<command>.toml` into the output directory.
    pub fn write(mut self, out_dir: &Path) -> Result<()> {
        self.artifacts.sort_by(|a, b| a.path.cmp(&b.path));
        let path = out_dir.join(format!("manifest-{}.toml", self.command));
        let text = toml::to_string_pretty(&self).context("manifest serialization")?;
        fs::write(&path, text)
            .with_context(|| format!("cannot write manifest {}", path.display()))?;
        Ok(())
    }
}
