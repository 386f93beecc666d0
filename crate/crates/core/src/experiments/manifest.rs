use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CrystalError, Result};
use crate::experiments::ExperimentConfig;

pub const MANIFEST_NAME: &str = "manifest.json";
pub const RESOLVED_CONFIG_NAME: &str = "resolved_config.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRecord {
    /// Path relative to the run directory.
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub code_version: String,
    pub artifacts: Vec<ArtifactRecord>,
    pub wall_clock_seconds: f64,
    pub workers: usize,
    pub passed: bool,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

impl RunManifest {
    pub fn read(dir: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&std::fs::read_to_string(dir.join(MANIFEST_NAME))?)?)
    }

    /// Paths of artifacts whose digest or size no longer matches.
    pub fn verify(&self, dir: &Path) -> Result<Vec<String>> {
        let mut bad = Vec::new();
        for a in &self.artifacts {
            match std::fs::read(dir.join(&a.path)) {
                Ok(bytes) if bytes.len() as u64 == a.bytes && sha256_hex(&bytes) == a.sha256 => {}
                _ => bad.push(a.path.clone()),
            }
        }
        Ok(bad)
    }
}

/// Single writer for one run directory: records every artifact it writes and
/// finishes with the resolved config and the manifest.
pub struct RunContext {
    command: String,
    dir: PathBuf,
    config_hash: String,
    resolved: String,
    artifacts: Vec<ArtifactRecord>,
    started: Instant,
}

impl RunContext {
    pub fn new(command: &str, dir: &Path, config: &ExperimentConfig) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        let resolved = config.resolved()?.to_json()?;
        Ok(Self {
            command: command.to_string(),
            dir: dir.to_path_buf(),
            config_hash: sha256_hex(resolved.as_bytes()),
            resolved,
            artifacts: Vec::new(),
            started: Instant::now(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        std::fs::write(&path, bytes)?;
        self.record(name)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write(name, s.as_bytes())
    }

    /// Adds a file that was written by someone else (snapshots, checkpoints).
    pub fn record(&mut self, name: &str) -> Result<()> {
        let bytes = std::fs::read(self.path(name))?;
        self.artifacts.retain(|a| a.path != name);
        self.artifacts.push(ArtifactRecord {
            path: name.to_string(),
            sha256: sha256_hex(&bytes),
            bytes: bytes.len() as u64,
        });
        Ok(())
    }

    pub fn finish(mut self, passed: bool) -> Result<RunManifest> {
        let resolved = std::mem::take(&mut self.resolved);
        self.write(RESOLVED_CONFIG_NAME, resolved.as_bytes())?;
        let manifest = RunManifest {
            command: self.command,
            config_hash: self.config_hash,
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            artifacts: self.artifacts,
            wall_clock_seconds: self.started.elapsed().as_secs_f64(),
            workers: rayon::current_num_threads(),
            passed,
        };
        std::fs::write(
            self.dir.join(MANIFEST_NAME),
            serde_json::to_string_pretty(&manifest)?,
        )?;
        Ok(manifest)
    }
}

/// Run directories below `root` that contain a manifest.
pub fn find_runs(root: &Path) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    if root.join(MANIFEST_NAME).is_file() {
        out.push(root.to_path_buf());
    }
    let entries = std::fs::read_dir(root).map_err(|e| {
        CrystalError::Io(std::io::Error::new(e.kind(), format!("{}: {e}", root.display())))
    })?;
    let mut dirs: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_dir())
        .collect();
    dirs.sort();
    for d in dirs {
        out.extend(find_runs(&d)?);
    }
    Ok(out)
}
