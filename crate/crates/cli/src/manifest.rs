//! `manifest.json`: the resolved configuration of an output directory and
//! the SHA-256 of every artifact written into it.
//!
//! A manifest can be passed back as `--config` to reproduce the run.

use std::collections::BTreeMap;
use std::fs;
use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: RunConfig,
    /// Paths relative to the output directory, with `/` separators.
    pub files: BTreeMap<String, String>,
}

impl Manifest {
    pub fn new(config: RunConfig) -> Self {
        Self {
            config,
            files: BTreeMap::new(),
        }
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Validation(format!("cannot read manifest {}: {e}", path.display())))?;
        let manifest: Manifest = serde_json::from_str(&text)
            .map_err(|e| CliError::Validation(format!("{}: line {}: {e}", path.display(), e.line())))?;
        manifest
            .config
            .validate()
            .map_err(|(key, msg)| CliError::Validation(format!("{}: {key}: {msg}", path.display())))?;
        Ok(manifest)
    }

    /// The manifest already in `dir` when it was written for `config`,
    /// otherwise a fresh one. Artifacts of other configurations are
    /// forgotten rather than mixed in.
    pub fn open(dir: &Path, config: &RunConfig) -> CliResult<Self> {
        let path = dir.join(MANIFEST_FILE);
        if path.exists() {
            if let Ok(existing) = Manifest::load(&path) {
                if &existing.config == config {
                    return Ok(existing);
                }
            }
        }
        Ok(Manifest::new(config.clone()))
    }

    /// Hashes `dir/rel` and records it.
    pub fn record(&mut self, dir: &Path, rel: &str) -> CliResult<()> {
        let hash = sha256_file(&dir.join(rel))?;
        self.files.insert(rel.to_string(), hash);
        Ok(())
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    }
}

pub fn sha256_file(path: &Path) -> CliResult<String> {
    let mut file = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = file.read(&mut buf).map_err(|e| CliError::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
    }
    Ok(hasher.finalize().iter().map(|b| format!("{b:02x}")).collect())
}

/// Reads a run configuration from a TOML file or from a manifest (any
/// path ending in `.json`).
pub fn load_config(path: &Path) -> CliResult<RunConfig> {
    if path.extension().is_some_and(|e| e == "json") {
        return Ok(Manifest::load(path)?.config);
    }
    let text = fs::read_to_string(path)
        .map_err(|e| CliError::Validation(format!("cannot read config {}: {e}", path.display())))?;
    RunConfig::from_toml(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}
