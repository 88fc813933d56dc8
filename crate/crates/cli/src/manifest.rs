use std::path::{Path, PathBuf};

use h2ncm_core::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_SCHEMA: &str = "h2ncm-run/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InputHash {
    pub path: PathBuf,
    pub sha256: String,
}

/// Everything needed to replay a command: its argument vector, the
/// effective configuration and the hashes of the files it read.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub command: String,
    pub argv: Vec<String>,
    pub flags: serde_json::Value,
    #[serde(default)]
    pub config: serde_json::Value,
    pub seeds: serde_json::Value,
    pub inputs: Vec<InputHash>,
    pub tool_version: String,
    pub started_at: String,
    #[serde(default)]
    pub finished_at: Option<String>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

/// Hashes of a file or of every regular file directly inside a directory,
/// in name order.
pub fn hash_inputs(paths: &[&Path]) -> Result<Vec<InputHash>> {
    let mut out = Vec::new();
    for p in paths {
        if p.is_dir() {
            let mut files: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.is_file())
                .collect();
            files.sort();
            for f in files {
                out.push(InputHash { sha256: sha256_file(&f)?, path: f });
            }
        } else {
            out.push(InputHash { path: p.to_path_buf(), sha256: sha256_file(p)? });
        }
    }
    Ok(out)
}

impl RunManifest {
    pub fn new(
        command: &str,
        argv: Vec<String>,
        flags: serde_json::Value,
        seeds: serde_json::Value,
        inputs: Vec<InputHash>,
    ) -> Self {
        Self {
            schema: MANIFEST_SCHEMA.into(),
            command: command.into(),
            argv,
            flags,
            config: serde_json::Value::Null,
            seeds,
            inputs,
            tool_version: env!("CARGO_PKG_VERSION").into(),
            started_at: chrono::Utc::now().to_rfc3339(),
            finished_at: None,
        }
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let s = serde_json::to_string_pretty(self)? + "\n";
        std::fs::write(path, s).map_err(|e| Error::io(path, e))
    }

    pub fn finish(mut self, path: &Path) -> Result<()> {
        self.finished_at = Some(chrono::Utc::now().to_rfc3339());
        self.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let m: Self = serde_json::from_str(&s)?;
        if m.schema != MANIFEST_SCHEMA {
            return Err(Error::Schema(format!("expected manifest schema {MANIFEST_SCHEMA}, got '{}'", m.schema)));
        }
        Ok(m)
    }

    /// Fails when an input file changed since the manifest was written.
    pub fn check_inputs(&self) -> Result<()> {
        for i in &self.inputs {
            let now = sha256_file(&i.path)?;
            if now != i.sha256 {
                return Err(Error::Schema(format!("{} changed since the run was recorded", i.path.display())));
            }
        }
        Ok(())
    }
}
