//! Output files with embedded provenance.

use maxstable_abc::Result;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub config_sha256: String,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config_json: &str) -> Self {
        let digest = Sha256::digest(config_json.as_bytes());
        let hex: String = digest.iter().map(|b| format!("{b:02x}")).collect();
        Self {
            tool: "maxabc".into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            seed,
            config_sha256: hex,
        }
    }
}

/// Versioned JSON wrapper around every fitted object.
#[derive(Debug, Serialize, Deserialize)]
pub struct Envelope<T> {
    pub schema_version: u32,
    pub provenance: Provenance,
    pub content: T,
}

pub struct Outputs {
    pub dir: PathBuf,
    pub provenance: Provenance,
    pub written: Vec<PathBuf>,
}

impl Outputs {
    pub fn new(dir: &Path, provenance: Provenance) -> Result<Self> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), provenance, written: Vec::new() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.dir.join(name)
    }

    pub fn json<T: Serialize>(&mut self, name: &str, content: &T) -> Result<PathBuf> {
        let env = Envelope { schema_version: maxstable_abc::pipeline::SCHEMA_VERSION, provenance: self.provenance.clone(), content };
        let path = self.path(name);
        std::fs::write(&path, serde_json::to_string_pretty(&env)? + "\n")?;
        self.written.push(path.clone());
        Ok(path)
    }

    /// Writes a CSV table plus a `<name>.meta.json` provenance sidecar.
    pub fn csv(&mut self, name: &str, body: &str, details: serde_json::Value) -> Result<PathBuf> {
        let path = self.path(name);
        std::fs::write(&path, body)?;
        self.written.push(path.clone());
        self.json(&format!("{name}.meta.json"), &details)?;
        Ok(path)
    }
}

pub fn read_envelope<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Envelope<T>> {
    let text = std::fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}
