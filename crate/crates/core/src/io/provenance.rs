//! Metadata written next to every artifact.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::Result;
use crate::rng::RNG_ALGORITHM;
use crate::CODE_VERSION;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub code_version: String,
    pub command: String,
    pub seed: u64,
    pub rng: String,
    /// Exact configuration of the run.
    pub config: Value,
}

impl Provenance {
    pub fn new(command: &str, seed: u64, config: &impl Serialize) -> Result<Self> {
        Ok(Self {
            code_version: CODE_VERSION.to_string(),
            command: command.to_string(),
            seed,
            rng: RNG_ALGORITHM.to_string(),
            config: serde_json::to_value(config)?,
        })
    }

    /// Sidecar path for a CSV artifact: `x.csv` → `x.csv.provenance.json`.
    pub fn sidecar_path(artifact: &Path) -> PathBuf {
        let mut name = artifact.file_name().map(|n| n.to_os_string()).unwrap_or_default();
        name.push(".provenance.json");
        artifact.with_file_name(name)
    }

    pub fn write_sidecar(&self, artifact: &Path) -> Result<PathBuf> {
        let path = Self::sidecar_path(artifact);
        write_json(&path, self)?;
        Ok(path)
    }
}

/// JSON artifact `{"provenance": …, "data": …}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Artifact<D> {
    pub provenance: Provenance,
    pub data: D,
}

pub fn write_json(path: impl AsRef<Path>, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_artifact<D: Serialize>(path: impl AsRef<Path>, provenance: &Provenance, data: &D) -> Result<()> {
    write_json(path, &Artifact { provenance: provenance.clone(), data })
}
