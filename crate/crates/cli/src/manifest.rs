//! Stage manifest: for each completed stage, a hash of everything it read and
//! the hashes of the files it wrote. No timestamps, so reruns are byte-stable.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub input_hash: String,
    /// Output path relative to the artifact directory, to content hash.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub stages: BTreeMap<String, StageRecord>,
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(hash_bytes(&bytes))
}

/// Accumulates the identity of a stage's inputs.
pub struct InputHasher(Sha256);

impl InputHasher {
    pub fn new(stage: &str) -> Self {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        Self(h)
    }

    pub fn text(&mut self, label: &str, value: &str) {
        self.0.update(label.as_bytes());
        self.0.update((value.len() as u64).to_le_bytes());
        self.0.update(value.as_bytes());
    }

    pub fn file(&mut self, label: &str, path: &Path) -> Result<(), CliError> {
        let h = hash_file(path)?;
        self.text(label, &h);
        Ok(())
    }

    pub fn finish(self) -> String {
        format!("{:x}", self.0.finalize())
    }
}

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST_FILE);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let text = serde_json::to_string_pretty(self).expect("manifest serializes") + "\n";
        std::fs::write(dir.join(MANIFEST_FILE), text).map_err(|e| CliError::Validation(format!("writing manifest: {e}")))
    }

    /// True when the stage ran with the same inputs and its outputs are
    /// still on disk unchanged.
    pub fn is_current(&self, dir: &Path, stage: &str, input_hash: &str) -> bool {
        let Some(rec) = self.stages.get(stage) else { return false };
        rec.input_hash == input_hash
            && rec.outputs.iter().all(|(rel, h)| hash_file(&dir.join(rel)).map(|x| &x == h).unwrap_or(false))
    }

    pub fn record(&mut self, dir: &Path, stage: &str, input_hash: String, outputs: &[String]) -> Result<(), CliError> {
        let mut rec = StageRecord { input_hash, outputs: BTreeMap::new() };
        for rel in outputs {
            rec.outputs.insert(rel.clone(), hash_file(&dir.join(rel))?);
        }
        self.stages.insert(stage.to_string(), rec);
        Ok(())
    }

    pub fn output_hash(&self, stage: &str, rel: &str) -> Option<&str> {
        self.stages.get(stage)?.outputs.get(rel).map(String::as_str)
    }
}
