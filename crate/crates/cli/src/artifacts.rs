//! File-based artifact store: atomic writes, content hashing, and one run
//! manifest per subcommand.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const EVENTS_SIDECAR: &str = "latent_truth.json";
pub const FEATURES_BIN: &str = "features.bin";
pub const FEATURES_CSV: &str = "features.csv";
pub const EMBEDDINGS_BIN: &str = "embeddings.bin";
pub const EMBEDDINGS_TSV: &str = "embeddings.tsv";
pub const MODEL_BUNDLE: &str = "model.bundle";
pub const PREDICTIONS_CSV: &str = "predictions.csv";
pub const REPORT_JSON: &str = "report.json";
pub const CALIBRATION_CURVE_CSV: &str = "calibration_curve.csv";
pub const ROLLING_REPORT_JSON: &str = "rolling_report.json";

/// Artifact directory handle.
#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

impl Store {
    pub fn new(root: &Path) -> Result<Store, CliError> {
        std::fs::create_dir_all(root)
            .map_err(|e| CliError::config(format!("cannot create {}: {e}", root.display())))?;
        Ok(Store { root: root.to_path_buf() })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// Write-temp-then-rename so readers never observe partial artifacts.
    pub fn write_atomic(&self, name: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        let tmp = self.root.join(format!(".{name}.tmp"));
        std::fs::write(&tmp, bytes).map_err(CliError::io)?;
        std::fs::rename(&tmp, &path).map_err(CliError::io)?;
        Ok(path)
    }

    /// Reads an artifact, naming the subcommand that produces it when
    /// missing.
    pub fn read(&self, name: &str, produced_by: &str) -> Result<Vec<u8>, CliError> {
        let path = self.path(name);
        std::fs::read(&path).map_err(|_| CliError::MissingArtifact {
            artifact: path.display().to_string(),
            producer: produced_by.to_string(),
        })
    }

    pub fn require(&self, name: &str, produced_by: &str) -> Result<PathBuf, CliError> {
        let path = self.path(name);
        if !path.exists() {
            return Err(CliError::MissingArtifact {
                artifact: path.display().to_string(),
                producer: produced_by.to_string(),
            });
        }
        Ok(path)
    }

    pub fn write_manifest(&self, manifest: &RunManifest) -> Result<(), CliError> {
        let dir = self.root.join("manifests");
        std::fs::create_dir_all(&dir).map_err(CliError::io)?;
        let bytes = serde_json::to_vec_pretty(manifest).map_err(CliError::json)?;
        let tmp = dir.join(format!(".{}.json.tmp", manifest.subcommand));
        let path = dir.join(format!("{}.json", manifest.subcommand));
        std::fs::write(&tmp, bytes).map_err(CliError::io)?;
        std::fs::rename(tmp, path).map_err(CliError::io)?;
        Ok(())
    }
}

/// Provenance record for one subcommand run: enough to reproduce the
/// artifacts (config hash + input hashes + seed). The timestamp is omitted
/// in deterministic mode so repeated runs are byte-identical.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub subcommand: String,
    pub config_hash: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub timestamp: Option<String>,
}

impl RunManifest {
    pub fn new(subcommand: &str, config_hash: String, deterministic: bool) -> RunManifest {
        RunManifest {
            subcommand: subcommand.to_string(),
            config_hash,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
            seed: None,
            timestamp: if deterministic { None } else { Some(now_utc()) },
        }
    }

    pub fn input_file(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        self.inputs.insert(role.to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn output_file(&mut self, role: &str, path: &Path) -> Result<(), CliError> {
        self.outputs.insert(role.to_string(), hash_file(path)?);
        Ok(())
    }
}

pub fn hash_bytes(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("sha256:{:x}", hasher.finalize())
}

pub fn hash_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(CliError::io)?;
    Ok(hash_bytes(&bytes))
}

fn now_utc() -> String {
    let secs = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs() as i64)
        .unwrap_or(0);
    cltv_core::data_model::Timestamp::from_epoch(secs).to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atomic_write_and_hash() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path()).unwrap();
        let path = store.write_atomic("x.bin", b"hello").unwrap();
        assert_eq!(std::fs::read(&path).unwrap(), b"hello");
        let h = hash_file(&path).unwrap();
        assert!(h.starts_with("sha256:"));
        assert_eq!(h, hash_bytes(b"hello"));
    }

    #[test]
    fn missing_artifact_names_producer() {
        let dir = tempfile::tempdir().unwrap();
        let store = Store::new(dir.path()).unwrap();
        let err = store.read("model.bundle", "train").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("model.bundle") && msg.contains("train"), "{msg}");
    }

    #[test]
    fn deterministic_manifest_has_no_timestamp() {
        let m = RunManifest::new("features", "sha256:abc".into(), true);
        let json = serde_json::to_string(&m).unwrap();
        assert!(!json.contains("timestamp"));
        let m2 = RunManifest::new("features", "sha256:abc".into(), false);
        assert!(serde_json::to_string(&m2).unwrap().contains("timestamp"));
    }
}
