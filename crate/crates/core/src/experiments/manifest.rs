//! `manifest.json`: everything needed to reproduce a run. No timestamps or
//! host details, so identical inputs give byte-identical manifests.

use std::path::Path;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::Result;
use crate::experiments::config::Config;
use crate::experiments::TailBudget;

/// Git-style object hash: `sha256("blob <len>\0" ++ bytes)`.
pub fn blob_sha256(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    hex::encode(h.finalize())
}

/// A reported constant together with the closed form that produced it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConstantEntry {
    pub name: String,
    pub value: f64,
    pub formula: String,
}

impl ConstantEntry {
    pub fn new(name: &str, value: f64, formula: &str) -> Self {
        Self { name: name.into(), value, formula: formula.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub samples: Option<usize>,
    pub inputs: Config,
    pub status: String,
    pub passed: bool,
    pub constants: Vec<ConstantEntry>,
    pub tail_budget: Option<TailBudget>,
    pub outputs: Vec<String>,
    /// Command-specific summary.
    pub summary: serde_json::Value,
}

impl Manifest {
    pub fn new(command: &str, config_text: &str, inputs: &Config) -> Self {
        Self {
            command: command.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            config_sha256: blob_sha256(config_text.as_bytes()),
            seed: inputs.seed,
            samples: inputs.replicas,
            inputs: inputs.clone(),
            status: "ok".into(),
            passed: true,
            constants: Vec::new(),
            tail_budget: None,
            outputs: Vec::new(),
            summary: serde_json::Value::Null,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("manifest serializes");
        s.push('\n');
        s
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::write(dir.join("manifest.json"), self.to_json())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blob_hash_matches_git() {
        // `printf 'hello\n' | git hash-object --object-format=sha256 --stdin`
        assert_eq!(
            blob_sha256(b"hello\n"),
            "2cf8d83d9ee29543b34a87727421fdecb7e3f3a183d337639025de576db9ebb4"
        );
        assert_eq!(blob_sha256(b"").len(), 64);
    }

    #[test]
    fn manifest_is_deterministic() {
        let cfg = Config::default();
        let mut a = Manifest::new("simulate", "schema = 1\n", &cfg);
        a.constants.push(ConstantEntry::new("t_star", 1.5, "x"));
        let b = a.clone();
        assert_eq!(a.to_json(), b.to_json());
        let v: serde_json::Value = serde_json::from_str(&a.to_json()).unwrap();
        assert_eq!(v["inputs"]["grid"]["nx"], 201);
        assert_eq!(v["constants"][0]["formula"], "x");
        assert!(!a.to_json().contains("timestamp"));
    }
}
