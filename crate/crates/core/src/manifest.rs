//! Run manifests: every artifact directory records the command, effective
//! config, seed, and content hashes of its inputs and outputs. No
//! timestamps, so re-running a manifest reproduces the directory
//! byte-for-byte.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_SCHEMA: &str = "longcap-manifest/1";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunManifest {
    pub schema: String,
    pub tool_version: String,
    pub command: String,
    /// Full argument vector, so the run can be replayed verbatim.
    pub argv: Vec<String>,
    pub seed: Option<u64>,
    pub config: serde_json::Value,
    /// Input path -> sha256.
    pub inputs: BTreeMap<String, String>,
    /// Output path (relative to the manifest directory) -> sha256.
    pub outputs: BTreeMap<String, String>,
}

impl RunManifest {
    pub fn new(command: &str, argv: Vec<String>, seed: Option<u64>, config: serde_json::Value) -> Self {
        RunManifest {
            schema: MANIFEST_SCHEMA.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            argv,
            seed,
            config,
            inputs: BTreeMap::new(),
            outputs: BTreeMap::new(),
        }
    }

    pub fn record_input(&mut self, label: &str, path: &Path) -> std::io::Result<()> {
        self.inputs
            .insert(label.to_string(), hash_file(path)?);
        Ok(())
    }

    pub fn record_output(&mut self, name: &str, path: &Path) -> std::io::Result<()> {
        self.outputs.insert(name.to_string(), hash_file(path)?);
        Ok(())
    }

    /// Write `manifest.json` into `dir`.
    pub fn save(&self, dir: &Path) -> std::io::Result<()> {
        let body = serde_json::to_string_pretty(self).expect("manifest serializes");
        std::fs::write(dir.join(MANIFEST_FILE), body + "\n")
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let body = std::fs::read_to_string(path)?;
        let m: RunManifest = serde_json::from_str(&body)?;
        anyhow::ensure!(m.schema == MANIFEST_SCHEMA, "unknown manifest schema {}", m.schema);
        Ok(m)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

pub fn hash_file(path: &Path) -> std::io::Result<String> {
    Ok(sha256_hex(&std::fs::read(path)?))
}
