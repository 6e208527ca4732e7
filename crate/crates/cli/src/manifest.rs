//! Run manifest: what was run, on which inputs, with which constants.

use std::collections::BTreeMap;

use serde::Serialize;
use sha2::{Digest, Sha256};

/// SHA-256 of `blob <len>\0<bytes>`, the object hash git uses in SHA-256
/// repositories.
pub fn git_blob_hash(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(format!("blob {}\0", bytes.len()).as_bytes());
    h.update(bytes);
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, Serialize)]
pub struct Outcome {
    pub passed: bool,
    pub detail: String,
}

/// Time grid of one evolution.
#[derive(Clone, Debug, Serialize)]
pub struct RunInfo {
    pub label: String,
    pub epsilon: f64,
    pub dt: f64,
    pub steps: usize,
    pub theta: f64,
    pub dissipation: String,
}

#[derive(Clone, Debug, Serialize)]
pub struct Manifest {
    pub command: String,
    pub version: &'static str,
    pub config: serde_json::Value,
    /// Input name to git-style hash.
    pub inputs: BTreeMap<String, String>,
    pub wall_seconds: f64,
    pub threads: usize,
    pub tolerances: BTreeMap<String, f64>,
    pub constants: BTreeMap<String, f64>,
    pub runs: Vec<RunInfo>,
    pub artifacts: Vec<String>,
    pub outcome: Outcome,
}
