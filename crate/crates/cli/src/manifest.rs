use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST_FILE: &str = "manifest.json";

/// Everything needed to regenerate the outputs of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub variant: String,
    pub n_sites: usize,
    pub mode: String,
    pub n_mcs: u64,
    pub n_traj: Option<usize>,
    pub seed: Option<u64>,
    pub prune_epsilon: Option<f64>,
    /// Elemental steps between snapshots.
    pub stride: u64,
    pub observables: Vec<String>,
    pub jackknife_groups: Option<usize>,
    pub memory_budget: Option<u64>,
    pub c_max: Option<usize>,
    /// `uniform-mixture` (exact modes) or `random-site` (trajectories).
    pub site_update: String,
    pub tool_version: String,
    pub input_digests: BTreeMap<String, String>,
    pub timestamp_unix: u64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        RunManifest {
            command: command.to_string(),
            variant: String::new(),
            n_sites: 0,
            mode: String::new(),
            n_mcs: 0,
            n_traj: None,
            seed: None,
            prune_epsilon: None,
            stride: 0,
            observables: Vec::new(),
            jackknife_groups: None,
            memory_budget: None,
            c_max: None,
            site_update: String::new(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            input_digests: BTreeMap::new(),
            timestamp_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }

    pub fn add_input(&mut self, path: &Path) -> Result<()> {
        let digest = file_digest(path)?;
        self.input_digests
            .insert(path.display().to_string(), digest);
        Ok(())
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").with_context(|| format!("writing {}", path.display()))
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))
    }
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
