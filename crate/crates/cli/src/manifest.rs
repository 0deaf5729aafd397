use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::config::RunConfig;

pub const SEED_PURPOSES: [&str; 6] = ["world", "simulate", "noise", "finetune", "predictor", "split"];

/// Record of one CLI run, written beside its outputs.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub args: Vec<String>,
    pub root_seed: u64,
    pub seeds: BTreeMap<String, u64>,
    pub config_hash: String,
    pub config: RunConfig,
    pub versions: BTreeMap<String, String>,
    pub details: BTreeMap<String, Value>,
    pub outputs: Vec<PathBuf>,
}

impl Manifest {
    pub fn new(command: &str, config: &RunConfig) -> Self {
        let seeds = SEED_PURPOSES
            .iter()
            .map(|p| (p.to_string(), config.derive_seed(p)))
            .collect();
        let mut versions = BTreeMap::new();
        versions.insert("limp".to_string(), env!("CARGO_PKG_VERSION").to_string());
        versions.insert("manifest_format".to_string(), "1".to_string());
        Manifest {
            command: command.to_string(),
            args: std::env::args().skip(1).collect(),
            root_seed: config.seed,
            seeds,
            config_hash: config.hash(),
            config: config.clone(),
            versions,
            details: BTreeMap::new(),
            outputs: Vec::new(),
        }
    }

    pub fn detail(&mut self, key: &str, value: impl Serialize) {
        self.details
            .insert(key.to_string(), serde_json::to_value(value).expect("detail serializes"));
    }

    pub fn output(&mut self, path: &Path) {
        self.outputs.push(path.to_path_buf());
    }

    pub fn write(&self, dir: &Path, name: &str) -> Result<PathBuf> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        let path = dir.join(format!("manifest-{name}.json"));
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}
