use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use costly_auction::MechanismConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

pub const MANIFEST: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_hash: String,
    pub seed: u64,
    /// File names relative to the output directory.
    pub outputs: Vec<String>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    pub config_path: String,
    pub seed: u64,
    pub versions: BTreeMap<String, String>,
    pub stages: BTreeMap<String, StageRecord>,
}

/// SHA-256 of the validated config: files that parse to the same model share a hash.
pub fn config_hash(cfg: &MechanismConfig) -> String {
    let bytes = serde_json::to_vec(cfg).expect("config serializes");
    format!("{:x}", Sha256::digest(bytes))
}

impl RunManifest {
    /// Existing manifest of `dir` with refreshed run fields, or a fresh one.
    pub fn open(dir: &Path, hash: &str, config_path: &str, seed: u64) -> CliResult<Self> {
        let path = dir.join(MANIFEST);
        let stages = if path.exists() {
            let old: RunManifest = serde_json::from_str(&fs::read_to_string(&path)?)
                .map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
            old.stages
        } else {
            BTreeMap::new()
        };
        let versions = BTreeMap::from([
            ("costly-auction".to_string(), costly_auction::VERSION.to_string()),
            ("costly-auction-cli".to_string(), env!("CARGO_PKG_VERSION").to_string()),
        ]);
        Ok(Self {
            config_hash: hash.to_string(),
            config_path: config_path.to_string(),
            seed,
            versions,
            stages,
        })
    }

    /// Fails unless `stage` ran on the current config and its outputs exist.
    pub fn require(&self, dir: &Path, stage: &str) -> CliResult<()> {
        let rec = self.stages.get(stage).ok_or_else(|| {
            CliError::Input(format!("missing artifacts of stage `{stage}`: run `{stage}` first"))
        })?;
        if rec.config_hash != self.config_hash {
            return Err(CliError::Input(format!(
                "stale artifacts of stage `{stage}`: config changed since it ran, rerun `{stage}`"
            )));
        }
        for out in &rec.outputs {
            if !dir.join(out).exists() {
                return Err(CliError::Input(format!(
                    "missing artifact {out} of stage `{stage}`: rerun `{stage}`"
                )));
            }
        }
        Ok(())
    }

    pub fn record(&mut self, stage: &str, outputs: Vec<String>, seconds: f64) {
        self.stages.insert(
            stage.to_string(),
            StageRecord {
                config_hash: self.config_hash.clone(),
                seed: self.seed,
                outputs,
                seconds,
            },
        );
    }

    pub fn save(&self, dir: &Path) -> CliResult<()> {
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}
