//! Run configuration: a TOML file with sections per subsystem, flag
//! overrides on top, and a digest that ties every output artifact back to
//! the exact resolved configuration.

use crate::error::{Error, Result};
use crate::eval::RankingProtocol;
use crate::ingest::IngestConfig;
use crate::losses::LossConfig;
use crate::model::ModelConfig;
use crate::trainer::{Task, TrainConfig};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::Path;

/// The training-loop section of the config file; model/loss/eval live in
/// their own sections.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub batch_size: usize,
    pub lr: f64,
    pub patience: usize,
    pub max_epochs: usize,
    pub task: Task,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        let d = TrainConfig::default();
        Self {
            batch_size: d.batch_size,
            lr: d.lr,
            patience: d.patience,
            max_epochs: d.max_epochs,
            task: d.task,
            seed: d.seed,
        }
    }
}

/// Merged view of all component configurations. Unknown keys anywhere are
/// hard errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// When set, overrides the seed of every component.
    pub seed: Option<u64>,
    pub ingest: IngestConfig,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub loss: LossConfig,
    pub eval: RankingProtocol,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.apply_seed();
        Ok(cfg)
    }

    /// Propagate a global seed into every component.
    pub fn apply_seed(&mut self) {
        if let Some(seed) = self.seed {
            self.ingest.seed = seed;
            self.model.seed = seed;
            self.train.seed = seed;
        }
    }

    pub fn set_seed(&mut self, seed: u64) {
        self.seed = Some(seed);
        self.apply_seed();
    }

    /// Assemble the trainer configuration from the sections.
    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            batch_size: self.train.batch_size,
            lr: self.train.lr,
            patience: self.train.patience,
            max_epochs: self.train.max_epochs,
            task: self.train.task,
            seed: self.train.seed,
            loss: self.loss,
            model: self.model,
            eval_protocol: self.eval,
        }
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Hex SHA-256 of the canonical JSON form.
    pub fn digest(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        let mut hasher = Sha256::new();
        hasher.update(&json);
        hex_string(&hasher.finalize())
    }
}

fn hex_string(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(cfg, back);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let err = toml::from_str::<RunConfig>("definitely_not_a_key = 1").unwrap_err();
        assert!(err.to_string().contains("definitely_not_a_key"));
        let err =
            toml::from_str::<RunConfig>("[model]\nembed_dim = 8\nbogus = true").unwrap_err();
        assert!(err.to_string().contains("bogus"));
    }

    #[test]
    fn sections_parse_and_seed_propagates() {
        let text = r#"
seed = 42

[model]
embed_dim = 16
variant = "Basic+DGF"

[train]
lr = 0.003
task = "ranking"

[loss]
tau = 0.5
"#;
        let mut cfg: RunConfig = toml::from_str(text).unwrap();
        cfg.apply_seed();
        assert_eq!(cfg.model.embed_dim, 16);
        assert_eq!(cfg.model.variant, Variant::BasicDgf);
        assert_eq!(cfg.model.seed, 42);
        assert_eq!(cfg.ingest.seed, 42);
        assert_eq!(cfg.train.seed, 42);
        assert_eq!(cfg.train.lr, 0.003);
        assert_eq!(cfg.loss.tau, 0.5);
    }

    #[test]
    fn digest_is_stable_and_sensitive() {
        let a = RunConfig::default();
        let b = RunConfig::default();
        assert_eq!(a.digest(), b.digest());
        let mut c = RunConfig::default();
        c.model.embed_dim = 8;
        assert_ne!(a.digest(), c.digest());
    }
}
