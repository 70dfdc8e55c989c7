//! Experiment configuration files: structured text (TOML) with `[dataset]`,
//! `[model]`, `[train]` and `[eval]` sections. Every field has a default, so
//! a minimal config only names the dataset path.

use crate::model::ModelConfig;
use crate::synth::DataConfig;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("failed to read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("failed to parse config: {0}")]
    Parse(String),
    #[error("invalid config: {0}")]
    Invalid(String),
}

/// `[dataset]`: where the dataset lives, which fold is held out, and the
/// generation parameters used by `gen-data`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DatasetSection {
    pub path: PathBuf,
    pub eval_fold: u32,
    pub seed: u64,
    pub format: String,
    pub generation: DataConfig,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            path: PathBuf::from("data/benchmark.rfds"),
            eval_fold: 0,
            seed: 1,
            format: "binary".into(),
            generation: DataConfig::default(),
        }
    }
}

/// `[train]`: loop, augmentation, and optimizer/schedule parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSection {
    pub epochs: u32,
    pub batch_size: usize,
    pub seed: u64,
    pub mask_probability: f64,
    pub mask_coverage: (f64, f64),
    pub mask_span: (f64, f64),
    pub noise_sigma: f64,
    /// Train-time rotation perturbation in radians (0 = exact rotations).
    pub rotation_noise: f64,
    pub base_lr: f64,
    pub max_lr: f64,
    pub lr_decay: f64,
    pub weight_decay: f64,
    pub keep_epoch_checkpoints: bool,
}

impl Default for TrainSection {
    fn default() -> Self {
        TrainSection {
            epochs: 30,
            batch_size: 32,
            seed: 7,
            mask_probability: 0.5,
            mask_coverage: (0.5, 0.6),
            mask_span: (0.05, 0.30),
            noise_sigma: 0.01,
            rotation_noise: 0.0,
            base_lr: 1e-6,
            max_lr: 1e-3,
            lr_decay: 0.5,
            weight_decay: 1e-6,
            keep_epoch_checkpoints: false,
        }
    }
}

/// `[eval]`: split selection and the noise-sweep levels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalSection {
    pub split: String,
    pub noise_levels: Vec<f64>,
    pub noise_seed: u64,
    pub dump_per_sample: bool,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            split: "unseen".into(),
            noise_levels: vec![0.0, 0.02, 0.05, 0.1],
            noise_seed: 17,
            dump_per_sample: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub dataset: DatasetSection,
    pub model: ModelConfig,
    pub train: TrainSection,
    pub eval: EvalSection,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.train.epochs == 0 || self.train.batch_size == 0 {
            return Err(ConfigError::Invalid(
                "epochs and batch_size must be positive".into(),
            ));
        }
        let (clo, chi) = self.train.mask_coverage;
        if !(0.0..=1.0).contains(&clo) || !(0.0..=1.0).contains(&chi) || clo > chi {
            return Err(ConfigError::Invalid(format!(
                "mask_coverage must be an ordered pair inside [0,1], got ({clo}, {chi})"
            )));
        }
        if !(0.0..=1.0).contains(&self.train.mask_probability) {
            return Err(ConfigError::Invalid(
                "mask_probability must be in [0,1]".into(),
            ));
        }
        if self.train.base_lr <= 0.0 || self.train.max_lr < self.train.base_lr {
            return Err(ConfigError::Invalid("need 0 < base_lr <= max_lr".into()));
        }
        if self.train.rotation_noise < 0.0 {
            return Err(ConfigError::Invalid("rotation_noise must be >= 0".into()));
        }
        match self.eval.split.as_str() {
            "seen" | "unseen" | "all" => {}
            other => {
                return Err(ConfigError::Invalid(format!(
                    "eval split must be seen|unseen|all, got {other:?}"
                )))
            }
        }
        self.model
            .validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(())
    }

    /// SHA-256 of the canonical serialization, as lowercase hex.
    pub fn hash_hex(&self) -> String {
        self.hash_bytes().iter().map(|b| format!("{b:02x}")).collect()
    }

    pub fn hash_bytes(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update(self.to_toml().as_bytes());
        hasher.finalize().into()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Variant;

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = cfg.to_toml();
        let parsed = ExperimentConfig::parse(&text).unwrap();
        assert_eq!(cfg, parsed);
    }

    #[test]
    fn minimal_config_parses_with_defaults() {
        let cfg = ExperimentConfig::parse(
            r#"
[dataset]
path = "bench.rfds"

[model]
variant = "mlp_encoding"
blocks = 2
"#,
        )
        .unwrap();
        assert_eq!(cfg.dataset.path, PathBuf::from("bench.rfds"));
        assert_eq!(cfg.model.variant, Variant::MlpEncoding);
        assert_eq!(cfg.model.blocks, 2);
        assert_eq!(cfg.train.epochs, 30);
    }

    #[test]
    fn hash_changes_with_content() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.train.seed = 1234;
        assert_ne!(a.hash_hex(), b.hash_hex());
        assert_eq!(a.hash_hex(), ExperimentConfig::default().hash_hex());
    }

    #[test]
    fn invalid_sections_are_rejected() {
        assert!(ExperimentConfig::parse("[train]\nepochs = 0\n").is_err());
        assert!(ExperimentConfig::parse("[train]\nmask_coverage = [0.9, 0.1]\n").is_err());
        assert!(ExperimentConfig::parse("[eval]\nsplit = \"bogus\"\n").is_err());
        assert!(ExperimentConfig::parse("[model]\nalpha = 0.0\n").is_err());
    }
}
