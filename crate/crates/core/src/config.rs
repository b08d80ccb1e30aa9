//! Declarative run configuration, read from TOML.
//!
//! Every section and key is optional; missing values take the defaults
//! below and unknown keys are rejected.
//!
//! ```toml
//! [data]            # input files; all optional
//! labeled = "labeled.jsonl"
//! unlabeled = "unlabeled.jsonl"
//! val = "val.jsonl"
//! test = "test.jsonl"
//!
//! [synthetic]       # generator used when no data files are given
//! counts = [616, 1038, 1248, 1208, 190, 730]
//! widths = { audio = 64, video = 64, text = 64 }
//! noise_sigma = 0.3
//! conflict_rate = 0.2
//! conflict_modalities = ["video", "text"]
//! seed = 0
//!
//! [model]
//! widths = { audio = 64, video = 64, text = 64 }
//! d_model = 128
//! n_heads = 4
//! d_ff = 256
//! n_layers = 2
//! hidden = 128
//! theta_sim = 0.2
//! dropout = 0.1
//!
//! [train]
//! epochs = 30
//! batch_size = 32
//! lr = 0.001
//! seed = 0
//!
//! [semisup]
//! stages = 2
//! threshold = 0.9
//!
//! [vote]
//! hubert_weight = 0.8
//! companion_split = [0.1, 0.1]
//! sensitive_labels = [0, 5]
//! seed = 0
//!
//! [ablation]
//! models = ["baseline", "agt"]
//! feature_sets = ["A+V+T"]
//! strategies = ["N", "P", "P+V"]
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::data::SyntheticSpec;
use crate::error::{Error, Result};
use crate::eval::{AblationConfig, AblationGrid};
use crate::models::{ModelConfig, TrainConfig};
use crate::semisup::SelfTrainConfig;
use crate::vote::VoteConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataPaths {
    pub labeled: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub val: Option<PathBuf>,
    pub test: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataPaths,
    pub synthetic: SyntheticSpec,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub semisup: SelfTrainConfig,
    pub vote: VoteConfig,
    pub ablation: AblationGrid,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config is always representable")
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.vote.validate()?;
        self.ablation.validate()?;
        if !(self.semisup.threshold > 0.0 && self.semisup.threshold <= 1.0) {
            return Err(Error::Config(format!(
                "semisup.threshold must lie in (0, 1], got {}",
                self.semisup.threshold
            )));
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            return Err(Error::Config(
                "train.epochs and train.batch_size must be positive".into(),
            ));
        }
        Ok(())
    }

    pub fn ablation_config(&self) -> AblationConfig {
        AblationConfig {
            grid: self.ablation.clone(),
            model: self.model.clone(),
            train: self.train.clone(),
            semisup: self.semisup.clone(),
            vote: self.vote.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_document_gives_defaults() {
        assert_eq!(RunConfig::from_toml("").unwrap(), RunConfig::default());
    }

    #[test]
    fn documented_example_matches_defaults() {
        let doc: String = include_str!("config.rs")
            .lines()
            .filter_map(|l| l.strip_prefix("//! "))
            .skip_while(|l| !l.starts_with("```toml"))
            .skip(1)
            .take_while(|l| !l.starts_with("```"))
            .map(|l| l.split(" #").next().unwrap().to_string() + "\n")
            .collect();
        let cfg = RunConfig::from_toml(&doc).unwrap();
        let defaults = RunConfig {
            data: DataPaths {
                labeled: Some("labeled.jsonl".into()),
                unlabeled: Some("unlabeled.jsonl".into()),
                val: Some("val.jsonl".into()),
                test: Some("test.jsonl".into()),
            },
            ..Default::default()
        };
        assert_eq!(cfg, defaults);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(RunConfig::from_toml("[train]\nepochz = 3\n").is_err());
        assert!(RunConfig::from_toml("[trainer]\n").is_err());
    }

    #[test]
    fn invalid_values_rejected() {
        assert!(RunConfig::from_toml("[vote]\nhubert_weight = 0.5\n").is_err());
        assert!(RunConfig::from_toml("[semisup]\nthreshold = 0.0\n").is_err());
    }

    #[test]
    fn round_trip() {
        let mut cfg = RunConfig::default();
        cfg.train.epochs = 7;
        cfg.ablation.feature_sets = vec!["A".parse().unwrap(), "A+T".parse().unwrap()];
        assert_eq!(RunConfig::from_toml(&cfg.to_toml()).unwrap(), cfg);
    }
}
