//! Combined configuration file for the command-line front end.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::degrade::DatasetConfig;
use crate::infer::{RegressionConfig, TopK};
use crate::ordspace::{bin_count, OrdinalEncoderSpec};
use crate::train::TrainConfig;

/// Every section is optional in the JSON file and falls back to defaults.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CliConfig {
    pub dataset: DatasetConfig,
    pub train: TrainConfig,
    pub regression: RegressionConfig,
}

impl CliConfig {
    pub fn from_json(text: &str) -> Result<Self, String> {
        serde_json::from_str(text).map_err(|e| format!("config: {e}"))
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
        Self::from_json(&text)
    }

    pub fn spec(&self) -> OrdinalEncoderSpec {
        self.train.spec()
    }

    pub fn validate(&self) -> Result<(), String> {
        self.dataset.validate().map_err(|e| e.to_string())?;
        self.train.validate().map_err(|e| e.to_string())?;
        let r = &self.regression;
        if !(r.conf_threshold > 0.0 && r.conf_threshold < 1.0) {
            return Err(format!(
                "conf_threshold {} outside (0, 1)",
                r.conf_threshold
            ));
        }
        if !(r.tau_w > 0.0 && r.tau_w.is_finite()) {
            return Err(format!("tau_w {}", r.tau_w));
        }
        if let TopK::Count(k) = r.top_k {
            let bins = bin_count(self.train.gap).map_err(|e| e.to_string())?;
            if k == 0 || k > bins {
                return Err(format!("regression top_k {k} not in 1..={bins}"));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn partial_files_fill_defaults() {
        let c = CliConfig::from_json(r#"{"train": {"epochs": 5}, "regression": {"top_k": "all"}}"#)
            .unwrap();
        assert_eq!(c.train.epochs, 5);
        assert_eq!(c.train.lr, TrainConfig::default().lr);
        assert_eq!(c.regression.top_k, TopK::All);
        c.validate().unwrap();
        assert_eq!(CliConfig::from_json("{}").unwrap(), CliConfig::default());
        assert!(CliConfig::from_json(r#"{"trian": {}}"#).is_err());
        let bad = CliConfig::from_json(r#"{"regression": {"top_k": 50}}"#).unwrap();
        assert!(bad.validate().is_err());
        let round = serde_json::to_string(&c).unwrap();
        assert_eq!(CliConfig::from_json(&round).unwrap(), c);
    }
}
