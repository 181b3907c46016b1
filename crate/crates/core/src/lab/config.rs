use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{LabError, Result};
use crate::lab::registry;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    #[default]
    Json,
}

impl std::str::FromStr for Format {
    type Err = LabError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            _ => Err(LabError::param("format", format!("expected csv or json, got {s}"))),
        }
    }
}

fn default_n() -> usize {
    100
}

/// One experiment invocation. The seed has no default.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(rename = "N", default)]
    pub big_n: Option<usize>,
    #[serde(default)]
    pub q: Option<usize>,
    #[serde(default)]
    pub trials: Option<usize>,
    pub seed: u64,
    /// Constant overrides, `key=value`.
    #[serde(default)]
    pub set: BTreeMap<String, String>,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub format: Format,
    /// Calibration record for the tolerant experiments.
    #[serde(default)]
    pub calibration: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn new(experiment: &str, seed: u64) -> Self {
        ExperimentConfig {
            experiment: experiment.to_string(),
            n: default_n(),
            big_n: None,
            q: None,
            trials: None,
            seed,
            set: BTreeMap::new(),
            out: None,
            format: Format::default(),
            calibration: None,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self> {
        let cfg: ExperimentConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !registry::is_known(&self.experiment) {
            return Err(LabError::UnknownExperiment(self.experiment.clone()));
        }
        if self.n == 0 {
            return Err(LabError::param("n", "must be positive"));
        }
        Ok(())
    }

    /// Parse `key=value` and store it.
    pub fn push_override(&mut self, kv: &str) -> Result<()> {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| LabError::param("set", format!("expected key=value, got {kv}")))?;
        self.set.insert(k.trim().to_string(), v.trim().to_string());
        Ok(())
    }

    pub fn real(&self, key: &str, default: f64) -> Result<f64> {
        match self.set.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| LabError::param("set", format!("{key} = {v} is not a number"))),
        }
    }

    pub fn count(&self, key: &str, default: usize) -> Result<usize> {
        match self.set.get(key) {
            None => Ok(default),
            Some(v) => v
                .parse()
                .map_err(|_| LabError::param("set", format!("{key} = {v} is not a count"))),
        }
    }

    pub fn text<'a>(&'a self, key: &str, default: &'a str) -> &'a str {
        self.set.get(key).map(String::as_str).unwrap_or(default)
    }

    pub fn trials_or(&self, default: usize) -> usize {
        self.trials.unwrap_or(default)
    }

    pub fn calibration_path(&self) -> PathBuf {
        self.calibration.clone().unwrap_or_else(|| PathBuf::from("calibration.json"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_experiment_rejected() {
        let cfg = ExperimentConfig::new("no-such-thing", 1);
        assert!(matches!(cfg.validate(), Err(LabError::UnknownExperiment(_))));
        assert!(ExperimentConfig::new("verify-tail-bounds", 1).validate().is_ok());
    }

    #[test]
    fn seed_is_mandatory_in_files() {
        let err = serde_json::from_str::<ExperimentConfig>(r#"{"experiment":"verify-tail-bounds"}"#);
        assert!(err.is_err());
        let ok: ExperimentConfig = serde_json::from_str(r#"{"experiment":"verify-tail-bounds","seed":7,"N":64}"#).unwrap();
        assert_eq!((ok.n, ok.big_n, ok.seed), (100, Some(64), 7));
    }

    #[test]
    fn overrides_parse() {
        let mut cfg = ExperimentConfig::new("verify-tail-bounds", 1);
        cfg.push_override("c1 = 0.5").unwrap();
        assert_eq!(cfg.real("c1", 0.0).unwrap(), 0.5);
        assert_eq!(cfg.real("missing", 2.0).unwrap(), 2.0);
        cfg.push_override("bodies=x").unwrap();
        assert!(cfg.count("bodies", 1).is_err());
        assert!(cfg.push_override("novalue").is_err());
    }
}
