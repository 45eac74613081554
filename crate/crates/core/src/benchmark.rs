//! The pinned benchmark: generator settings, seeds, sizes and rates shared by
//! the command-line tool and the acceptance tests.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::baselines::BaselineConfig;
use crate::detection::{CpdConfig, StreamConfig};
use crate::error::{CdfError, Result};
use crate::pipeline::StageConfig;
use crate::telemetry::{generate_labeled, GeneratorConfig, LabeledConfig, LabeledDataset};

const BUNDLED: &str = include_str!("../data/benchmark.json");

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchmarkConfig {
    pub generator: GeneratorConfig,
    pub labels: LabeledConfig,
    pub data_seed: u64,
    pub stages: StageConfig,
    pub baselines: BaselineConfig,
    /// First clustering seed; run `r` uses `run_seed + r`.
    pub run_seed: u64,
    pub runs: usize,
    pub repeats: usize,
    pub cpd: CpdConfig,
    pub streams: StreamConfig,
}

impl BenchmarkConfig {
    pub fn bundled() -> Self {
        Self::from_json(BUNDLED).expect("bundled benchmark definition is valid")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let config: BenchmarkConfig = serde_json::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        self.generator.validate()?;
        self.labels.validate()?;
        if self.runs == 0 || self.repeats == 0 {
            return Err(CdfError::InvalidConfig(
                "runs and repeats must be at least 1".into(),
            ));
        }
        if !(self.stages.train_fraction > 0.0 && self.stages.train_fraction < 1.0) {
            return Err(CdfError::InvalidConfig(
                "train_fraction must lie in (0, 1)".into(),
            ));
        }
        Ok(())
    }

    pub fn dataset(&self) -> Result<LabeledDataset> {
        generate_labeled(&self.generator, &self.labels, self.data_seed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_round_trips() {
        let b = BenchmarkConfig::bundled();
        assert_eq!(b.generator.samples, 11886);
        assert_eq!(b.generator.features, 41);
        assert_eq!(b.runs, 25);
        assert_eq!(b.cpd.grid.len(), 15);
        assert_eq!(
            BenchmarkConfig::from_json(&b.to_json().unwrap()).unwrap(),
            b
        );
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let mut v: serde_json::Value = serde_json::from_str(BUNDLED).unwrap();
        v["surprise"] = serde_json::json!(1);
        assert!(BenchmarkConfig::from_json(&v.to_string()).is_err());
    }
}
