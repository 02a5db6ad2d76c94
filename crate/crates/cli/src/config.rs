use std::path::{Path, PathBuf};

use flowbridge_core::objectives::TrainConfig;
use flowbridge_core::{canonical_json, ConditionSelector, ModelSpec};
use flowbridge_eval::EvalConfig;
use flowbridge_spectra::BenchmarkConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Everything one pipeline run depends on.
///
/// The top-level `seed` overrides the component seeds when the config is
/// resolved, so a single number pins the whole run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    pub benchmark: BenchmarkConfig,
    pub model: ModelSpec,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub seed: u64,
    pub output_dir: Option<PathBuf>,
}

/// Default spectral model: conditioned blocks see the domain label only.
pub fn default_model_spec() -> ModelSpec {
    let mut spec = ModelSpec::spectral(64, 3);
    for sel in &mut spec.condition_per_block {
        if *sel == ConditionSelector::DomainTissue {
            *sel = ConditionSelector::Domain;
        }
    }
    spec
}

/// Default training setup: adversarial terms weighted 10 against the likelihood terms.
pub fn default_train_config() -> TrainConfig {
    let mut train = TrainConfig::default();
    train.weights.gen_real = 10.0;
    train.weights.gen_sim = 10.0;
    train
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            benchmark: BenchmarkConfig::default(),
            model: default_model_spec(),
            train: default_train_config(),
            eval: EvalConfig::default(),
            seed: 0,
            output_dir: None,
        }
    }
}

impl PipelineConfig {
    /// Reads a JSON config, or the defaults when `path` is `None`.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("invalid config {}: {e}", path.display())))
    }

    /// Copy with the top-level seed pushed into every component.
    pub fn resolved(&self) -> Self {
        let mut c = self.clone();
        c.benchmark.seed = self.seed;
        c.train.seed = self.seed;
        c.eval.seed = self.seed;
        c
    }

    pub fn with_seed(&self, seed: Option<u64>) -> Self {
        let mut c = self.clone();
        if let Some(s) = seed {
            c.seed = s;
        }
        c.resolved()
    }

    /// Structural checks that do not need data.
    pub fn validate(&self) -> Result<Vec<String>> {
        let warnings = self.benchmark.validate()?;
        self.model.validate().map_err(|e| CliError::Usage(e.to_string()))?;
        self.train.validate()?;
        if self.model.tissue_classes != self.benchmark.classes.len() {
            return Err(CliError::Usage(format!(
                "model expects {} tissue classes, benchmark defines {}",
                self.model.tissue_classes,
                self.benchmark.classes.len()
            )));
        }
        Ok(warnings)
    }

    pub fn to_canonical_json(&self) -> String {
        canonical_json(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_json_round_trips() {
        let mut c = PipelineConfig::default();
        c.seed = 17;
        c.train.epochs = 3;
        c.benchmark.n_sim = 123;
        let text = c.to_canonical_json();
        let back: PipelineConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.to_canonical_json(), text);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"seed": 1, "sede": 2}"#).is_err());
        assert!(serde_json::from_str::<PipelineConfig>(r#"{"benchmark": {"n_sims": 2}}"#).is_err());
    }

    #[test]
    fn partial_config_fills_defaults() {
        let c: PipelineConfig = serde_json::from_str(r#"{"seed": 4}"#).unwrap();
        assert_eq!(c.model, default_model_spec());
        let r = c.resolved();
        assert_eq!((r.benchmark.seed, r.train.seed, r.eval.seed), (4, 4, 4));
    }

    #[test]
    fn class_count_must_match_model() {
        let mut c = PipelineConfig::default();
        c.model.tissue_classes = 5;
        assert!(matches!(c.validate(), Err(CliError::Usage(_))));
        assert!(PipelineConfig::default().validate().is_ok());
    }
}
