//! JSON run configuration. Unknown keys are rejected and errors carry the
//! path of the offending field.
//!
//! ```json
//! {
//!   "architecture": { "mlp": { "widths": [2, 64, 64, 3] } },
//!   "activation": "pelu",
//!   "param_config": "a_invb",
//!   "optimizer": { "learning_rate": 0.05, "momentum": 0.9, "weight_decay": 0.0 },
//!   "schedule": [ { "epoch": 1, "learning_rate": 0.05, "weight_decay": 0.0 } ],
//!   "epochs": 200,
//!   "batch_size": 64,
//!   "seed": 7,
//!   "dataset": { "blobs": { "n_per_class": 667, "num_classes": 3, "dim": 2, "spread": 0.5 } },
//!   "log_every": 50
//! }
//! ```

use std::path::{Path, PathBuf};

use pelu_core::data::Augment;
use pelu_core::{ActivationKind, ParamConfig, SgdConfig};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

pub const DEFAULT_LOG_EVERY: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum Architecture {
    Mlp {
        widths: Vec<usize>,
    },
    #[serde(rename = "smallnet-lite")]
    SmallnetLite,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ActivationSpec {
    Pelu,
    Elu,
    Relu,
    Lrelu { slope: f64 },
    Prelu,
}

impl From<ActivationSpec> for ActivationKind {
    fn from(spec: ActivationSpec) -> Self {
        match spec {
            ActivationSpec::Pelu => ActivationKind::Pelu,
            ActivationSpec::Elu => ActivationKind::Elu,
            ActivationSpec::Relu => ActivationKind::Relu,
            ActivationSpec::Lrelu { slope } => ActivationKind::LeakyRelu { slope },
            ActivationSpec::Prelu => ActivationKind::Prelu,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamConfigSpec {
    #[serde(rename = "a_b")]
    AB,
    #[default]
    #[serde(rename = "a_invb")]
    AInvB,
    #[serde(rename = "inva_b")]
    InvAB,
    #[serde(rename = "inva_invb")]
    InvAInvB,
}

impl From<ParamConfigSpec> for ParamConfig {
    fn from(spec: ParamConfigSpec) -> Self {
        match spec {
            ParamConfigSpec::AB => ParamConfig::AB,
            ParamConfigSpec::AInvB => ParamConfig::AInvB,
            ParamConfigSpec::InvAB => ParamConfig::InvAB,
            ParamConfigSpec::InvAInvB => ParamConfig::InvAInvB,
        }
    }
}

impl From<ParamConfig> for ParamConfigSpec {
    fn from(config: ParamConfig) -> Self {
        match config {
            ParamConfig::AB => ParamConfigSpec::AB,
            ParamConfig::AInvB => ParamConfigSpec::AInvB,
            ParamConfig::InvAB => ParamConfigSpec::InvAB,
            ParamConfig::InvAInvB => ParamConfigSpec::InvAInvB,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_momentum() -> f64 {
    0.9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSpec {
    pub learning_rate: f64,
    #[serde(default = "default_momentum")]
    pub momentum: f64,
    #[serde(default)]
    pub weight_decay: f64,
    #[serde(default = "default_true")]
    pub decay_on_activation_params: bool,
}

impl From<&OptimizerSpec> for SgdConfig {
    fn from(spec: &OptimizerSpec) -> Self {
        SgdConfig {
            learning_rate: spec.learning_rate,
            momentum: spec.momentum,
            weight_decay: spec.weight_decay,
            decay_on_activation_params: spec.decay_on_activation_params,
        }
    }
}

/// From `epoch` (1-based) onward, use this learning rate and weight decay.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduleEntry {
    pub epoch: usize,
    pub learning_rate: f64,
    pub weight_decay: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    Blobs {
        n_per_class: usize,
        num_classes: usize,
        dim: usize,
        spread: f64,
        /// Held-out samples per class; defaults to a quarter of
        /// `n_per_class`.
        #[serde(default)]
        test_n_per_class: Option<usize>,
    },
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
        /// Subtract the training-split per-pixel mean from both splits.
        #[serde(default = "default_true")]
        mean_subtraction: bool,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AugmentSpec {
    #[default]
    None,
    Hflip,
}

impl From<AugmentSpec> for Augment {
    fn from(spec: AugmentSpec) -> Self {
        match spec {
            AugmentSpec::None => Augment::None,
            AugmentSpec::Hflip => Augment::HFlip,
        }
    }
}

fn default_activation() -> ActivationSpec {
    ActivationSpec::Pelu
}

fn default_log_every() -> usize {
    DEFAULT_LOG_EVERY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub architecture: Architecture,
    #[serde(default = "default_activation")]
    pub activation: ActivationSpec,
    #[serde(default)]
    pub param_config: ParamConfigSpec,
    pub optimizer: OptimizerSpec,
    #[serde(default)]
    pub schedule: Vec<ScheduleEntry>,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub augment: AugmentSpec,
    #[serde(default = "default_log_every")]
    pub log_every: usize,
}

fn invalid(path: &Path, field: &str, message: impl Into<String>) -> CliError {
    CliError::Config {
        path: path.to_path_buf(),
        field: field.to_string(),
        message: message.into(),
    }
}

impl RunConfig {
    /// Semantic checks that the JSON schema cannot express.
    pub fn validate(&self, path: &Path) -> Result<(), CliError> {
        if let Architecture::Mlp { widths } = &self.architecture {
            if widths.len() < 2 || widths.contains(&0) {
                return Err(invalid(
                    path,
                    "architecture.mlp.widths",
                    "need at least two positive widths",
                ));
            }
        }
        if let ActivationSpec::Lrelu { slope } = self.activation {
            if !(slope > 0.0) {
                return Err(invalid(path, "activation.lrelu.slope", "must be positive"));
            }
        }
        SgdConfig::from(&self.optimizer)
            .validate()
            .map_err(|e| invalid(path, "optimizer", e.to_string()))?;
        for (i, entry) in self.schedule.iter().enumerate() {
            let field = format!("schedule[{i}]");
            let expected_min = if i == 0 {
                1
            } else {
                self.schedule[i - 1].epoch + 1
            };
            if i == 0 && entry.epoch != 1 {
                return Err(invalid(
                    path,
                    &format!("{field}.epoch"),
                    "schedule must start at epoch 1",
                ));
            }
            if entry.epoch < expected_min {
                return Err(invalid(
                    path,
                    &format!("{field}.epoch"),
                    "epochs must be strictly increasing",
                ));
            }
            let sgd = SgdConfig {
                learning_rate: entry.learning_rate,
                weight_decay: entry.weight_decay,
                ..SgdConfig::from(&self.optimizer)
            };
            sgd.validate()
                .map_err(|e| invalid(path, &field, e.to_string()))?;
        }
        if self.batch_size == 0 {
            return Err(invalid(path, "batch_size", "must be at least 1"));
        }
        if self.log_every == 0 {
            return Err(invalid(path, "log_every", "must be at least 1"));
        }
        if let DatasetSpec::Blobs {
            n_per_class,
            num_classes,
            dim,
            spread,
            ..
        } = self.dataset
        {
            if n_per_class == 0 || num_classes == 0 || dim == 0 {
                return Err(invalid(
                    path,
                    "dataset.blobs",
                    "counts and dim must be positive",
                ));
            }
            if !(spread >= 0.0) {
                return Err(invalid(
                    path,
                    "dataset.blobs.spread",
                    "must be non-negative",
                ));
            }
        }
        Ok(())
    }

    /// `(learning_rate, weight_decay)` in effect during `epoch`.
    pub fn schedule_at(&self, epoch: usize) -> (f64, f64) {
        self.schedule
            .iter()
            .take_while(|e| e.epoch <= epoch)
            .last()
            .map_or(
                (self.optimizer.learning_rate, self.optimizer.weight_decay),
                |e| (e.learning_rate, e.weight_decay),
            )
    }
}

/// Parses JSON into `T`, reporting the failing field path.
pub fn parse_json<T: DeserializeOwned>(text: &str, path: &Path) -> Result<T, CliError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    serde_path_to_error::deserialize(de).map_err(|err| {
        let field = err.path().to_string();
        invalid(path, &field, err.into_inner().to_string())
    })
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_json(&text, path)
}

pub fn load_run_config(path: &Path) -> Result<RunConfig, CliError> {
    let config: RunConfig = read_json(path)?;
    config.validate(path)?;
    Ok(config)
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{
        "architecture": {"mlp": {"widths": [2, 8, 3]}},
        "optimizer": {"learning_rate": 0.1},
        "epochs": 1, "batch_size": 4, "seed": 1,
        "dataset": {"blobs": {"n_per_class": 5, "num_classes": 3, "dim": 2, "spread": 0.5}}
    }"#;

    fn parse(text: &str) -> Result<RunConfig, CliError> {
        let config: RunConfig = parse_json(text, Path::new("test.json"))?;
        config.validate(Path::new("test.json"))?;
        Ok(config)
    }

    #[test]
    fn defaults() {
        let c = parse(MINIMAL).unwrap();
        assert_eq!(c.activation, ActivationSpec::Pelu);
        assert_eq!(c.param_config, ParamConfigSpec::AInvB);
        assert_eq!(c.log_every, 50);
        assert_eq!(c.optimizer.momentum, 0.9);
        assert!(c.optimizer.decay_on_activation_params);
        assert_eq!(c.schedule_at(3), (0.1, 0.0));
    }

    #[test]
    fn unknown_key_reports_path() {
        let text = MINIMAL.replace(
            "\"learning_rate\": 0.1",
            "\"learning_rate\": 0.1, \"nesterov\": true",
        );
        match parse(&text) {
            Err(CliError::Config { field, message, .. }) => {
                assert_eq!(field, "optimizer.nesterov");
                assert!(message.contains("nesterov"), "{message}");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn wrong_type_reports_nested_path() {
        let text = MINIMAL.replace("\"spread\": 0.5", "\"spread\": \"wide\"");
        match parse(&text) {
            Err(CliError::Config { field, .. }) => assert_eq!(field, "dataset.blobs.spread"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schedule_rules() {
        let with = |s: &str| {
            MINIMAL.replace(
                "\"epochs\": 1",
                &format!("\"schedule\": {s}, \"epochs\": 1"),
            )
        };
        let ok = parse(&with(
            r#"[{"epoch": 1, "learning_rate": 0.1, "weight_decay": 0.0},
                {"epoch": 5, "learning_rate": 0.01, "weight_decay": 0.0005}]"#,
        ))
        .unwrap();
        assert_eq!(ok.schedule_at(4), (0.1, 0.0));
        assert_eq!(ok.schedule_at(5), (0.01, 0.0005));
        assert!(parse(&with(
            r#"[{"epoch": 2, "learning_rate": 0.1, "weight_decay": 0.0}]"#
        ))
        .is_err());
        assert!(parse(&with(
            r#"[{"epoch": 1, "learning_rate": 0.1, "weight_decay": 0.0},
                {"epoch": 1, "learning_rate": 0.1, "weight_decay": 0.0}]"#
        ))
        .is_err());
    }

    #[test]
    fn activation_and_config_spellings() {
        let text = MINIMAL.replace(
            "\"optimizer\"",
            "\"activation\": {\"lrelu\": {\"slope\": 0.1}}, \"param_config\": \"inva_b\", \"optimizer\"",
        );
        let c = parse(&text).unwrap();
        assert_eq!(
            ActivationKind::from(c.activation),
            ActivationKind::LeakyRelu { slope: 0.1 }
        );
        assert_eq!(ParamConfig::from(c.param_config), ParamConfig::InvAB);
        let text = MINIMAL.replace("{\"mlp\": {\"widths\": [2, 8, 3]}}", "\"smallnet-lite\"");
        assert_eq!(
            parse(&text).unwrap().architecture,
            Architecture::SmallnetLite
        );
    }

    #[test]
    fn rejects_bad_values() {
        assert!(parse(&MINIMAL.replace("0.1}", "-0.1}")).is_err());
        assert!(parse(&MINIMAL.replace("\"batch_size\": 4", "\"batch_size\": 0")).is_err());
        assert!(parse(&MINIMAL.replace("[2, 8, 3]", "[2]")).is_err());
    }
}
