//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::Path;

use serde::{Deserialize, Serialize};

use qgan_core::data::{AnomalySpec, ColumnMap, SynthConfig};
use qgan_core::detect::{DetectionMode, DEFAULT_PERCENTILE};
use qgan_core::qgan::{ClassicalGanConfig, OptimizerKind, TrainConfig, WeightPolicy};
use qgan_core::qsim::{Backend, NoiseModel};
use qgan_core::vqc::CircuitPlan;

use crate::CliError;

/// Environment variable naming the config file used when `--config` is absent.
pub const CONFIG_ENV: &str = "QGAN_CONFIG";

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub data: DataSection,
    pub circuit: CircuitSection,
    pub train: TrainSection,
    pub detect: DetectSection,
    pub synth: SynthSection,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub columns: ColumnMap,
    /// Fraction of the series in the first half of the split.
    pub split_ratio: f64,
    pub granger_alpha: f64,
    pub granger_max_lag: usize,
}

impl Default for DataSection {
    fn default() -> Self {
        Self {
            columns: ColumnMap::default(),
            split_ratio: 0.5,
            granger_alpha: 0.05,
            granger_max_lag: 3,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CircuitSection {
    pub generator: CircuitPlan,
    pub discriminator: CircuitPlan,
    pub classical: ClassicalGanConfig,
}

impl Default for CircuitSection {
    fn default() -> Self {
        Self {
            generator: CircuitPlan::default_generator(),
            discriminator: CircuitPlan::default_discriminator(),
            classical: ClassicalGanConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackendKind {
    #[default]
    Pure,
    Noisy,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub seed: u64,
    pub learning_rate: f64,
    pub epochs: usize,
    pub optimizer: OptimizerKind,
    pub backend: BackendKind,
    pub noise: NoiseModel,
    pub weight_policy: WeightPolicy,
}

impl Default for TrainSection {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            seed: t.seed,
            learning_rate: t.learning_rate,
            epochs: t.epochs,
            optimizer: t.optimizer,
            backend: BackendKind::Pure,
            noise: NoiseModel::default(),
            weight_policy: WeightPolicy::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreSplit {
    /// Only the held-out half of the split.
    #[default]
    Test,
    /// Every window of the input.
    All,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DetectSection {
    pub mode: DetectionMode,
    pub percentile: f64,
    /// Backend used to score; noise parameters come from `train.noise`.
    pub backend: BackendKind,
    pub split: ScoreSplit,
}

impl Default for DetectSection {
    fn default() -> Self {
        Self {
            mode: DetectionMode::Combined,
            percentile: DEFAULT_PERCENTILE,
            backend: BackendKind::Pure,
            split: ScoreSplit::Test,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub seed: u64,
    pub series: SynthConfig,
    pub anomalies: Vec<AnomalySpec>,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            seed: 0,
            series: SynthConfig::default(),
            anomalies: Vec::new(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::input(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text)
            .map_err(|e| CliError::input(format!("invalid config {}: {e}", path.display())))
    }

    /// `--config`, else the environment variable, else built-in defaults.
    pub fn resolve(explicit: Option<&Path>) -> Result<Self, CliError> {
        match explicit {
            Some(p) => Self::load(p),
            None => match std::env::var_os(CONFIG_ENV) {
                Some(p) if !p.is_empty() => Self::load(Path::new(&p)),
                _ => Ok(Self::default()),
            },
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::input(m));
        if !(self.data.split_ratio > 0.0 && self.data.split_ratio < 1.0) {
            return bad(format!("data.split_ratio {} outside (0, 1)", self.data.split_ratio));
        }
        if !(self.data.granger_alpha > 0.0 && self.data.granger_alpha < 1.0) {
            return bad(format!("data.granger_alpha {} outside (0, 1)", self.data.granger_alpha));
        }
        if self.data.granger_max_lag == 0 {
            return bad("data.granger_max_lag must be at least 1".into());
        }
        if !(self.detect.percentile > 0.0 && self.detect.percentile <= 100.0) {
            return bad(format!("detect.percentile {} outside (0, 100]", self.detect.percentile));
        }
        self.train
            .noise
            .validate()
            .map_err(|e| CliError::input(format!("train.noise: {e}")))?;
        self.train_config()
            .validate()
            .map_err(|e| CliError::input(e.to_string()))
    }

    pub fn backend(&self, kind: BackendKind) -> Backend {
        match kind {
            BackendKind::Pure => Backend::Pure,
            BackendKind::Noisy => Backend::Noisy(self.train.noise),
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.train.learning_rate,
            epochs: self.train.epochs,
            seed: self.train.seed,
            backend: self.backend(self.train.backend),
            generator_plan: self.circuit.generator.clone(),
            discriminator_plan: self.circuit.discriminator.clone(),
            optimizer: self.train.optimizer,
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Flattened `section.key = value` pairs; arrays stay as JSON.
    pub fn flatten(&self) -> Vec<(String, String)> {
        fn walk(prefix: &str, v: &serde_json::Value, out: &mut Vec<(String, String)>) {
            match v {
                serde_json::Value::Object(map) => {
                    for (k, child) in map {
                        let key = if prefix.is_empty() {
                            k.clone()
                        } else {
                            format!("{prefix}.{k}")
                        };
                        walk(&key, child, out);
                    }
                }
                serde_json::Value::String(s) => out.push((prefix.to_owned(), s.clone())),
                other => out.push((prefix.to_owned(), other.to_string())),
            }
        }
        let mut out = Vec::new();
        walk("", &serde_json::to_value(self).expect("config serializes"), &mut out);
        out
    }
}
