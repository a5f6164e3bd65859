use serde::{Deserialize, Serialize};

use crate::aggregation::AggregationOp;
use crate::error::{Error, Result};
use crate::model::ModelSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    /// Dataset-specific and aggregated extractors trained together under the
    /// aggregation regulariser, sharing one head.
    Joint,
    /// Every `N_i` on its own dataset, each with its own head.
    BaselineSeparate,
    /// `N*` on the union, with its own head.
    BaselineStar,
}

/// A preset name or an inline architecture.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PresetRef {
    Named(String),
    Inline(ModelSpec),
}

impl PresetRef {
    pub fn resolve(&self) -> Result<ModelSpec> {
        let spec = match self {
            PresetRef::Named(name) => ModelSpec::preset(name)?,
            PresetRef::Inline(spec) => spec.clone(),
        };
        spec.validate()?;
        Ok(spec)
    }
}

fn default_n() -> usize {
    2
}
fn default_preset() -> PresetRef {
    PresetRef::Named("vgg-lite".into())
}
fn default_lr() -> f64 {
    0.01
}
fn default_batch_size() -> usize {
    32
}
fn default_lambda() -> f64 {
    1.0
}
fn default_true() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default = "default_preset")]
    pub preset: PresetRef,
    #[serde(default = "default_lr")]
    pub lr: f64,
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_lambda")]
    pub lambda_agg: f64,
    #[serde(default)]
    pub seed: u64,
    pub mode: Mode,
    /// Dataset directory names under the data root, in `D_1..D_n` order.
    #[serde(default)]
    pub datasets: Vec<String>,
    /// Random horizontal flips of training batches.
    #[serde(default = "default_true")]
    pub hflip: bool,
    #[serde(default)]
    pub aggregation: AggregationOp,
}

impl TrainConfig {
    /// Joint training with the default hyperparameters on the desk preset.
    pub fn joint(epochs: usize, seed: u64) -> Self {
        TrainConfig {
            n: default_n(),
            preset: default_preset(),
            lr: default_lr(),
            epochs,
            batch_size: default_batch_size(),
            lambda_agg: default_lambda(),
            seed,
            mode: Mode::Joint,
            datasets: Vec::new(),
            hflip: true,
            aggregation: AggregationOp::Sum,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: TrainConfig = serde_json::from_str(text).map_err(|e| Error::config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::config(format!("lr must be positive, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.n == 0 {
            return Err(Error::config("n must be at least 1"));
        }
        if !(self.lambda_agg >= 0.0 && self.lambda_agg.is_finite()) {
            return Err(Error::config(format!("lambda_agg must be non-negative, got {}", self.lambda_agg)));
        }
        if !self.datasets.is_empty() && self.datasets.len() != self.n {
            return Err(Error::config(format!("{} datasets listed for n = {}", self.datasets.len(), self.n)));
        }
        self.preset.resolve()?;
        Ok(())
    }
}
