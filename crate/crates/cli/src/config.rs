//! Flat TOML run configuration.

use std::path::Path;

use mssnet_core::loss::LossConfig;
use mssnet_core::model::{preset, ModelConfig};
use mssnet_core::train::{Precision, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

/// Every key a config file may contain. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Preset name, see `mssnet_core::model::PRESETS`.
    pub variant: String,
    pub seed: u64,
    pub iters: usize,
    pub batch: usize,
    pub patch: usize,
    pub lr_init: f64,
    pub lr_final: f64,
    pub flips: bool,
    /// `"f32"` or `"f64"`.
    pub precision: String,
    pub lambda: f64,
    pub frequency: bool,
    /// Write a checkpoint every this many iterations; 0 saves only at the end.
    pub checkpoint_every: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        RunConfig {
            variant: "tiny".into(),
            seed: t.seed,
            iters: t.total_iters,
            batch: t.batch,
            patch: t.patch,
            lr_init: t.lr_init,
            lr_final: t.lr_final,
            flips: t.flips,
            precision: "f32".into(),
            lambda: t.loss.lambda,
            frequency: t.loss.frequency,
            checkpoint_every: 0,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::Config {
            path: origin.into(),
            detail: e.message().to_string(),
        })?;
        cfg.check(origin)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("flat config always serializes")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_toml()).map_err(|e| CliError::io(path, e))
    }

    fn check(&self, origin: &Path) -> Result<()> {
        let bad = |detail: String| CliError::Config {
            path: origin.into(),
            detail,
        };
        self.precision()
            .ok_or_else(|| bad(format!("precision must be \"f32\" or \"f64\", got {:?}", self.precision)))?;
        let model = self.model_config().map_err(|e| bad(e.to_string()))?;
        self.train_config()
            .expect("precision checked")
            .validate(model.size_multiple())
            .map_err(|e| bad(e.to_string()))
    }

    pub fn precision(&self) -> Option<Precision> {
        match self.precision.as_str() {
            "f32" => Some(Precision::F32),
            "f64" => Some(Precision::F64),
            _ => None,
        }
    }

    pub fn model_config(&self) -> mssnet_core::Result<ModelConfig> {
        preset(&self.variant)
    }

    pub fn train_config(&self) -> Option<TrainConfig> {
        Some(TrainConfig {
            lr_init: self.lr_init,
            lr_final: self.lr_final,
            total_iters: self.iters,
            batch: self.batch,
            patch: self.patch,
            flips: self.flips,
            seed: self.seed,
            precision: self.precision()?,
            loss: LossConfig {
                lambda: self.lambda,
                frequency: self.frequency,
                ..LossConfig::default()
            },
            ..TrainConfig::default()
        })
    }
}
