//! Whole-pipeline configuration, loaded from one JSON file. Every section
//! and field is optional and falls back to its documented default; unknown
//! keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::EvalMode;
use crate::render::DatasetConfig;
use crate::sample::Partition;
use crate::superpixel::SuperpixelConfig;
use crate::train::TrainConfig;
use crate::unary::Architecture;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalConfig {
    pub mode: EvalMode,
    /// Partition reported by `end-to-end` and used by `eval` by default.
    pub split: Partition,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            mode: EvalMode::Superpixel,
            split: Partition::Test,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReconConfig {
    /// Number of test frames reconstructed by `end-to-end`.
    pub frames: usize,
}

impl Default for ReconConfig {
    fn default() -> Self {
        ReconConfig { frames: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PipelineConfig {
    /// Overrides `render.seed` and `train.seed` when present.
    pub seed: Option<u64>,
    pub render: DatasetConfig,
    pub superpixel: SuperpixelConfig,
    pub unary: Architecture,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub recon: ReconConfig,
}

impl PipelineConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let cfg = cfg.resolved();
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    /// Push the top-level seed into the sections that consume one.
    pub fn resolved(mut self) -> Self {
        if let Some(seed) = self.seed {
            self.render.seed = seed;
            self.train.seed = seed;
        }
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.render.validate()?;
        self.superpixel.validate()?;
        self.unary.validate().map_err(|e| Error::Config(e.to_string()))?;
        self.train.validate()?;
        Ok(())
    }
}
