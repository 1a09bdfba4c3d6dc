//! Experiment configuration: one versioned TOML file per run.
//!
//! Every section rejects unknown keys. Relative input paths are resolved
//! against the directory holding the config file.

use std::path::{Path, PathBuf};

use dbn_ids::balancing::{BalanceRegistry, BalanceSpec};
use dbn_ids::model::{ModelRegistry, ModelSettings};
use dbn_ids::pipeline::PipelineConfig;
use dbn_ids::synthetic::BlobSpec;
use dbn_ids::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub version: u32,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    pub data: DataConfig,
    #[serde(default)]
    pub pipeline: PipelineConfig,
    #[serde(default)]
    pub balance: BalanceSpec,
    #[serde(default)]
    pub model: ModelSettings,
    #[serde(default)]
    pub sweep: SweepConfig,
}

/// Either raw flow CSVs or a generated blob dataset.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    #[serde(default)]
    pub inputs: Vec<PathBuf>,
    pub synthetic: Option<BlobSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub strategies: Vec<String>,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            strategies: ["none", "undersample", "smote", "smote+undersample", "class_weights"]
                .map(String::from)
                .to_vec(),
        }
    }
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("runs")
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads and validates `path`, resolving relative inputs next to it.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })?;
        let base = path.parent().unwrap_or(Path::new(""));
        for input in &mut cfg.data.inputs {
            if input.is_relative() {
                *input = base.join(&*input);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                self.version
            )));
        }
        match (self.data.inputs.is_empty(), &self.data.synthetic) {
            (true, None) => return Err(Error::Config("data needs `inputs` or a `synthetic` table".into())),
            (false, Some(_)) => return Err(Error::Config("data takes `inputs` or `synthetic`, not both".into())),
            _ => {}
        }
        self.pipeline.validate()?;
        self.balance.validate()?;
        let balancers = BalanceRegistry::builtin();
        balancers.get(&self.balance.strategy)?;
        for s in &self.sweep.strategies {
            balancers.get(s)?;
        }
        ModelRegistry::builtin().get(&self.model.kind)?;
        if self.model.hidden_layers.is_empty() || self.model.hidden_layers.contains(&0) {
            return Err(Error::Config("model.hidden_layers must be non-empty and positive".into()));
        }
        Ok(())
    }
}
