use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::audio::VadConfig;
use crate::corpus::SynthConfig;
use crate::error::{Error, Result};
use crate::evaluator::{ProbeConfig, DEFAULT_MAX_TRIALS};
use crate::models::Architecture;
use crate::pipeline::DESK_WIDTH_DIVISOR;
use crate::rng::{self, tags};
use crate::trainer::{PretrainConfig, TrainConfig};

pub const DEFAULT_SEED: u64 = 7;
const TOML_INT_MAX: u64 = i64::MAX as u64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    /// Hidden widths are divided by this; 1 gives the full networks.
    pub width_divisor: usize,
    pub shared_trunk: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            width_divisor: DESK_WIDTH_DIVISOR,
            shared_trunk: true,
        }
    }
}

impl ModelConfig {
    pub fn architecture(&self, classes: usize) -> Architecture {
        let mut a = Architecture::full(classes).narrowed(self.width_divisor);
        a.shared_trunk = self.shared_trunk;
        a
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AudioConfig {
    pub vad: bool,
    pub vad_threshold_db: f64,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig {
            vad: true,
            vad_threshold_db: VadConfig::default().threshold_db,
        }
    }
}

impl AudioConfig {
    pub fn vad(&self) -> Option<VadConfig> {
        self.vad.then(|| VadConfig::with_threshold(self.vad_threshold_db))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvaluateConfig {
    pub max_trials: usize,
    pub probe_steps: usize,
    pub specificity_samples: usize,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        EvaluateConfig {
            max_trials: DEFAULT_MAX_TRIALS,
            probe_steps: ProbeConfig::default().steps,
            specificity_samples: 500,
        }
    }
}

/// Settings of every command, one TOML section per module. Seeds inside
/// sections are derived from the top-level seed when resolved.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub seed: u64,
    pub corpus: SynthConfig,
    pub audio: AudioConfig,
    pub model: ModelConfig,
    pub pretrain: PretrainConfig,
    pub train: TrainConfig,
    pub evaluate: EvaluateConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: DEFAULT_SEED,
            corpus: SynthConfig::default(),
            audio: AudioConfig::default(),
            model: ModelConfig::default(),
            pretrain: PretrainConfig::default(),
            train: TrainConfig::desk(),
            evaluate: EvaluateConfig::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    /// Applies a seed override and derives every component seed.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self> {
        if let Some(s) = seed {
            self.seed = s;
        }
        if self.seed > TOML_INT_MAX {
            return Err(Error::Config(format!("seed must be at most {TOML_INT_MAX}")));
        }
        self.corpus.seed = self.seed;
        self.pretrain.seed = rng::derive_seed(self.seed, &[tags::PRETRAIN]) & TOML_INT_MAX;
        self.train.seed = rng::derive_seed(self.seed, &[tags::BATCH]) & TOML_INT_MAX;
        self.train.validate()?;
        self.pretrain.validate()?;
        self.corpus.validate()?;
        if self.model.width_divisor == 0 {
            return Err(Error::Config("width_divisor must be at least 1".into()));
        }
        Ok(self)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("settings do not serialize: {e}")))
    }
}
