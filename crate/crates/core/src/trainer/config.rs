use serde::{Deserialize, Serialize};
use voice2face_tensor::AdamConfig;

use crate::audio::{CROP_MAX_SECONDS, CROP_MIN_SECONDS};
use crate::error::{Error, Result};

/// Adversarial training settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch_voices: usize,
    pub batch_faces: usize,
    pub total_iterations: u64,
    pub seed: u64,
    pub crop_min_seconds: f64,
    pub crop_max_seconds: f64,
    /// 0 disables intermediate checkpoints.
    pub checkpoint_every: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 2e-4,
            beta1: 0.5,
            beta2: 0.999,
            epsilon: 1e-8,
            batch_voices: 128,
            batch_faces: 128,
            total_iterations: 100_000,
            seed: 0,
            crop_min_seconds: CROP_MIN_SECONDS,
            crop_max_seconds: CROP_MAX_SECONDS,
            checkpoint_every: 10_000,
        }
    }
}

impl TrainConfig {
    /// Settings for a single-core machine: small batches and 5000 iterations.
    pub fn desk() -> Self {
        TrainConfig {
            batch_voices: 16,
            batch_faces: 16,
            total_iterations: 5_000,
            checkpoint_every: 1_000,
            ..Self::default()
        }
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: self.epsilon,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_voices < 2 || self.batch_faces < 2 {
            return Err(Error::Config(format!(
                "batch sizes must be at least 2 (got {} voices, {} faces)",
                self.batch_voices, self.batch_faces
            )));
        }
        validate_adam(self.learning_rate, self.beta1, self.beta2, self.epsilon)?;
        validate_crop(self.crop_min_seconds, self.crop_max_seconds)
    }
}

fn validate_adam(lr: f64, b1: f64, b2: f64, eps: f64) -> Result<()> {
    if !(lr > 0.0 && lr.is_finite()) {
        return Err(Error::Config(format!("learning rate must be positive, got {lr}")));
    }
    if !(0.0..1.0).contains(&b1) || !(0.0..1.0).contains(&b2) || b1 == 0.0 || b2 == 0.0 {
        return Err(Error::Config(format!("Adam betas must lie in (0, 1), got {b1} and {b2}")));
    }
    if !(eps > 0.0) {
        return Err(Error::Config("Adam epsilon must be positive".into()));
    }
    Ok(())
}

fn validate_crop(lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::Config(format!("invalid crop bounds {lo}..{hi} seconds")));
    }
    Ok(())
}

/// Speaker-recognition pretraining of the voice embedder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PretrainConfig {
    pub steps: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub seed: u64,
    pub crop_min_seconds: f64,
    pub crop_max_seconds: f64,
}

impl Default for PretrainConfig {
    fn default() -> Self {
        PretrainConfig {
            steps: 2_000,
            batch_size: 32,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            seed: 0,
            crop_min_seconds: CROP_MIN_SECONDS,
            crop_max_seconds: CROP_MAX_SECONDS,
        }
    }
}

impl PretrainConfig {
    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.beta1,
            beta2: self.beta2,
            epsilon: 1e-8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.batch_size < 2 {
            return Err(Error::Config("pretraining batch must hold at least 2 voices".into()));
        }
        validate_adam(self.learning_rate, self.beta1, self.beta2, 1e-8)?;
        validate_crop(self.crop_min_seconds, self.crop_max_seconds)
    }
}
