//! Desk-scale diffusion policy machinery: cosine schedule, forward process,
//! a FiLM-conditioned MLP noise predictor with exact gradients, EMA training
//! and a deterministic DDIM sampler.

pub mod condition;
pub mod model;
pub mod sampler;
pub mod schedule;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use condition::{obs_to_condition, ConditionLayout, ConditionVector};
pub use model::{denoiser_backward, denoiser_forward, DenoiserShape, ToyDenoiser};
pub use sampler::{
    ddim_from, ddim_sample, sample_chunk, ActionChunkTensor, AnalyticGaussian, DdimOptions, NoisePredictor,
};
pub use schedule::{cosine_schedule, forward_noise, mse_loss, NoiseSchedule};
pub use train::{ema_update, regress, train_regression, train_toy, ToyExample, TrainConfig, TrainReport};

#[derive(Debug, Error)]
pub enum DiffusionError {
    #[error("diffusion step count must be at least 1, got {0}")]
    InvalidSteps(usize),
    #[error("diffusion step {k} outside 0..={max}")]
    StepOutOfRange { k: usize, max: usize },
    #[error("sampler steps {n_steps} must be in 1..={k_max}")]
    InvalidSampleSteps { n_steps: usize, k_max: usize },
    #[error("shape mismatch: expected {expected}, got {got}")]
    ShapeMismatch { expected: usize, got: usize },
    #[error("non-finite model parameters or outputs")]
    NonFinite,
    #[error("training diverged at step {step} (loss {loss})")]
    Diverged { step: usize, loss: f64 },
    #[error("training dataset is empty")]
    EmptyDataset,
    #[error("EMA decay {0} outside [0, 1)")]
    DecayOutOfRange(f64),
    #[error("checkpoint {path}: {message}")]
    Checkpoint { path: String, message: String },
}

pub const CHECKPOINT_FORMAT: &str = "mobman-toy-denoiser/1";

/// Everything needed to sample from a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format: String,
    pub schedule_steps: usize,
    pub horizon: usize,
    pub condition: ConditionLayout,
    pub train: TrainConfig,
    pub final_loss: Option<f64>,
    pub model: ToyDenoiser,
}

impl Checkpoint {
    pub fn save(&self, path: &Path) -> Result<(), DiffusionError> {
        let err = |m: String| DiffusionError::Checkpoint {
            path: path.display().to_string(),
            message: m,
        };
        let text = serde_json::to_string(self).map_err(|e| err(e.to_string()))?;
        std::fs::write(path, text).map_err(|e| err(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, DiffusionError> {
        let err = |m: String| DiffusionError::Checkpoint {
            path: path.display().to_string(),
            message: m,
        };
        let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
        let c: Checkpoint = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
        if c.format != CHECKPOINT_FORMAT {
            return Err(err(format!("unknown format `{}`", c.format)));
        }
        let n = ToyDenoiser::param_count(&c.model.shape);
        if c.model.params.len() != n || c.model.shadow.len() != n {
            return Err(err("parameter count does not match shape".into()));
        }
        c.model.check_finite()?;
        Ok(c)
    }
}
