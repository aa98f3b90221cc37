//! Flow-matching training and sampling.

mod path;
mod sampler;
mod scheduler;
mod train;

use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

pub use path::{assemble, noising, standard_normal, velocity_loss, velocity_target, BatchItem};
pub use sampler::{ensemble_forecast, euler_integrate, member_noise, sample_batch, ForecastEnsemble, SAMPLE_BATCH};
pub use scheduler::{ks_statistic, normal_cdf, Scheduler, SchedulerKind, T_EPS};
pub use train::{
    chunk_loss_and_grads, evaluate_loss, reduce_chunks, train, Adam, Chunk, EpochRecord, GradientEngine, LrSchedule,
    Sequential, TrainConfig, TrainReport,
};

use crate::model::ModelError;
use crate::tensor::TensorError;

#[derive(Debug, Clone, PartialEq)]
pub enum FlowError {
    Model(ModelError),
    InvalidTime(f64),
    LengthMismatch {
        expected: usize,
        found: usize,
    },
    EmptyBatch,
    EmptyEnsemble,
    /// An Euler iterate became non-finite at this step index.
    NonFinite {
        step: usize,
    },
    /// Training loss became non-finite at this optimizer step.
    Divergence {
        step: usize,
    },
    InvalidConfig(Vec<String>),
}

impl From<ModelError> for FlowError {
    fn from(e: ModelError) -> Self {
        FlowError::Model(e)
    }
}

impl From<TensorError> for FlowError {
    fn from(e: TensorError) -> Self {
        FlowError::Model(ModelError::Tensor(e))
    }
}

impl fmt::Display for FlowError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            FlowError::Model(e) => write!(f, "{e}"),
            FlowError::InvalidTime(t) => write!(f, "flow time {t} outside [0, 1]"),
            FlowError::LengthMismatch { expected, found } => write!(f, "expected length {expected}, found {found}"),
            FlowError::EmptyBatch => f.write_str("empty batch"),
            FlowError::EmptyEnsemble => f.write_str("ensemble size must be at least 1"),
            FlowError::NonFinite { step } => write!(f, "non-finite sample at Euler step {step}"),
            FlowError::Divergence { step } => write!(f, "training loss became non-finite at step {step}"),
            FlowError::InvalidConfig(issues) => write!(f, "invalid flow config: {}", issues.join("; ")),
        }
    }
}

impl core::error::Error for FlowError {}

fn default_one() -> f64 {
    1.0
}
fn default_steps() -> usize {
    5
}
fn default_members() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowConfig {
    #[serde(default)]
    pub scheduler: SchedulerKind,
    #[serde(default)]
    pub loc: f64,
    #[serde(default = "default_one")]
    pub scale: f64,
    #[serde(default = "default_steps")]
    pub sample_steps: usize,
    #[serde(default = "default_members")]
    pub ensemble_size: usize,
}

impl Default for FlowConfig {
    fn default() -> Self {
        FlowConfig {
            scheduler: SchedulerKind::default(),
            loc: 0.0,
            scale: 1.0,
            sample_steps: default_steps(),
            ensemble_size: default_members(),
        }
    }
}

impl FlowConfig {
    pub fn scheduler(&self) -> Scheduler {
        Scheduler {
            kind: self.scheduler,
            loc: self.loc,
            scale: self.scale,
        }
    }

    pub fn issues(&self) -> Vec<String> {
        use alloc::format;
        let mut out = Vec::new();
        if self.sample_steps == 0 {
            out.push(String::from("sample_steps must be at least 1"));
        }
        if self.ensemble_size == 0 {
            out.push(String::from("ensemble_size must be at least 1"));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            out.push(format!("scheduler scale must be positive, got {}", self.scale));
        }
        if !self.loc.is_finite() {
            out.push(format!("scheduler loc must be finite, got {}", self.loc));
        }
        out
    }
}

/// Mixes `salt` into `base` (SplitMix64 finalizer) to derive independent sub-seeds.
pub fn derive_seed(base: u64, salt: u64) -> u64 {
    let mut z = base
        ^ salt
            .wrapping_add(0x9E37_79B9_7F4A_7C15)
            .wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
