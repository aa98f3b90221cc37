//! The velocity network and its ablation variants.

mod config;
mod forward;
pub mod layers;
mod params;

pub use config::{AttentionVariant, ConditionVariant, ModelConfig, ModelError, TimeMask};
pub use forward::{DitsModel, ForwardTrace, ModelInput, ParamCountReport};
pub use params::{
    count_by_component, modulation_role, params_matching, AttnProj, BlockParams, FfnParams, Layout, Linear,
    VariateAttnParams, MOD_CHUNKS,
};
