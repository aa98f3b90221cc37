use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

/// Which mechanism replaces the Time + Variate attention pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AttentionVariant {
    /// Shared time attention per variate, then joint variate attention per patch.
    #[default]
    Dits,
    /// One attention over the flattened `N·(1+C)` token grid.
    TimerXl,
    /// Time attention on the target with covariate series tokens as prefix keys/values.
    Prefix,
    /// Time attention on the target plus cross-attention to covariate series tokens.
    Timexer,
    /// Attention over `1+C` whole-series tokens.
    Itransformer,
}

/// How the covariates and the diffusion time steer the target stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionVariant {
    /// Joint variate attention plus AdaLN modulation.
    #[default]
    Dits,
    /// Time and covariate tokens appended to the attention sequence, no AdaLN.
    Joint,
    /// Target cross-attends to time and covariate tokens, no AdaLN.
    Cross,
    /// AdaLN only, no covariate stream.
    Adaln,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeMask {
    #[default]
    Full,
    Causal,
}

macro_rules! named_enum {
    ($ty:ty, $($name:literal => $val:expr),+ $(,)?) => {
        impl $ty {
            pub const ALL: &'static [$ty] = &[$($val),+];

            pub fn name(self) -> &'static str {
                match self {
                    $(v if v == $val => $name,)+
                    _ => unreachable!(),
                }
            }
        }

        impl FromStr for $ty {
            type Err = ModelError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                match s {
                    $($name => Ok($val),)+
                    other => Err(ModelError::UnknownVariant(String::from(other))),
                }
            }
        }

        impl fmt::Display for $ty {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.name())
            }
        }
    };
}

named_enum!(AttentionVariant,
    "dits" => AttentionVariant::Dits,
    "timexer" => AttentionVariant::Timexer,
    "prefix" => AttentionVariant::Prefix,
    "timer-xl" => AttentionVariant::TimerXl,
    "itransformer" => AttentionVariant::Itransformer,
);

named_enum!(ConditionVariant,
    "dits" => ConditionVariant::Dits,
    "cross" => ConditionVariant::Cross,
    "joint" => ConditionVariant::Joint,
    "adaln" => ConditionVariant::Adaln,
);

named_enum!(TimeMask,
    "full" => TimeMask::Full,
    "causal" => TimeMask::Causal,
);

fn default_patch_len() -> usize {
    24
}

/// Architecture hyperparameters. `hist_len` is the padded history length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    /// Defaults to `4 · d_model` when absent.
    #[serde(default)]
    pub d_ff: Option<usize>,
    #[serde(default = "default_patch_len")]
    pub patch_len: usize,
    pub n_cov: usize,
    pub hist_len: usize,
    pub horizon: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub attention: AttentionVariant,
    #[serde(default)]
    pub condition: ConditionVariant,
    #[serde(default)]
    pub time_mask: TimeMask,
    /// Separate modulation MLP for the covariate stream.
    #[serde(default)]
    pub per_stream_modulation: bool,
}

impl ModelConfig {
    pub fn d_ff(&self) -> usize {
        self.d_ff.unwrap_or(4 * self.d_model)
    }

    pub fn total_len(&self) -> usize {
        self.hist_len + self.horizon
    }

    /// Patch tokens per variate.
    pub fn n_patches(&self) -> usize {
        self.total_len() / self.patch_len
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }

    /// Whether sub-layers are modulated from the conditioning embedding.
    pub fn uses_adaln(&self) -> bool {
        matches!(self.condition, ConditionVariant::Dits | ConditionVariant::Adaln)
    }

    /// Whether covariates are carried as a patch-token stream.
    pub fn has_cov_stream(&self) -> bool {
        self.condition == ConditionVariant::Dits
            && matches!(self.attention, AttentionVariant::Dits | AttentionVariant::TimerXl)
    }

    /// Side length of the main attention score matrix for one query set.
    pub fn attention_extent(&self) -> usize {
        let n = self.n_patches();
        let v = 1 + self.n_cov;
        match (self.attention, self.condition) {
            (AttentionVariant::TimerXl, _) => n * v,
            (AttentionVariant::Itransformer, _) => v,
            (_, ConditionVariant::Joint) => n + 1 + self.n_cov,
            _ => n,
        }
    }

    /// Every violated constraint, not just the first.
    pub fn validate(&self) -> Result<(), ModelError> {
        let mut issues = Vec::new();
        if self.d_model == 0 {
            issues.push(String::from("d_model must be positive"));
        }
        if !self.d_model.is_multiple_of(2) {
            issues.push(format!(
                "d_model = {} must be even for the sinusoidal time encoding",
                self.d_model
            ));
        }
        if self.n_heads == 0 || !self.d_model.is_multiple_of(self.n_heads.max(1)) {
            issues.push(format!(
                "d_model = {} is not divisible by n_heads = {}",
                self.d_model, self.n_heads
            ));
        }
        if self.n_layers == 0 {
            issues.push(String::from("n_layers must be positive"));
        }
        if self.d_ff() == 0 {
            issues.push(String::from("d_ff must be positive"));
        }
        if self.patch_len == 0 {
            issues.push(String::from("patch_len must be positive"));
        } else {
            if self.hist_len == 0 || !self.hist_len.is_multiple_of(self.patch_len) {
                issues.push(format!(
                    "padded history {} must be a positive multiple of patch_len {}",
                    self.hist_len, self.patch_len
                ));
            }
            if self.horizon == 0 || !self.horizon.is_multiple_of(self.patch_len) {
                issues.push(format!(
                    "horizon {} must be a positive multiple of patch_len {}",
                    self.horizon, self.patch_len
                ));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            issues.push(format!("dropout {} must lie in [0, 1)", self.dropout));
        }
        if self.attention != AttentionVariant::Dits && self.condition != ConditionVariant::Dits {
            issues.push(format!(
                "attention variant {} can only be combined with the dits condition variant, got {}",
                self.attention, self.condition
            ));
        }
        if self.per_stream_modulation && !self.has_cov_stream() {
            issues.push(String::from("per_stream_modulation requires a covariate stream"));
        }
        if issues.is_empty() {
            Ok(())
        } else {
            Err(ModelError::InvalidConfig(issues))
        }
    }

    /// A small configuration, mostly for tests.
    pub fn tiny(n_cov: usize, hist_len: usize, horizon: usize, patch_len: usize) -> Self {
        ModelConfig {
            d_model: 8,
            n_layers: 1,
            n_heads: 2,
            d_ff: None,
            patch_len,
            n_cov,
            hist_len,
            horizon,
            dropout: 0.0,
            attention: AttentionVariant::Dits,
            condition: ConditionVariant::Dits,
            time_mask: TimeMask::Full,
            per_stream_modulation: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ModelError {
    Tensor(crate::tensor::TensorError),
    InvalidConfig(Vec<String>),
    UnknownVariant(String),
    InputShape { expected: String, found: String },
    ParamMismatch(String),
}

impl From<crate::tensor::TensorError> for ModelError {
    fn from(e: crate::tensor::TensorError) -> Self {
        ModelError::Tensor(e)
    }
}

impl fmt::Display for ModelError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ModelError::Tensor(e) => write!(f, "{e}"),
            ModelError::InvalidConfig(issues) => write!(f, "invalid model config: {}", issues.join("; ")),
            ModelError::UnknownVariant(v) => write!(f, "unknown variant name {v:?}"),
            ModelError::InputShape { expected, found } => {
                write!(f, "model input shape mismatch: expected {expected}, found {found}")
            }
            ModelError::ParamMismatch(m) => write!(f, "parameter mismatch: {m}"),
        }
    }
}

impl core::error::Error for ModelError {}
