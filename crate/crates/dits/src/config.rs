//! Run configuration: one TOML document, unknown keys rejected at every level.

use std::path::{Path, PathBuf};

use dits_core::data::{synth, EndogenousSpec, FutureMode, SplitMode, WindowSpec};
use dits_core::flow::{FlowConfig, TrainConfig};
use dits_core::metrics::{AggregateMode, DEFAULT_LEVELS};
use dits_core::model::{AttentionVariant, ConditionVariant, ModelConfig, ModelError, TimeMask};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{io_err, Error, Result};
use crate::ingest::Manifest;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    Csv {
        manifest: PathBuf,
    },
    /// Target is a weighted sum of known-future sinusoidal covariates plus noise.
    CovariateRegression {
        seed: u64,
        length: usize,
        n_cov: usize,
        /// All ones when absent.
        #[serde(default)]
        weights: Option<Vec<f64>>,
        /// Normalized-MSE noise floor; sets the noise level.
        #[serde(default = "default_floor")]
        floor: f64,
    },
    /// Seasonal signal plus AR(1) noise, no covariates.
    Endogenous {
        seed: u64,
        length: usize,
        #[serde(default = "default_periods")]
        periods: Vec<f64>,
        #[serde(default = "default_amplitudes")]
        amplitudes: Vec<f64>,
        #[serde(default)]
        ar_coef: f64,
        #[serde(default = "default_noise")]
        noise_sigma: f64,
    },
}

fn default_floor() -> f64 {
    0.04
}
fn default_periods() -> Vec<f64> {
    EndogenousSpec::default().periods
}
fn default_amplitudes() -> Vec<f64> {
    EndogenousSpec::default().amplitudes
}
fn default_noise() -> f64 {
    EndogenousSpec::default().noise_sigma
}

impl DataSource {
    pub fn name(&self) -> String {
        match self {
            DataSource::Csv { manifest } => manifest
                .file_stem()
                .map_or_else(|| String::from("csv"), |s| s.to_string_lossy().into_owned()),
            DataSource::CovariateRegression { .. } => String::from("covariate-regression"),
            DataSource::Endogenous { .. } => String::from("endogenous"),
        }
    }

    pub fn weights(&self) -> Option<Vec<f64>> {
        match self {
            DataSource::CovariateRegression { n_cov, weights, .. } => {
                Some(weights.clone().unwrap_or_else(|| vec![1.0; *n_cov]))
            }
            _ => None,
        }
    }

    pub fn noise_sigma(&self) -> Option<f64> {
        match self {
            DataSource::CovariateRegression { floor, .. } => Some(synth::noise_sigma_for_floor(
                &self.weights().unwrap_or_default(),
                *floor,
            )),
            _ => None,
        }
    }

    /// Covariate count, reading the manifest for CSV sources.
    pub fn n_cov(&self) -> Result<usize> {
        match self {
            DataSource::Csv { manifest } => Ok(Manifest::load(manifest)?.covariates.len()),
            DataSource::CovariateRegression { n_cov, .. } => Ok(*n_cov),
            DataSource::Endogenous { .. } => Ok(0),
        }
    }

    fn issues(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            DataSource::Csv { .. } => {}
            DataSource::CovariateRegression {
                n_cov,
                weights,
                floor,
                length,
                ..
            } => {
                if let Some(w) = weights {
                    if w.len() != *n_cov {
                        out.push(format!("data.weights has {} entries for n_cov = {n_cov}", w.len()));
                    }
                }
                if *n_cov == 0 {
                    out.push(String::from("data.n_cov must be positive for covariate regression"));
                }
                if !(*floor > 0.0 && *floor < 1.0) {
                    out.push(format!("data.floor = {floor} must lie in (0, 1)"));
                }
                if *length == 0 {
                    out.push(String::from("data.length must be positive"));
                }
            }
            DataSource::Endogenous {
                periods,
                amplitudes,
                ar_coef,
                length,
                ..
            } => {
                if periods.len() != amplitudes.len() {
                    out.push(String::from("data.periods and data.amplitudes differ in length"));
                }
                if ar_coef.abs() >= 1.0 {
                    out.push(format!("data.ar_coef = {ar_coef} must lie in (-1, 1)"));
                }
                if *length == 0 {
                    out.push(String::from("data.length must be positive"));
                }
            }
        }
        out
    }
}

fn one() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WindowConfig {
    pub history: usize,
    pub horizon: usize,
    /// Training stride.
    #[serde(default = "one")]
    pub stride: usize,
    /// Validation and test stride; the horizon when absent.
    #[serde(default)]
    pub eval_stride: Option<usize>,
    #[serde(default)]
    pub future: FutureMode,
}

impl WindowConfig {
    pub fn spec(&self, patch_len: usize) -> WindowSpec {
        WindowSpec {
            history: self.history,
            horizon: self.horizon,
            stride: self.stride,
            patch_len,
            future: self.future,
        }
    }

    pub fn eval_spec(&self, patch_len: usize) -> WindowSpec {
        WindowSpec {
            stride: self.eval_stride.unwrap_or(self.horizon),
            ..self.spec(patch_len)
        }
    }
}

fn default_train_frac() -> f64 {
    0.7
}
fn default_test_frac() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitConfig {
    #[serde(default = "default_train_frac")]
    pub train: f64,
    #[serde(default = "default_test_frac")]
    pub test: f64,
    #[serde(default)]
    pub mode: SplitMode,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train: default_train_frac(),
            test: default_test_frac(),
            mode: SplitMode::default(),
        }
    }
}

fn default_d_model() -> usize {
    64
}
fn default_layers() -> usize {
    2
}
fn default_heads() -> usize {
    4
}
fn default_patch() -> usize {
    24
}

/// Model hyperparameters that do not depend on the data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArchConfig {
    #[serde(default = "default_d_model")]
    pub d_model: usize,
    #[serde(default = "default_layers")]
    pub n_layers: usize,
    #[serde(default = "default_heads")]
    pub n_heads: usize,
    #[serde(default)]
    pub d_ff: Option<usize>,
    #[serde(default = "default_patch")]
    pub patch_len: usize,
    #[serde(default)]
    pub dropout: f64,
    #[serde(default)]
    pub attention: AttentionVariant,
    #[serde(default)]
    pub condition: ConditionVariant,
    #[serde(default)]
    pub time_mask: TimeMask,
    #[serde(default)]
    pub per_stream_modulation: bool,
}

impl Default for ArchConfig {
    fn default() -> Self {
        ArchConfig {
            d_model: default_d_model(),
            n_layers: default_layers(),
            n_heads: default_heads(),
            d_ff: None,
            patch_len: default_patch(),
            dropout: 0.0,
            attention: AttentionVariant::default(),
            condition: ConditionVariant::default(),
            time_mask: TimeMask::default(),
            per_stream_modulation: false,
        }
    }
}

fn default_season() -> usize {
    24
}
fn default_levels() -> Vec<f64> {
    DEFAULT_LEVELS.to_vec()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalConfig {
    /// Seasonal-naive lag for MASE and SQL.
    #[serde(default = "default_season")]
    pub season: usize,
    #[serde(default = "default_levels")]
    pub levels: Vec<f64>,
    #[serde(default)]
    pub aggregate: AggregateMode,
    /// Evaluate an evenly spaced subset of test windows.
    #[serde(default)]
    pub max_windows: Option<usize>,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            season: default_season(),
            levels: default_levels(),
            aggregate: AggregateMode::default(),
            max_windows: None,
        }
    }
}

/// Hyperparameter grid; an empty list keeps the base value.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default)]
    pub lr: Vec<f64>,
    #[serde(default)]
    pub d_model: Vec<usize>,
    #[serde(default)]
    pub n_layers: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCell {
    pub lr: f64,
    pub d_model: usize,
    pub n_layers: usize,
}

impl GridCell {
    pub fn dir_name(&self, index: usize) -> String {
        format!("cell-{index:03}-lr{:e}-d{}-l{}", self.lr, self.d_model, self.n_layers)
    }
}

fn default_steps_grid() -> Vec<usize> {
    vec![1, 2, 5, 10, 25]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateConfig {
    #[serde(default = "default_steps_grid")]
    pub steps: Vec<usize>,
}

impl Default for AblateConfig {
    fn default() -> Self {
        AblateConfig {
            steps: default_steps_grid(),
        }
    }
}

fn default_out() -> PathBuf {
    PathBuf::from("runs")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_out")]
    pub out: PathBuf,
    pub data: DataSource,
    pub window: WindowConfig,
    #[serde(default)]
    pub split: SplitConfig,
    #[serde(default)]
    pub model: ArchConfig,
    #[serde(default)]
    pub flow: FlowConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub grid: GridConfig,
    #[serde(default)]
    pub ablate: AblateConfig,
}

impl RunConfig {
    /// Parses and validates; relative data paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(io_err(path))?;
        let mut cfg = Self::parse(&text).map_err(|e| match e {
            Error::Format { message, .. } => Error::Format {
                path: path.to_path_buf(),
                message,
            },
            other => other,
        })?;
        if let DataSource::Csv { manifest } = &mut cfg.data {
            if manifest.is_relative() {
                if let Some(dir) = path.parent() {
                    *manifest = dir.join(&*manifest);
                }
            }
        }
        Ok(cfg)
    }

    /// Parses without validating.
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Format {
            path: PathBuf::from("<config>"),
            message: e.to_string(),
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).unwrap_or_default()
    }

    pub fn model_config(&self, n_cov: usize) -> ModelConfig {
        let a = &self.model;
        ModelConfig {
            d_model: a.d_model,
            n_layers: a.n_layers,
            n_heads: a.n_heads,
            d_ff: a.d_ff,
            patch_len: a.patch_len,
            n_cov,
            hist_len: self.window.spec(a.patch_len).padded_history(),
            horizon: self.window.horizon,
            dropout: a.dropout,
            attention: a.attention,
            condition: a.condition,
            time_mask: a.time_mask,
            per_stream_modulation: a.per_stream_modulation,
        }
    }

    pub fn cells(&self) -> Vec<GridCell> {
        let or = |v: &Vec<f64>, base: f64| if v.is_empty() { vec![base] } else { v.clone() };
        let or_u = |v: &Vec<usize>, base: usize| if v.is_empty() { vec![base] } else { v.clone() };
        let mut out = Vec::new();
        for lr in or(&self.grid.lr, self.train.lr) {
            for d_model in or_u(&self.grid.d_model, self.model.d_model) {
                for n_layers in or_u(&self.grid.n_layers, self.model.n_layers) {
                    out.push(GridCell { lr, d_model, n_layers });
                }
            }
        }
        out
    }

    /// A copy with one grid cell's values applied.
    pub fn with_cell(&self, cell: &GridCell) -> RunConfig {
        let mut c = self.clone();
        c.train.lr = cell.lr;
        c.model.d_model = cell.d_model;
        c.model.n_layers = cell.n_layers;
        c.grid = GridConfig::default();
        c
    }

    /// Every problem with the configuration, not only the first.
    pub fn issues(&self) -> Vec<String> {
        let mut out = self.data.issues();
        let w = &self.window;
        if let Err(e) = w.spec(self.model.patch_len).validate() {
            out.push(e.to_string());
        }
        if w.eval_stride == Some(0) {
            out.push(String::from("window.eval_stride must be positive"));
        }
        let s = &self.split;
        if !(0.0..=1.0).contains(&s.train) || !(0.0..=1.0).contains(&s.test) || s.train + s.test >= 1.0 {
            out.push(format!(
                "split fractions train = {} and test = {} must lie in [0, 1] and leave room for validation",
                s.train, s.test
            ));
        }
        match self.data.n_cov() {
            Ok(n_cov) => {
                for cell in self.cells() {
                    if let Err(ModelError::InvalidConfig(issues)) = self.with_cell(&cell).model_config(n_cov).validate()
                    {
                        for i in issues {
                            let i = format!("model: {i}");
                            if !out.contains(&i) {
                                out.push(i);
                            }
                        }
                    }
                }
            }
            Err(e) => out.push(format!("data.manifest: {e}")),
        }
        out.extend(self.flow.issues().into_iter().map(|i| format!("flow: {i}")));
        out.extend(self.train.issues().into_iter().map(|i| format!("train: {i}")));
        if self.eval.season == 0 {
            out.push(String::from("eval.season must be positive"));
        }
        if self.eval.levels.is_empty() || self.eval.levels.iter().any(|q| !(*q > 0.0 && *q < 1.0)) {
            out.push(String::from("eval.levels must be a non-empty list inside (0, 1)"));
        }
        if self.eval.max_windows == Some(0) {
            out.push(String::from("eval.max_windows must be positive when set"));
        }
        if self.grid.lr.iter().any(|lr| !lr.is_finite() || *lr <= 0.0) {
            out.push(String::from("grid.lr values must be positive"));
        }
        if self.ablate.steps.is_empty() || self.ablate.steps.contains(&0) {
            out.push(String::from("ablate.steps must be a non-empty list of positive counts"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(issues))
        }
    }

    /// SHA-256 of the canonical JSON form. The output directory is left out so
    /// the same run written elsewhere hashes the same.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.out = PathBuf::new();
        let json = serde_json::to_string(&c).unwrap_or_default();
        hex(&Sha256::digest(json.as_bytes()))
    }
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
