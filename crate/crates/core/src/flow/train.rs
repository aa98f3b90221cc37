//! Adam training loop with gradient clipping and validation-based early stopping.

use alloc::vec;
use alloc::vec::Vec;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::path::{standard_normal, velocity_loss, BatchItem};
use super::{derive_seed, FlowConfig, FlowError};
use crate::data::NormalizedWindow;
use crate::model::DitsModel;
use crate::tensor::{Gradients, Graph, ParamStore};

fn default_lr() -> f64 {
    1e-4
}
fn default_batch() -> usize {
    32
}
fn default_epochs() -> usize {
    50
}
fn default_patience() -> usize {
    5
}
fn default_clip() -> f64 {
    1.0
}
fn default_micro() -> usize {
    8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    #[serde(default = "default_lr")]
    pub lr: f64,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub max_epochs: usize,
    /// Caps the optimizer steps per epoch (the shuffled order is truncated).
    #[serde(default)]
    pub steps_per_epoch: Option<usize>,
    /// Hard cap on optimizer steps over the whole run.
    #[serde(default)]
    pub max_steps: Option<usize>,
    /// Epochs without validation improvement before stopping.
    #[serde(default = "default_patience")]
    pub patience: usize,
    /// Global gradient-norm clip; non-positive disables clipping.
    #[serde(default = "default_clip")]
    pub grad_clip: f64,
    /// Gradient chunk size. Chunks are reduced in a fixed order, so the result
    /// does not depend on how many threads evaluate them.
    #[serde(default = "default_micro")]
    pub micro_batch: usize,
    /// Validation windows used for early stopping (evenly spaced subset); all when absent.
    #[serde(default)]
    pub max_val_windows: Option<usize>,
    /// Fixed `(t, eps)` draws per validation window; more draws make the
    /// early-stopping signal less noisy.
    #[serde(default = "default_val_repeats")]
    pub val_repeats: usize,
    #[serde(default)]
    pub lr_schedule: LrSchedule,
}

fn default_val_repeats() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LrSchedule {
    #[default]
    Constant,
    /// Half-cosine decay from `lr` to zero over the planned number of steps.
    Cosine,
}

impl LrSchedule {
    pub fn factor(self, step: usize, total: usize) -> f64 {
        match self {
            LrSchedule::Constant => 1.0,
            LrSchedule::Cosine => {
                let p = (step as f64 / total.max(1) as f64).min(1.0);
                0.5 * (1.0 + libm::cos(core::f64::consts::PI * p))
            }
        }
    }
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lr: default_lr(),
            batch_size: default_batch(),
            max_epochs: default_epochs(),
            steps_per_epoch: None,
            max_steps: None,
            patience: default_patience(),
            grad_clip: default_clip(),
            micro_batch: default_micro(),
            max_val_windows: None,
            val_repeats: default_val_repeats(),
            lr_schedule: LrSchedule::default(),
        }
    }
}

impl TrainConfig {
    pub fn issues(&self) -> Vec<alloc::string::String> {
        use alloc::format;
        let mut out = Vec::new();
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            out.push(format!("lr must be positive, got {}", self.lr));
        }
        if self.batch_size == 0 {
            out.push(alloc::string::String::from("batch_size must be positive"));
        }
        if self.max_epochs == 0 {
            out.push(alloc::string::String::from("max_epochs must be positive"));
        }
        if self.micro_batch == 0 {
            out.push(alloc::string::String::from("micro_batch must be positive"));
        }
        if self.steps_per_epoch == Some(0) || self.max_steps == Some(0) {
            out.push(alloc::string::String::from("step caps must be positive when set"));
        }
        if self.val_repeats == 0 {
            out.push(alloc::string::String::from("val_repeats must be positive"));
        }
        out
    }
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        let zeros: Vec<Vec<f64>> = store.entries().iter().map(|e| vec![0.0; e.value.len()]).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    /// Parameters absent from `grads` are treated as having zero gradient.
    pub fn update(&mut self, store: &mut ParamStore, grads: &Gradients) {
        self.step += 1;
        let b1t = 1.0 - libm::pow(self.beta1, self.step as f64);
        let b2t = 1.0 - libm::pow(self.beta2, self.step as f64);
        let ids: Vec<_> = store.ids().collect();
        for id in ids {
            let (m, v) = (&mut self.m[id.0], &mut self.v[id.0]);
            let g = grads.get(id);
            let p = store.get_mut(id).data_mut();
            for i in 0..p.len() {
                let gi = g.map_or(0.0, |g| g[i]);
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mh = m[i] / b1t;
                let vh = v[i] / b2t;
                p[i] -= self.lr * mh / (libm::sqrt(vh) + self.eps);
            }
        }
    }
}

/// A contiguous run of batch items evaluated on one graph.
pub struct Chunk<'a> {
    pub items: &'a [BatchItem<'a>],
    pub dropout_seed: u64,
}

/// Loss and parameter gradients of one chunk (mean over its horizon elements).
pub fn chunk_loss_and_grads(model: &DitsModel, chunk: &Chunk<'_>) -> Result<(f64, Gradients), FlowError> {
    let mut g = Graph::new();
    let mut rng = ChaCha8Rng::seed_from_u64(chunk.dropout_seed);
    let dropout: Option<&mut dyn RngCore> = (model.config.dropout > 0.0).then_some(&mut rng);
    let loss = velocity_loss(&mut g, model, &model.params, chunk.items, dropout)?;
    let value = g.value(loss).item();
    let grads = g.backward(loss)?.into_params();
    Ok((value, grads))
}

/// Evaluates chunks; implementations may run them concurrently but must
/// return results in chunk order.
pub trait GradientEngine {
    fn run(&self, model: &DitsModel, chunks: &[Chunk<'_>]) -> Vec<Result<(f64, Gradients), FlowError>>;
}

pub struct Sequential;

impl GradientEngine for Sequential {
    fn run(&self, model: &DitsModel, chunks: &[Chunk<'_>]) -> Vec<Result<(f64, Gradients), FlowError>> {
        chunks.iter().map(|c| chunk_loss_and_grads(model, c)).collect()
    }
}

/// Size-weighted ordered reduction of per-chunk results into batch mean loss and gradients.
pub fn reduce_chunks(
    results: Vec<Result<(f64, Gradients), FlowError>>,
    sizes: &[usize],
) -> Result<(f64, Gradients), FlowError> {
    let total: usize = sizes.iter().sum();
    let mut loss = 0.0;
    let mut acc: Option<Gradients> = None;
    for (r, &n) in results.into_iter().zip(sizes) {
        let (l, mut g) = r?;
        let w = n as f64 / total as f64;
        loss += l * w;
        g.scale(w);
        match acc.as_mut() {
            Some(a) => a.accumulate(&g),
            None => acc = Some(g),
        }
    }
    Ok((loss, acc.ok_or(FlowError::EmptyBatch)?))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Optimizer steps taken so far.
    pub step: usize,
    /// Mean training loss over the epoch's steps.
    pub train_loss: f64,
    pub val_loss: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub curve: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub steps: usize,
    pub stopped_early: bool,
}

/// Fixed `(t, eps)` draws for every validation window, reused each epoch.
fn validation_items<'a>(
    windows: &[&'a NormalizedWindow],
    flow: &FlowConfig,
    repeats: usize,
    seed: u64,
) -> Vec<BatchItem<'a>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let sched = flow.scheduler();
    let mut out = Vec::with_capacity(windows.len() * repeats);
    for _ in 0..repeats {
        for w in windows {
            let t = sched.sample(&mut rng);
            let eps = standard_normal(&mut rng, w.horizon());
            out.push(BatchItem { window: w, t, eps });
        }
    }
    out
}

/// Velocity loss on fixed items, in chunks of `micro` (no dropout, no gradients).
pub fn evaluate_loss(model: &DitsModel, items: &[BatchItem<'_>], micro: usize) -> Result<f64, FlowError> {
    if items.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    let mut total = 0.0;
    for chunk in items.chunks(micro.max(1)) {
        let mut g = Graph::new();
        let l = velocity_loss(&mut g, model, &model.params, chunk, None)?;
        total += g.value(l).item() * chunk.len() as f64;
    }
    Ok(total / items.len() as f64)
}

fn evenly_spaced<T>(xs: &[T], cap: Option<usize>) -> Vec<&T> {
    match cap {
        Some(k) if k < xs.len() => (0..k).map(|i| &xs[i * xs.len() / k]).collect(),
        _ => xs.iter().collect(),
    }
}

#[allow(clippy::too_many_arguments)]
/// Trains `model` in place and leaves it at the best-validation parameters
/// (best training loss when `val` is empty).
pub fn train(
    model: &mut DitsModel,
    train_set: &[NormalizedWindow],
    val_set: &[NormalizedWindow],
    flow: &FlowConfig,
    cfg: &TrainConfig,
    seed: u64,
    engine: &dyn GradientEngine,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<TrainReport, FlowError> {
    let mut issues = cfg.issues();
    issues.extend(flow.issues());
    if !issues.is_empty() {
        return Err(FlowError::InvalidConfig(issues));
    }
    if train_set.is_empty() {
        return Err(FlowError::EmptyBatch);
    }
    let sched = flow.scheduler();
    let val_windows = evenly_spaced(val_set, cfg.max_val_windows);
    let val_items = validation_items(&val_windows, flow, cfg.val_repeats, derive_seed(seed, 0x7661_6c69));
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 0x7472_6169));
    let mut adam = Adam::new(&model.params, cfg.lr);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let per_epoch = {
        let n = train_set.len().div_ceil(cfg.batch_size);
        cfg.steps_per_epoch.map_or(n, |k| k.min(n))
    };
    let planned = cfg
        .max_steps
        .unwrap_or(usize::MAX)
        .min(per_epoch.saturating_mul(cfg.max_epochs));
    let mut curve = Vec::new();
    let mut best = (f64::INFINITY, 0usize, model.params.clone());
    let mut since_best = 0;
    let mut step = 0usize;
    let mut stopped_early = false;

    'epochs: for epoch in 0..cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut batches: Vec<&[usize]> = order.chunks(cfg.batch_size).collect();
        if let Some(k) = cfg.steps_per_epoch {
            batches.truncate(k);
        }
        let mut epoch_loss = 0.0;
        let mut epoch_steps = 0;
        for batch in batches {
            if cfg.max_steps.is_some_and(|m| step >= m) {
                break;
            }
            let items: Vec<BatchItem<'_>> = batch
                .iter()
                .map(|&i| {
                    let w = &train_set[i];
                    let t = sched.sample(&mut rng);
                    let eps = standard_normal(&mut rng, w.horizon());
                    BatchItem { window: w, t, eps }
                })
                .collect();
            let chunks: Vec<Chunk<'_>> = items
                .chunks(cfg.micro_batch)
                .enumerate()
                .map(|(k, c)| Chunk {
                    items: c,
                    dropout_seed: derive_seed(derive_seed(seed, step as u64), k as u64),
                })
                .collect();
            let sizes: Vec<usize> = chunks.iter().map(|c| c.items.len()).collect();
            let (loss, mut grads) = reduce_chunks(engine.run(model, &chunks), &sizes)?;
            if !loss.is_finite() {
                return Err(FlowError::Divergence { step });
            }
            if cfg.grad_clip > 0.0 {
                let norm = grads.global_norm();
                if norm > cfg.grad_clip {
                    grads.scale(cfg.grad_clip / norm);
                }
            }
            adam.lr = cfg.lr * cfg.lr_schedule.factor(step, planned);
            adam.update(&mut model.params, &grads);
            step += 1;
            epoch_loss += loss;
            epoch_steps += 1;
        }
        if epoch_steps == 0 {
            break;
        }
        let train_loss = epoch_loss / epoch_steps as f64;
        let val_loss = if val_items.is_empty() {
            None
        } else {
            Some(evaluate_loss(model, &val_items, cfg.micro_batch)?)
        };
        let record = EpochRecord {
            epoch,
            step,
            train_loss,
            val_loss,
        };
        observer(&record);
        curve.push(record);
        let score = val_loss.unwrap_or(train_loss);
        if !score.is_finite() {
            return Err(FlowError::Divergence { step });
        }
        if score < best.0 {
            best = (score, epoch, model.params.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                stopped_early = true;
                break 'epochs;
            }
        }
        if cfg.max_steps.is_some_and(|m| step >= m) {
            break;
        }
    }
    let (best_loss, best_epoch, params) = best;
    model.params = params;
    Ok(TrainReport {
        curve,
        best_epoch,
        best_loss,
        steps: step,
        stopped_early,
    })
}
