//! Data preparation, training, ensemble forecasting and scoring, shared by
//! every command.

use dits_core::data::{
    make_windows, synth_covariate_regression, synth_endogenous, EndogenousSpec, NormalizedWindow, SeriesPanel,
    SplitSpec,
};
use dits_core::flow::{
    chunk_loss_and_grads, derive_seed, ensemble_forecast, train, Chunk, EpochRecord, FlowError, ForecastEnsemble,
    GradientEngine, TrainReport,
};
use dits_core::metrics::{aggregate_scores, score_window, seasonal_naive_forecast, WindowScores};
use dits_core::model::DitsModel;
use dits_core::tensor::Gradients;
use rayon::prelude::*;

use crate::config::{DataSource, EvalConfig, RunConfig};
use crate::error::{Error, Result};
use crate::ingest::{load_csv, Manifest};

/// Salt for the model initialization seed.
const INIT_SALT: u64 = 0x696e_6974;

/// Evaluates gradient chunks on the rayon pool; results keep chunk order, so
/// the reduction and therefore training are identical for any thread count.
pub struct Parallel;

impl GradientEngine for Parallel {
    fn run(&self, model: &DitsModel, chunks: &[Chunk<'_>]) -> Vec<Result<(f64, Gradients), FlowError>> {
        chunks.par_iter().map(|c| chunk_loss_and_grads(model, c)).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub name: String,
    pub panel: SeriesPanel,
    /// Bayes-optimal normalized horizon MSE, when the generator knows it.
    pub oracle_floor: Option<f64>,
}

pub fn load_dataset(source: &DataSource) -> Result<Dataset> {
    let name = source.name();
    match source {
        DataSource::Csv { manifest } => {
            let m = Manifest::load(manifest)?;
            Ok(Dataset {
                name,
                panel: load_csv(&m)?,
                oracle_floor: None,
            })
        }
        DataSource::CovariateRegression {
            seed, length, n_cov, ..
        } => {
            let weights = source.weights().unwrap_or_default();
            let sigma = source.noise_sigma().unwrap_or_default();
            let s = synth_covariate_regression(*seed, *length, *n_cov, &weights, sigma)?;
            Ok(Dataset {
                name,
                panel: s.panel,
                oracle_floor: Some(s.oracle_floor),
            })
        }
        DataSource::Endogenous {
            seed,
            length,
            periods,
            amplitudes,
            ar_coef,
            noise_sigma,
        } => {
            let spec = EndogenousSpec {
                periods: periods.clone(),
                amplitudes: amplitudes.clone(),
                ar_coef: *ar_coef,
                noise_sigma: *noise_sigma,
                random_phase: true,
            };
            Ok(Dataset {
                name,
                panel: synth_endogenous(*seed, *length, &spec)?,
                oracle_floor: None,
            })
        }
    }
}

/// Windows for every split, re-normalized.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub dataset: Dataset,
    pub split: SplitSpec,
    pub train: Vec<NormalizedWindow>,
    pub val: Vec<NormalizedWindow>,
    /// Evaluation windows, thinned to `eval.max_windows` when set.
    pub test: Vec<NormalizedWindow>,
}

impl Prepared {
    pub fn n_cov(&self) -> usize {
        self.dataset.panel.n_covariates()
    }
}

pub fn evenly_spaced<T: Clone>(xs: Vec<T>, cap: Option<usize>) -> Vec<T> {
    match cap {
        Some(k) if k < xs.len() => (0..k).map(|i| xs[i * xs.len() / k].clone()).collect(),
        _ => xs,
    }
}

pub fn prepare(cfg: &RunConfig) -> Result<Prepared> {
    cfg.validate()?;
    prepare_from(cfg, load_dataset(&cfg.data)?)
}

/// Windows `dataset` under `cfg`'s split and window settings.
pub fn prepare_from(cfg: &RunConfig, dataset: Dataset) -> Result<Prepared> {
    let panel = &dataset.panel;
    let split = SplitSpec::from_fractions(panel.len(), cfg.split.train, cfg.split.test)?;
    let p = cfg.model.patch_len;
    let norm = |ws: Vec<dits_core::data::SeriesWindow>| ws.iter().map(|w| w.renormalize()).collect::<Vec<_>>();
    let train = norm(make_windows(
        panel,
        split.train.clone(),
        &cfg.window.spec(p),
        cfg.split.mode,
    )?);
    let val = norm(make_windows(
        panel,
        split.val.clone(),
        &cfg.window.eval_spec(p),
        cfg.split.mode,
    )?);
    let test = norm(make_windows(
        panel,
        split.test.clone(),
        &cfg.window.eval_spec(p),
        cfg.split.mode,
    )?);
    let test = evenly_spaced(test, cfg.eval.max_windows);
    Ok(Prepared {
        dataset,
        split,
        train,
        val,
        test,
    })
}

pub fn init_model(cfg: &RunConfig, n_cov: usize) -> Result<DitsModel> {
    Ok(DitsModel::new(
        cfg.model_config(n_cov),
        derive_seed(cfg.seed, INIT_SALT),
    )?)
}

/// Trains a freshly initialized model on `data` and returns it at its best
/// validation snapshot.
pub fn train_model(
    cfg: &RunConfig,
    data: &Prepared,
    engine: &dyn GradientEngine,
    observer: &mut dyn FnMut(&EpochRecord),
) -> Result<(DitsModel, TrainReport)> {
    let mut model = init_model(cfg, data.n_cov())?;
    let report = train(
        &mut model,
        &data.train,
        &data.val,
        &cfg.flow,
        &cfg.train,
        cfg.seed,
        engine,
        observer,
    )?;
    Ok((model, report))
}

/// The ensemble seed for one window depends only on the run seed and where the
/// window starts, so any subset of windows reproduces the same members.
pub fn window_seed(seed: u64, window: &NormalizedWindow) -> u64 {
    derive_seed(seed, window.start as u64)
}

/// One ensemble per window, windows in parallel.
pub fn forecast_windows(
    model: &DitsModel,
    windows: &[NormalizedWindow],
    members: usize,
    steps: usize,
    seed: u64,
) -> Result<Vec<ForecastEnsemble>> {
    if let Some(w) = windows.first() {
        check_compatible(model, w)?;
    }
    windows
        .par_iter()
        .map(|w| ensemble_forecast(model, w, members, steps, window_seed(seed, w)).map_err(Error::from))
        .collect()
}

pub fn check_compatible(model: &DitsModel, w: &NormalizedWindow) -> Result<()> {
    let c = &model.config;
    let mut issues = Vec::new();
    if c.n_cov != w.n_cov {
        issues.push(format!("model expects {} covariates, dataset has {}", c.n_cov, w.n_cov));
    }
    if c.hist_len != w.hist_len() {
        issues.push(format!(
            "model history {} vs window history {}",
            c.hist_len,
            w.hist_len()
        ));
    }
    if c.horizon != w.horizon() {
        issues.push(format!("model horizon {} vs window horizon {}", c.horizon, w.horizon()));
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(Error::Incompatible(issues.join("; ")))
    }
}

/// Single-member ensemble repeating the last season of each window's history.
pub fn seasonal_naive(windows: &[NormalizedWindow], season: usize) -> Result<Vec<ForecastEnsemble>> {
    windows
        .iter()
        .map(|w| {
            Ok(ForecastEnsemble {
                samples: vec![seasonal_naive_forecast(w.history(), season, w.horizon())?],
                stats: w.stats.target,
            })
        })
        .collect()
}

/// Per-window scores in normalized units plus their aggregate.
pub fn score(
    ensembles: &[ForecastEnsemble],
    windows: &[NormalizedWindow],
    eval: &EvalConfig,
) -> Result<(Vec<WindowScores>, WindowScores)> {
    if ensembles.len() != windows.len() {
        return Err(Error::Misaligned(format!(
            "{} forecasts for {} windows",
            ensembles.len(),
            windows.len()
        )));
    }
    let per: Vec<WindowScores> = ensembles
        .iter()
        .zip(windows)
        .map(|(e, w)| score_window(&e.samples, &w.y_pred, w.history(), eval.season, &eval.levels))
        .collect::<Result<_, _>>()?;
    let agg = aggregate_scores(&per, eval.aggregate)?;
    Ok((per, agg))
}
