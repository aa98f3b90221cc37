//! The command verbs. Each writes its artifacts under `cfg.out` and returns a
//! summary the caller can inspect.

use std::path::{Path, PathBuf};

use dits_core::flow::{EpochRecord, GradientEngine, SchedulerKind, TrainReport};
use dits_core::metrics::WindowScores;
use dits_core::model::{AttentionVariant, ConditionVariant, DitsModel, ParamCountReport};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::{
    conventions, read_forecasts, write_forecasts, write_loss_curve, write_report_csv, write_table, EvalReport,
    ForecastMeta, WindowReport,
};
use crate::checkpoint::{write_json, Checkpoint, ARTIFACT_VERSION};
use crate::config::{GridCell, RunConfig};
use crate::error::{io_err, Error, Result};
use crate::pipeline::{forecast_windows, prepare, score, seasonal_naive, train_model, Prepared};

/// Progress sink: one line per call.
pub type Log<'a> = &'a (dyn Fn(&str) + Sync);

pub fn quiet(_: &str) {}

fn create_dir(path: &Path) -> Result<()> {
    std::fs::create_dir_all(path).map_err(io_err(path))
}

fn epoch_line(label: &str, r: &EpochRecord) -> String {
    match r.val_loss {
        Some(v) => format!(
            "{label} epoch {} step {} train {:.5} val {:.5}",
            r.epoch, r.step, r.train_loss, v
        ),
        None => format!("{label} epoch {} step {} train {:.5}", r.epoch, r.step, r.train_loss),
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Provenance {
    pub artifact_version: String,
    pub config_hash: String,
    pub seed: u64,
    pub cell: GridCell,
    pub params: ParamCountReport,
    pub best_epoch: usize,
    pub best_loss: f64,
    pub steps: usize,
    pub stopped_early: bool,
    pub config: RunConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CellSummary {
    pub dir: PathBuf,
    pub cell: GridCell,
    pub best_loss: f64,
    pub best_epoch: usize,
    pub steps: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub cells: Vec<CellSummary>,
    pub best: usize,
    pub checkpoint: PathBuf,
}

/// Trains every grid cell in its own subdirectory and copies the best cell's
/// checkpoint (lowest validation loss) to `train/checkpoint.json`.
pub fn cmd_train(cfg: &RunConfig, engine: &(dyn GradientEngine + Sync), log: Log<'_>) -> Result<TrainSummary> {
    let data = prepare(cfg)?;
    let root = cfg.out.join("train");
    create_dir(&root)?;
    let hash = cfg.hash();
    let cells = cfg.cells();
    log(&format!(
        "{}: {} train / {} val / {} test windows, {} grid cell(s)",
        data.dataset.name,
        data.train.len(),
        data.val.len(),
        data.test.len(),
        cells.len()
    ));
    let results: Vec<CellSummary> = cells
        .par_iter()
        .enumerate()
        .map(|(i, cell)| {
            let dir = root.join(cell.dir_name(i));
            create_dir(&dir)?;
            let c = cfg.with_cell(cell);
            let label = cell.dir_name(i);
            let (model, report) = train_model(&c, &data, engine, &mut |r| log(&epoch_line(&label, r)))?;
            write_cell(&dir, cfg, &hash, cell, &model, &report)?;
            Ok(CellSummary {
                dir,
                cell: *cell,
                best_loss: report.best_loss,
                best_epoch: report.best_epoch,
                steps: report.steps,
            })
        })
        .collect::<Result<_>>()?;
    let best = (0..results.len())
        .min_by(|&a, &b| results[a].best_loss.total_cmp(&results[b].best_loss))
        .unwrap_or(0);
    let checkpoint = root.join("checkpoint.json");
    let src = results[best].dir.join("checkpoint.json");
    std::fs::copy(&src, &checkpoint).map_err(io_err(&src))?;
    let summary = TrainSummary {
        config_hash: hash,
        cells: results,
        best,
        checkpoint,
    };
    write_json(&root.join("summary.json"), &summary)?;
    log(&format!("best cell {} -> {}", best, summary.checkpoint.display()));
    Ok(summary)
}

fn write_cell(
    dir: &Path,
    cfg: &RunConfig,
    hash: &str,
    cell: &GridCell,
    model: &DitsModel,
    report: &TrainReport,
) -> Result<()> {
    Checkpoint::new(model, hash.to_string(), cfg.seed, Some(*cell), Some(report.clone()))
        .save(&dir.join("checkpoint.json"))?;
    write_loss_curve(&dir.join("loss_curve.csv"), &report.curve)?;
    write_json(
        &dir.join("provenance.json"),
        &Provenance {
            artifact_version: String::from(ARTIFACT_VERSION),
            config_hash: hash.to_string(),
            seed: cfg.seed,
            cell: *cell,
            params: model.param_count(),
            best_epoch: report.best_epoch,
            best_loss: report.best_loss,
            steps: report.steps,
            stopped_early: report.stopped_early,
            config: cfg.with_cell(cell),
        },
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ForecastMethod<'a> {
    Checkpoint(&'a Path),
    SeasonalNaive,
}

/// Ensembles for every test window, written to `forecast/`.
pub fn cmd_forecast(
    cfg: &RunConfig,
    method: ForecastMethod<'_>,
    members: Option<usize>,
    log: Log<'_>,
) -> Result<ForecastMeta> {
    let data = prepare(cfg)?;
    let dir = cfg.out.join("forecast");
    create_dir(&dir)?;
    let members = members.unwrap_or(cfg.flow.ensemble_size);
    if members == 0 {
        return Err(Error::Config(vec![String::from("ensemble size must be at least 1")]));
    }
    let (ensembles, name, ck_hash, members) = match method {
        ForecastMethod::Checkpoint(path) => {
            let ck = Checkpoint::load(path)?;
            let ck_hash = ck.config_hash.clone();
            let model = ck.into_model()?;
            log(&format!(
                "{} windows x {members} members, {} steps",
                data.test.len(),
                cfg.flow.sample_steps
            ));
            let e = forecast_windows(&model, &data.test, members, cfg.flow.sample_steps, cfg.seed)?;
            (e, "dits", Some(ck_hash), members)
        }
        ForecastMethod::SeasonalNaive => (seasonal_naive(&data.test, cfg.eval.season)?, "seasonal-naive", None, 1),
    };
    write_forecasts(&dir, &data.test, &ensembles, &cfg.eval.levels)?;
    let meta = ForecastMeta {
        dataset: data.dataset.name.clone(),
        method: name.to_string(),
        config_hash: cfg.hash(),
        checkpoint_hash: ck_hash,
        seed: cfg.seed,
        members,
        sample_steps: cfg.flow.sample_steps,
        future: cfg.window.future,
        windows: data.test.len(),
        artifact_version: String::from(ARTIFACT_VERSION),
    };
    write_json(&dir.join("forecast.json"), &meta)?;
    Ok(meta)
}

/// Scores the forecasts in `forecast_dir` against the configured test windows.
pub fn cmd_evaluate(cfg: &RunConfig, forecast_dir: &Path) -> Result<EvalReport> {
    let data = prepare(cfg)?;
    let meta_path = forecast_dir.join("forecast.json");
    let text = std::fs::read_to_string(&meta_path).map_err(io_err(&meta_path))?;
    let meta: ForecastMeta = serde_json::from_str(&text).map_err(|e| Error::Format {
        path: meta_path.clone(),
        message: e.to_string(),
    })?;
    let (starts, ensembles) = read_forecasts(forecast_dir)?;
    if starts.len() != data.test.len() {
        return Err(Error::Misaligned(format!(
            "{} forecast windows, {} test windows",
            starts.len(),
            data.test.len()
        )));
    }
    for (i, (s, w)) in starts.iter().zip(&data.test).enumerate() {
        if *s != w.start {
            return Err(Error::Misaligned(format!(
                "window {i} starts at {s} in the forecast, {} in the data",
                w.start
            )));
        }
        if ensembles[i].samples.first().map(Vec::len) != Some(w.horizon()) {
            return Err(Error::Misaligned(format!("window {i} horizon differs from the data")));
        }
    }
    let (per, agg) = score(&ensembles, &data.test, &cfg.eval)?;
    let report = EvalReport {
        dataset: data.dataset.name.clone(),
        method: meta.method.clone(),
        horizon: cfg.window.horizon,
        members: meta.members,
        seed: meta.seed,
        future: meta.future,
        config_hash: cfg.hash(),
        aggregate_mode: cfg.eval.aggregate,
        conventions: conventions(cfg.eval.season),
        aggregate: agg,
        windows: per
            .into_iter()
            .enumerate()
            .map(|(i, scores)| WindowReport {
                window_id: i,
                start: starts[i],
                scores,
            })
            .collect(),
    };
    let dir = cfg.out.join("evaluate");
    create_dir(&dir)?;
    write_json(&dir.join("report.json"), &report)?;
    write_report_csv(&dir.join("report.csv"), std::slice::from_ref(&report))?;
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Axis {
    Attention,
    Condition,
    Schedule,
    Steps,
}

impl Axis {
    pub fn name(self) -> &'static str {
        match self {
            Axis::Attention => "attention",
            Axis::Condition => "condition",
            Axis::Schedule => "schedule",
            Axis::Steps => "steps",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationRow {
    pub variant: String,
    pub dataset: String,
    pub scores: WindowScores,
    pub best_val_loss: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AblationTable {
    pub axis: Axis,
    pub config_hash: String,
    pub seed: u64,
    pub rows: Vec<AblationRow>,
}

impl AblationTable {
    pub fn row(&self, variant: &str) -> Option<&AblationRow> {
        self.rows.iter().find(|r| r.variant == variant)
    }
}

fn evaluate_model(cfg: &RunConfig, data: &Prepared, model: &DitsModel, steps: usize) -> Result<WindowScores> {
    let e = forecast_windows(model, &data.test, cfg.flow.ensemble_size, steps, cfg.seed)?;
    Ok(score(&e, &data.test, &cfg.eval)?.1)
}

/// Trains one model per variant on identical data and seeds and scores each on
/// the test windows. The steps axis trains once and varies the Euler step count.
pub fn cmd_ablate(
    cfg: &RunConfig,
    axis: Axis,
    engine: &(dyn GradientEngine + Sync),
    log: Log<'_>,
) -> Result<AblationTable> {
    let data = prepare(cfg)?;
    ablate_prepared(cfg, &data, axis, engine, log)
}

/// [`cmd_ablate`] on already prepared windows.
pub fn ablate_prepared(
    cfg: &RunConfig,
    data: &Prepared,
    axis: Axis,
    engine: &(dyn GradientEngine + Sync),
    log: Log<'_>,
) -> Result<AblationTable> {
    let variants: Vec<(String, RunConfig)> = match axis {
        Axis::Attention => AttentionVariant::ALL
            .iter()
            .map(|&a| {
                let mut c = cfg.clone();
                c.model.attention = a;
                c.model.condition = ConditionVariant::Dits;
                (a.name().to_string(), c)
            })
            .collect(),
        Axis::Condition => ConditionVariant::ALL
            .iter()
            .map(|&v| {
                let mut c = cfg.clone();
                c.model.attention = AttentionVariant::Dits;
                c.model.condition = v;
                (v.name().to_string(), c)
            })
            .collect(),
        Axis::Schedule => [SchedulerKind::Linear, SchedulerKind::Cosine, SchedulerKind::LogNormal]
            .iter()
            .map(|&k| {
                let mut c = cfg.clone();
                c.flow.scheduler = k;
                (k.name().to_string(), c)
            })
            .collect(),
        Axis::Steps => vec![(String::new(), cfg.clone())],
    };
    for (_, c) in &variants {
        c.validate()?;
    }
    let mut rows = Vec::new();
    for (name, c) in &variants {
        let label = if name.is_empty() { axis.name() } else { name.as_str() };
        let (model, report) = train_model(c, data, engine, &mut |r| log(&epoch_line(label, r)))?;
        if axis == Axis::Steps {
            for &steps in &cfg.ablate.steps {
                let scores = evaluate_model(c, data, &model, steps)?;
                log(&format!("steps {steps}: MSE {:.5} CRPS {:.5}", scores.mse, scores.crps));
                rows.push(AblationRow {
                    variant: steps.to_string(),
                    dataset: data.dataset.name.clone(),
                    scores,
                    best_val_loss: report.best_loss,
                });
            }
        } else {
            let scores = evaluate_model(c, data, &model, c.flow.sample_steps)?;
            log(&format!("{name}: MSE {:.5} MAE {:.5}", scores.mse, scores.mae));
            rows.push(AblationRow {
                variant: name.clone(),
                dataset: data.dataset.name.clone(),
                scores,
                best_val_loss: report.best_loss,
            });
        }
    }
    let table = AblationTable {
        axis,
        config_hash: cfg.hash(),
        seed: cfg.seed,
        rows,
    };
    let dir = cfg.out.join("ablate");
    create_dir(&dir)?;
    write_ablation(&dir, &table)?;
    Ok(table)
}

fn write_ablation(dir: &Path, t: &AblationTable) -> Result<()> {
    let (header, rows): (Vec<&str>, Vec<Vec<String>>) = match t.axis {
        Axis::Steps => (
            vec!["steps", "dataset", "MSE", "CRPS"],
            t.rows
                .iter()
                .map(|r| {
                    vec![
                        r.variant.clone(),
                        r.dataset.clone(),
                        r.scores.mse.to_string(),
                        r.scores.crps.to_string(),
                    ]
                })
                .collect(),
        ),
        _ => (
            vec!["variant", "dataset", "MSE", "MAE", "CRPS"],
            t.rows
                .iter()
                .map(|r| {
                    vec![
                        r.variant.clone(),
                        r.dataset.clone(),
                        r.scores.mse.to_string(),
                        r.scores.mae.to_string(),
                        r.scores.crps.to_string(),
                    ]
                })
                .collect(),
        ),
    };
    write_table(&dir.join(format!("{}.csv", t.axis.name())), &header, &rows)?;
    write_json(&dir.join(format!("{}.json", t.axis.name())), t)
}
