//! CSV and JSON files written and read by the commands.

use std::collections::BTreeMap;
use std::path::Path;

use dits_core::data::{FutureMode, NormalizedWindow, Stats};
use dits_core::flow::{EpochRecord, ForecastEnsemble};
use dits_core::metrics::{AggregateMode, WindowScores};
use serde::{Deserialize, Serialize};

use crate::error::{io_err, Error, Result};

fn csv_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    csv::Writer::from_path(path).map_err(|e| csv_err(path, e))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.position() {
        Some(pos) => Error::Parse {
            path: path.to_path_buf(),
            row: pos.record() as usize,
            column: String::new(),
            message: e.to_string(),
        },
        None => Error::Format {
            path: path.to_path_buf(),
            message: e.to_string(),
        },
    }
}

fn write_rows<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<()> {
    let mut w = csv_writer(path)?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

fn read_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_err(path, e))).collect()
}

#[derive(Debug, Serialize)]
struct LossRow {
    epoch: usize,
    step: usize,
    train_loss: f64,
    val_loss: Option<f64>,
}

pub fn write_loss_curve(path: &Path, curve: &[EpochRecord]) -> Result<()> {
    write_rows(
        path,
        curve.iter().map(|r| LossRow {
            epoch: r.epoch,
            step: r.step,
            train_loss: r.train_loss,
            val_loss: r.val_loss,
        }),
    )
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct WindowRow {
    window_id: usize,
    start: usize,
    mu: f64,
    sigma: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SampleRow {
    window_id: usize,
    sample_id: usize,
    horizon_index: usize,
    value: f64,
    value_normalized: f64,
}

#[derive(Debug, Serialize)]
struct QuantileRow {
    window_id: usize,
    horizon_index: usize,
    level: f64,
    value: f64,
}

#[derive(Debug, Serialize)]
struct BandRow {
    window_id: usize,
    horizon_index: usize,
    mean: f64,
    lo80: f64,
    hi80: f64,
    truth: f64,
}

/// Writes `windows.csv`, `ensembles.csv`, `quantiles.csv` and `band.csv` into `dir`.
/// Values are in original units; `ensembles.csv` also keeps the normalized samples
/// the evaluator scores.
pub fn write_forecasts(
    dir: &Path,
    windows: &[NormalizedWindow],
    ensembles: &[ForecastEnsemble],
    levels: &[f64],
) -> Result<()> {
    write_rows(
        &dir.join("windows.csv"),
        windows.iter().enumerate().map(|(i, w)| WindowRow {
            window_id: i,
            start: w.start,
            mu: w.stats.target.mu,
            sigma: w.stats.target.sigma,
        }),
    )?;
    let mut samples = Vec::new();
    let mut quantiles = Vec::new();
    let mut band = Vec::new();
    for (i, (e, w)) in ensembles.iter().zip(windows).enumerate() {
        for (s, (norm, raw)) in e.samples.iter().zip(e.denormalized()).enumerate() {
            for (t, (&vn, &v)) in norm.iter().zip(&raw).enumerate() {
                samples.push(SampleRow {
                    window_id: i,
                    sample_id: s,
                    horizon_index: t,
                    value: v,
                    value_normalized: vn,
                });
            }
        }
        let stats = &e.stats;
        let q = e.quantiles(levels)?;
        for (k, &level) in levels.iter().enumerate() {
            for (t, v) in q[k].iter().enumerate() {
                quantiles.push(QuantileRow {
                    window_id: i,
                    horizon_index: t,
                    level,
                    value: stats.denormalize(*v),
                });
            }
        }
        let mean = e.mean()?;
        let (lo, hi) = e.band80()?;
        for t in 0..mean.len() {
            band.push(BandRow {
                window_id: i,
                horizon_index: t,
                mean: stats.denormalize(mean[t]),
                lo80: stats.denormalize(lo[t]),
                hi80: stats.denormalize(hi[t]),
                truth: stats.denormalize(w.y_pred[t]),
            });
        }
    }
    write_rows(&dir.join("ensembles.csv"), samples)?;
    write_rows(&dir.join("quantiles.csv"), quantiles)?;
    write_rows(&dir.join("band.csv"), band)
}

/// Window starts and normalized ensembles from a forecast directory.
pub fn read_forecasts(dir: &Path) -> Result<(Vec<usize>, Vec<ForecastEnsemble>)> {
    let wpath = dir.join("windows.csv");
    let windows: Vec<WindowRow> = read_rows(&wpath)?;
    for (i, w) in windows.iter().enumerate() {
        if w.window_id != i {
            return Err(Error::Misaligned(format!(
                "{}: window ids must run 0..n",
                wpath.display()
            )));
        }
    }
    let spath = dir.join("ensembles.csv");
    let rows: Vec<SampleRow> = read_rows(&spath)?;
    let mut grouped: BTreeMap<usize, BTreeMap<usize, Vec<(usize, f64)>>> = BTreeMap::new();
    for r in rows {
        if r.window_id >= windows.len() {
            return Err(Error::Misaligned(format!(
                "{}: unknown window id {}",
                spath.display(),
                r.window_id
            )));
        }
        grouped
            .entry(r.window_id)
            .or_default()
            .entry(r.sample_id)
            .or_default()
            .push((r.horizon_index, r.value_normalized));
    }
    let mut ensembles = Vec::with_capacity(windows.len());
    for w in &windows {
        let members = grouped
            .remove(&w.window_id)
            .ok_or_else(|| Error::Misaligned(format!("window {} has no samples", w.window_id)))?;
        let samples = members
            .into_values()
            .map(|mut pts| {
                pts.sort_by_key(|p| p.0);
                if pts.iter().enumerate().any(|(i, p)| p.0 != i) {
                    return Err(Error::Misaligned(format!(
                        "window {}: horizon indices have gaps",
                        w.window_id
                    )));
                }
                Ok(pts.into_iter().map(|p| p.1).collect())
            })
            .collect::<Result<Vec<Vec<f64>>>>()?;
        ensembles.push(ForecastEnsemble {
            samples,
            stats: Stats {
                mu: w.mu,
                sigma: w.sigma,
            },
        });
    }
    Ok((windows.iter().map(|w| w.start).collect(), ensembles))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastMeta {
    pub dataset: String,
    pub method: String,
    pub config_hash: String,
    pub checkpoint_hash: Option<String>,
    pub seed: u64,
    pub members: usize,
    pub sample_steps: usize,
    pub future: FutureMode,
    pub windows: usize,
    pub artifact_version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowReport {
    pub window_id: usize,
    pub start: usize,
    #[serde(flatten)]
    pub scores: WindowScores,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: String,
    pub horizon: usize,
    pub members: usize,
    pub seed: u64,
    pub future: FutureMode,
    pub config_hash: String,
    pub aggregate_mode: AggregateMode,
    /// How each metric is computed, for readers comparing against other tools.
    pub conventions: BTreeMap<String, String>,
    pub aggregate: WindowScores,
    pub windows: Vec<WindowReport>,
}

pub fn conventions(season: usize) -> BTreeMap<String, String> {
    [
        ("units", "per-window re-normalized (history mean and std)"),
        ("point_forecast", "ensemble mean per time step"),
        ("pinball", "2 * (q * max(y - yhat, 0) + (1 - q) * max(yhat - y, 0))"),
        ("wql", "sum of pinball over levels and steps / (levels * sum |y|)"),
        ("sql", "mean pinball / seasonal-naive scale"),
        ("crps", "mean_s |x_s - y| - 0.5 * mean_{s,s'} |x_s - x_s'|"),
        ("quantiles", "linear interpolation between order statistics"),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), v.to_string()))
    .chain(std::iter::once((
        String::from("mase_scale"),
        format!("in-window history seasonal-naive MAE, lag {season}"),
    )))
    .collect()
}

/// The dataset × metric table.
pub fn write_report_csv(path: &Path, reports: &[EvalReport]) -> Result<()> {
    let mut w = csv_writer(path)?;
    let mut header = vec!["dataset", "method"];
    header.extend(WindowScores::NAMES);
    w.write_record(&header).map_err(|e| csv_err(path, e))?;
    for r in reports {
        let mut row = vec![r.dataset.clone(), r.method.clone()];
        row.extend(r.aggregate.values().iter().map(|v| v.to_string()));
        w.write_record(&row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}

/// Writes a header and string rows.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv_writer(path)?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(io_err(path))
}
