//! Point and probabilistic forecast scores.
//!
//! Quantile losses use the pinball loss `2·(q·max(y−ŷ,0) + (1−q)·max(ŷ−y,0))`.
//! WQL divides by `|Q|·Σ|y|`, SQL by the seasonal-naive MAE of the history.

use alloc::vec::Vec;
use core::fmt;
use serde::{Deserialize, Serialize};

/// Quantile levels 0.1, 0.2, ..., 0.9.
pub const DEFAULT_LEVELS: [f64; 9] = [0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9];

#[derive(Debug, Clone, PartialEq)]
pub enum MetricError {
    Empty,
    LengthMismatch { forecast: usize, truth: usize },
    ZeroDenominator(&'static str),
    SeriesTooShort { len: usize, season: usize },
    NonPositive { index: usize, value: f64 },
    InvalidLevel(f64),
}

impl fmt::Display for MetricError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MetricError::Empty => f.write_str("metric input is empty"),
            MetricError::LengthMismatch { forecast, truth } => {
                write!(f, "forecast length {forecast} differs from truth length {truth}")
            }
            MetricError::ZeroDenominator(what) => write!(f, "{what} has a zero denominator"),
            MetricError::SeriesTooShort { len, season } => {
                write!(f, "series of length {len} is too short for seasonality {season}")
            }
            MetricError::NonPositive { index, value } => {
                write!(f, "geometric mean needs positive values, entry {index} is {value}")
            }
            MetricError::InvalidLevel(q) => write!(f, "quantile level {q} outside (0, 1)"),
        }
    }
}

impl core::error::Error for MetricError {}

type Result<T> = core::result::Result<T, MetricError>;

fn check_pair(yhat: &[f64], y: &[f64]) -> Result<()> {
    if y.is_empty() {
        return Err(MetricError::Empty);
    }
    if yhat.len() != y.len() {
        return Err(MetricError::LengthMismatch {
            forecast: yhat.len(),
            truth: y.len(),
        });
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PointMetrics {
    pub mse: f64,
    pub mae: f64,
    pub wape: f64,
}

pub fn mse(yhat: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(yhat, y)?;
    Ok(yhat.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / y.len() as f64)
}

pub fn mae(yhat: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(yhat, y)?;
    Ok(abs_err_sum(yhat, y) / y.len() as f64)
}

fn abs_err_sum(yhat: &[f64], y: &[f64]) -> f64 {
    yhat.iter().zip(y).map(|(a, b)| libm::fabs(a - b)).sum()
}

/// `Σ|ŷ−y| / Σ|y|`.
pub fn wape(yhat: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(yhat, y)?;
    let denom: f64 = y.iter().map(|v| libm::fabs(*v)).sum();
    if denom == 0.0 {
        return Err(MetricError::ZeroDenominator("WAPE"));
    }
    Ok(abs_err_sum(yhat, y) / denom)
}

pub fn point_metrics(yhat: &[f64], y: &[f64]) -> Result<PointMetrics> {
    Ok(PointMetrics {
        mse: mse(yhat, y)?,
        mae: mae(yhat, y)?,
        wape: wape(yhat, y)?,
    })
}

/// In-sample MAE of the seasonal-naive forecast `train[t-m]` over `t ≥ m`.
pub fn seasonal_naive_scale(train: &[f64], season: usize) -> Result<f64> {
    let m = season.max(1);
    if train.len() <= m {
        return Err(MetricError::SeriesTooShort {
            len: train.len(),
            season: m,
        });
    }
    let s: f64 = (m..train.len()).map(|t| libm::fabs(train[t] - train[t - m])).sum();
    let scale = s / (train.len() - m) as f64;
    if scale == 0.0 {
        return Err(MetricError::ZeroDenominator("seasonal-naive scale"));
    }
    Ok(scale)
}

pub fn mase(yhat: &[f64], y: &[f64], train: &[f64], season: usize) -> Result<f64> {
    let scale = seasonal_naive_scale(train, season)?;
    Ok(mae(yhat, y)? / scale)
}

/// Repeats the last season of `train` over `horizon` steps.
pub fn seasonal_naive_forecast(train: &[f64], season: usize, horizon: usize) -> Result<Vec<f64>> {
    let m = season.max(1);
    if train.len() < m {
        return Err(MetricError::SeriesTooShort {
            len: train.len(),
            season: m,
        });
    }
    let base = train.len() - m;
    Ok((0..horizon).map(|h| train[base + h % m]).collect())
}

pub fn pinball(q: f64, y: f64, yhat: f64) -> f64 {
    2.0 * (q * (y - yhat).max(0.0) + (1.0 - q) * (yhat - y).max(0.0))
}

/// Linear interpolation between order statistics of an ascending sample
/// (position `q·(n−1)`).
pub fn empirical_quantile(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let pos = q * (n - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(n - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

fn check_levels(levels: &[f64]) -> Result<()> {
    if levels.is_empty() {
        return Err(MetricError::Empty);
    }
    match levels.iter().find(|&&q| !(q > 0.0 && q < 1.0)) {
        Some(&q) => Err(MetricError::InvalidLevel(q)),
        None => Ok(()),
    }
}

fn check_ensemble(ensemble: &[Vec<f64>]) -> Result<usize> {
    let first = ensemble.first().ok_or(MetricError::Empty)?;
    let h = first.len();
    if h == 0 {
        return Err(MetricError::Empty);
    }
    for m in ensemble {
        if m.len() != h {
            return Err(MetricError::LengthMismatch {
                forecast: m.len(),
                truth: h,
            });
        }
    }
    Ok(h)
}

/// Per-timestep mean over members, shifted by the first member so identical
/// members average exactly.
pub fn ensemble_mean(ensemble: &[Vec<f64>]) -> Result<Vec<f64>> {
    let h = check_ensemble(ensemble)?;
    let s = ensemble.len() as f64;
    let first = &ensemble[0];
    Ok((0..h)
        .map(|t| first[t] + ensemble.iter().map(|m| m[t] - first[t]).sum::<f64>() / s)
        .collect())
}

/// Empirical quantiles of an `S × H` ensemble, returned as `[level][t]`.
pub fn ensemble_quantiles(ensemble: &[Vec<f64>], levels: &[f64]) -> Result<Vec<Vec<f64>>> {
    let h = check_ensemble(ensemble)?;
    check_levels(levels)?;
    let mut out = vec_of(levels.len(), h);
    let mut column = Vec::with_capacity(ensemble.len());
    for t in 0..h {
        column.clear();
        column.extend(ensemble.iter().map(|m| m[t]));
        column.sort_by(f64::total_cmp);
        for (k, &q) in levels.iter().enumerate() {
            out[k][t] = empirical_quantile(&column, q);
        }
    }
    Ok(out)
}

fn vec_of(rows: usize, cols: usize) -> Vec<Vec<f64>> {
    (0..rows).map(|_| alloc::vec![0.0; cols]).collect()
}

fn pinball_sum(quantiles: &[Vec<f64>], levels: &[f64], y: &[f64]) -> Result<f64> {
    check_levels(levels)?;
    if quantiles.len() != levels.len() {
        return Err(MetricError::LengthMismatch {
            forecast: quantiles.len(),
            truth: levels.len(),
        });
    }
    let mut total = 0.0;
    for (qs, &q) in quantiles.iter().zip(levels) {
        check_pair(qs, y)?;
        total += qs.iter().zip(y).map(|(&f, &obs)| pinball(q, obs, f)).sum::<f64>();
    }
    Ok(total)
}

/// `Σ_{t,q} ρ_q / (|Q|·Σ_t|y_t|)`.
pub fn wql(quantiles: &[Vec<f64>], levels: &[f64], y: &[f64]) -> Result<f64> {
    let total = pinball_sum(quantiles, levels, y)?;
    let denom: f64 = y.iter().map(|v| libm::fabs(*v)).sum::<f64>() * levels.len() as f64;
    if denom == 0.0 {
        return Err(MetricError::ZeroDenominator("WQL"));
    }
    Ok(total / denom)
}

/// Mean pinball loss over `(t, q)` divided by the seasonal-naive scale.
pub fn sql(quantiles: &[Vec<f64>], levels: &[f64], y: &[f64], scale: f64) -> Result<f64> {
    if scale <= 0.0 {
        return Err(MetricError::ZeroDenominator("SQL"));
    }
    let total = pinball_sum(quantiles, levels, y)?;
    Ok(total / (levels.len() * y.len()) as f64 / scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuantileLosses {
    pub wql: f64,
    pub sql: f64,
}

pub fn quantile_losses(
    ensemble: &[Vec<f64>],
    y: &[f64],
    levels: &[f64],
    train: &[f64],
    season: usize,
) -> Result<QuantileLosses> {
    let q = ensemble_quantiles(ensemble, levels)?;
    let scale = seasonal_naive_scale(train, season)?;
    Ok(QuantileLosses {
        wql: wql(&q, levels, y)?,
        sql: sql(&q, levels, y, scale)?,
    })
}

/// Ensemble CRPS estimator: `mean_t [mean_s|x_s−y_t| − ½·mean_{s,s'}|x_s−x_s'|]`.
pub fn crps(ensemble: &[Vec<f64>], y: &[f64]) -> Result<f64> {
    let h = check_ensemble(ensemble)?;
    if h != y.len() {
        return Err(MetricError::LengthMismatch {
            forecast: h,
            truth: y.len(),
        });
    }
    let s = ensemble.len();
    let mut column = Vec::with_capacity(s);
    let mut total = 0.0;
    for (t, &obs) in y.iter().enumerate() {
        column.clear();
        column.extend(ensemble.iter().map(|m| m[t]));
        let skill = column.iter().map(|x| libm::fabs(x - obs)).sum::<f64>() / s as f64;
        // Σ_{s,s'}|x_s − x_s'| = 2 Σ_i (2i − n + 1) x_(i) over the sorted sample;
        // the weights sum to zero, so shifting by x_(0) is free and exact for ties
        column.sort_by(f64::total_cmp);
        let spread: f64 = column
            .iter()
            .enumerate()
            .map(|(i, x)| (2.0 * i as f64 - s as f64 + 1.0) * (x - column[0]))
            .sum::<f64>()
            * 2.0
            / (s * s) as f64;
        // the exact value is non-negative; only rounding can push it below
        total += (skill - 0.5 * spread).max(0.0);
    }
    Ok(total / h as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AggregateMode {
    #[default]
    Arithmetic,
    Geometric,
}

pub fn aggregate(values: &[f64], mode: AggregateMode) -> Result<f64> {
    if values.is_empty() {
        return Err(MetricError::Empty);
    }
    let n = values.len() as f64;
    match mode {
        AggregateMode::Arithmetic => Ok(values.iter().sum::<f64>() / n),
        AggregateMode::Geometric => {
            let mut logs = 0.0;
            for (index, &value) in values.iter().enumerate() {
                if value <= 0.0 {
                    return Err(MetricError::NonPositive { index, value });
                }
                logs += libm::log(value);
            }
            Ok(libm::exp(logs / n))
        }
    }
}

/// All scores for one forecast window. MSE, MAE and WAPE use the ensemble mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WindowScores {
    pub mse: f64,
    pub mae: f64,
    pub wape: f64,
    pub mase: f64,
    pub wql: f64,
    pub sql: f64,
    pub crps: f64,
}

impl WindowScores {
    pub const NAMES: [&'static str; 7] = ["MSE", "MAE", "WAPE", "MASE", "WQL", "SQL", "CRPS"];

    pub fn values(&self) -> [f64; 7] {
        [self.mse, self.mae, self.wape, self.mase, self.wql, self.sql, self.crps]
    }

    fn from_values(v: [f64; 7]) -> Self {
        WindowScores {
            mse: v[0],
            mae: v[1],
            wape: v[2],
            mase: v[3],
            wql: v[4],
            sql: v[5],
            crps: v[6],
        }
    }
}

/// Scores an `S × H` ensemble against `y`; `history` sets the MASE/SQL scale.
pub fn score_window(
    ensemble: &[Vec<f64>],
    y: &[f64],
    history: &[f64],
    season: usize,
    levels: &[f64],
) -> Result<WindowScores> {
    let mean = ensemble_mean(ensemble)?;
    let p = point_metrics(&mean, y)?;
    let scale = seasonal_naive_scale(history, season)?;
    let q = ensemble_quantiles(ensemble, levels)?;
    Ok(WindowScores {
        mse: p.mse,
        mae: p.mae,
        wape: p.wape,
        mase: p.mae / scale,
        wql: wql(&q, levels, y)?,
        sql: sql(&q, levels, y, scale)?,
        crps: crps(ensemble, y)?,
    })
}

/// Metric-wise aggregate over windows.
pub fn aggregate_scores(scores: &[WindowScores], mode: AggregateMode) -> Result<WindowScores> {
    let mut out = [0.0; 7];
    let mut column = Vec::with_capacity(scores.len());
    for (k, slot) in out.iter_mut().enumerate() {
        column.clear();
        column.extend(scores.iter().map(|s| s.values()[k]));
        *slot = aggregate(&column, mode)?;
    }
    Ok(WindowScores::from_values(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_point_metrics() {
        let p = point_metrics(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
        assert_eq!((p.mse, p.mae, p.wape), (1.0, 1.0, 1.0));
    }

    #[test]
    fn two_member_crps() {
        assert_eq!(crps(&[vec![0.0], vec![2.0]], &[1.0]).unwrap(), 0.5);
    }

    #[test]
    fn crps_matches_pairwise_definition() {
        let ens: [Vec<f64>; 5] = [vec![0.3], vec![-1.2], vec![2.5], vec![0.3], vec![0.9]];
        let y: f64 = 0.4;
        let s = ens.len() as f64;
        let skill: f64 = ens.iter().map(|m| (m[0] - y).abs()).sum::<f64>() / s;
        let mut spread = 0.0;
        for a in &ens {
            for b in &ens {
                spread += (a[0] - b[0]).abs();
            }
        }
        let direct = skill - 0.5 * spread / (s * s);
        assert!((crps(&ens, &[y]).unwrap() - direct).abs() < 1e-15);
    }

    #[test]
    fn quantile_interpolation() {
        let s = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(empirical_quantile(&s, 0.5), 3.0);
        assert!((empirical_quantile(&s, 0.1) - 1.4).abs() < 1e-15);
        assert_eq!(empirical_quantile(&[7.0], 0.9), 7.0);
    }

    #[test]
    fn geometric_and_arithmetic() {
        assert!((aggregate(&[1.0, 4.0], AggregateMode::Geometric).unwrap() - 2.0).abs() < 1e-15);
        assert_eq!(aggregate(&[1.0, 4.0], AggregateMode::Arithmetic).unwrap(), 2.5);
        assert!(matches!(
            aggregate(&[], AggregateMode::Arithmetic),
            Err(MetricError::Empty)
        ));
        assert!(matches!(
            aggregate(&[1.0, 0.0], AggregateMode::Geometric),
            Err(MetricError::NonPositive { index: 1, .. })
        ));
    }

    #[test]
    fn seasonal_naive_repeats_last_season() {
        let f = seasonal_naive_forecast(&[1.0, 2.0, 3.0, 4.0, 5.0], 2, 5).unwrap();
        assert_eq!(f, vec![4.0, 5.0, 4.0, 5.0, 4.0]);
    }
}
