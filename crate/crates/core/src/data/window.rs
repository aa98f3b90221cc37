use alloc::vec;
use alloc::vec::Vec;
use core::ops::Range;
use serde::{Deserialize, Serialize};

use super::{CovariateKind, DataError, SeriesPanel, SplitMode};

/// Standard-deviation floor used by re-normalization.
pub const RENORM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FutureMode {
    /// Known-future covariates keep their horizon values.
    #[default]
    WithFuture,
    /// Every covariate is zeroed over the horizon.
    WithoutFuture,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct WindowSpec {
    pub history: usize,
    pub horizon: usize,
    pub stride: usize,
    pub patch_len: usize,
    pub future: FutureMode,
}

impl WindowSpec {
    pub fn validate(&self) -> Result<(), DataError> {
        if self.history == 0 || self.horizon == 0 || self.stride == 0 || self.patch_len == 0 {
            return Err(DataError::InvalidWindow(
                "history, horizon, stride and patch length must be positive",
            ));
        }
        if !self.horizon.is_multiple_of(self.patch_len) {
            return Err(DataError::InvalidWindow(
                "horizon must be a multiple of the patch length",
            ));
        }
        Ok(())
    }

    /// History length after left padding to a multiple of the patch length.
    pub fn padded_history(&self) -> usize {
        self.history.div_ceil(self.patch_len) * self.patch_len
    }

    /// Total model input length `L' + H`.
    pub fn total_len(&self) -> usize {
        self.padded_history() + self.horizon
    }
}

/// Mean and floored standard deviation of one series segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub mu: f64,
    pub sigma: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Stats {
        let n = values.len().max(1) as f64;
        let mu = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
        Stats {
            mu,
            sigma: libm::sqrt(var).max(RENORM_EPS),
        }
    }

    pub fn normalize(&self, v: f64) -> f64 {
        (v - self.mu) / self.sigma
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        v * self.sigma + self.mu
    }
}

/// One raw (un-normalized) training or evaluation sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesWindow {
    /// Panel index of the first unpadded history point.
    pub start: usize,
    /// Number of edge-replicated points prepended to the history.
    pub pad: usize,
    /// Padded history, length `L'`.
    pub x_hist: Vec<f64>,
    /// Prediction target, length `H`.
    pub y_pred: Vec<f64>,
    /// Row-major `(L' + H) × C` covariate block.
    pub cov: Vec<f64>,
    pub n_cov: usize,
    /// Per covariate: whether the horizon region is zeroed.
    pub horizon_masked: Vec<bool>,
}

impl SeriesWindow {
    pub fn hist_len(&self) -> usize {
        self.x_hist.len()
    }

    pub fn horizon(&self) -> usize {
        self.y_pred.len()
    }

    pub fn total_len(&self) -> usize {
        self.x_hist.len() + self.y_pred.len()
    }

    pub fn cov_at(&self, t: usize, i: usize) -> f64 {
        self.cov[t * self.n_cov + i]
    }

    /// Per-window standardization using history-only statistics.
    pub fn renormalize(&self) -> NormalizedWindow {
        let lp = self.hist_len();
        let h = self.horizon();
        let total = lp + h;
        let target = Stats::of(&self.x_hist[self.pad..]);
        let x_hist = self.x_hist.iter().map(|&v| target.normalize(v)).collect();
        let y_pred = self.y_pred.iter().map(|&v| target.normalize(v)).collect();
        let c = self.n_cov;
        let mut covariates = Vec::with_capacity(c);
        let mut column = Vec::with_capacity(lp);
        for i in 0..c {
            column.clear();
            column.extend((self.pad..lp).map(|t| self.cov_at(t, i)));
            covariates.push(Stats::of(&column));
        }
        let mut cov = vec![0.0; total * c];
        for t in 0..total {
            for (i, st) in covariates.iter().enumerate() {
                if t >= lp && self.horizon_masked[i] {
                    continue;
                }
                cov[t * c + i] = st.normalize(self.cov_at(t, i));
            }
        }
        NormalizedWindow {
            start: self.start,
            pad: self.pad,
            x_hist,
            y_pred,
            cov,
            n_cov: c,
            stats: RenormStats { target, covariates },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RenormStats {
    pub target: Stats,
    pub covariates: Vec<Stats>,
}

/// A window in per-sample standardized units, as consumed by the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedWindow {
    pub start: usize,
    pub pad: usize,
    pub x_hist: Vec<f64>,
    pub y_pred: Vec<f64>,
    pub cov: Vec<f64>,
    pub n_cov: usize,
    pub stats: RenormStats,
}

impl NormalizedWindow {
    pub fn hist_len(&self) -> usize {
        self.x_hist.len()
    }

    pub fn horizon(&self) -> usize {
        self.y_pred.len()
    }

    pub fn total_len(&self) -> usize {
        self.x_hist.len() + self.y_pred.len()
    }

    /// History without the edge padding.
    pub fn history(&self) -> &[f64] {
        &self.x_hist[self.pad..]
    }
}

/// Maps normalized values back to the original scale.
pub fn denormalize(values: &[f64], stats: &Stats) -> Vec<f64> {
    values.iter().map(|&v| stats.denormalize(v)).collect()
}

/// Number of windows a split of length `len` yields.
pub fn window_count(len: usize, history: usize, horizon: usize, stride: usize) -> usize {
    if len < history + horizon {
        0
    } else {
        (len - history - horizon) / stride + 1
    }
}

/// Slides a window over `range` of `panel`.
pub fn make_windows(
    panel: &SeriesPanel,
    range: Range<usize>,
    spec: &WindowSpec,
    mode: SplitMode,
) -> Result<Vec<SeriesWindow>, DataError> {
    spec.validate()?;
    if range.end > panel.len() {
        return Err(DataError::InvalidWindow("split range exceeds panel length"));
    }
    let (l, h) = (spec.history, spec.horizon);
    let first = match mode {
        SplitMode::Strict => range.start,
        SplitMode::BorrowLookback => range.start.saturating_sub(l),
    };
    let len = range.end - first;
    if len < l + h {
        return Err(DataError::SplitTooShort { len, needed: l + h });
    }
    let count = window_count(len, l, h, spec.stride);
    let mut out = Vec::with_capacity(count);
    for k in 0..count {
        out.push(extract(panel, first + k * spec.stride, spec));
    }
    Ok(out)
}

fn extract(panel: &SeriesPanel, start: usize, spec: &WindowSpec) -> SeriesWindow {
    let (l, h) = (spec.history, spec.horizon);
    let lp = spec.padded_history();
    let pad = lp - l;
    let target = panel.target();
    let mut x_hist = Vec::with_capacity(lp);
    x_hist.extend(core::iter::repeat_n(target[start], pad));
    x_hist.extend_from_slice(&target[start..start + l]);
    let y_pred = target[start + l..start + l + h].to_vec();
    let c = panel.n_covariates();
    let horizon_masked: Vec<bool> = panel
        .covariates()
        .iter()
        .map(|cv| spec.future == FutureMode::WithoutFuture || cv.kind == CovariateKind::PastOnly)
        .collect();
    let total = lp + h;
    let mut cov = vec![0.0; total * c];
    for (i, cv) in panel.covariates().iter().enumerate() {
        for t in 0..total {
            if t >= lp && horizon_masked[i] {
                continue;
            }
            let src = start + t.saturating_sub(pad);
            cov[t * c + i] = cv.values[src];
        }
    }
    SeriesWindow {
        start,
        pad,
        x_hist,
        y_pred,
        cov,
        n_cov: c,
        horizon_masked,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Covariate;
    use alloc::string::String;

    fn panel(n: usize, kinds: &[CovariateKind]) -> SeriesPanel {
        let covs = kinds
            .iter()
            .enumerate()
            .map(|(i, &kind)| Covariate {
                name: String::from(["a", "b", "c"][i]),
                kind,
                values: (0..n).map(|t| (t * (i + 2)) as f64).collect(),
            })
            .collect();
        SeriesPanel::new((0..n as i64).collect(), (0..n).map(|t| t as f64).collect(), covs).unwrap()
    }

    fn spec(l: usize, h: usize, p: usize, future: FutureMode) -> WindowSpec {
        WindowSpec {
            history: l,
            horizon: h,
            stride: 1,
            patch_len: p,
            future,
        }
    }

    #[test]
    fn nine_windows_for_t200() {
        let p = panel(200, &[]);
        let w = make_windows(
            &p,
            0..200,
            &spec(168, 24, 24, FutureMode::WithFuture),
            SplitMode::Strict,
        )
        .unwrap();
        assert_eq!(w.len(), 9);
    }

    #[test]
    fn without_future_zeroes_horizon() {
        let p = panel(60, &[CovariateKind::KnownFuture, CovariateKind::KnownFuture]);
        let ws = make_windows(&p, 0..60, &spec(16, 8, 8, FutureMode::WithoutFuture), SplitMode::Strict).unwrap();
        for w in &ws {
            for t in 16..24 {
                assert_eq!(w.cov_at(t, 0), 0.0);
                assert_eq!(w.cov_at(t, 1), 0.0);
            }
        }
    }

    #[test]
    fn with_future_keeps_known_future_only() {
        let p = panel(60, &[CovariateKind::KnownFuture, CovariateKind::PastOnly]);
        let ws = make_windows(&p, 0..60, &spec(16, 8, 8, FutureMode::WithFuture), SplitMode::Strict).unwrap();
        let w = &ws[3];
        for t in 16..24 {
            assert_eq!(w.cov_at(t, 0), p.covariate(0).values[w.start + t]);
            assert_eq!(w.cov_at(t, 1), 0.0);
        }
    }

    #[test]
    fn pads_history_with_edge_value() {
        let p = panel(40, &[CovariateKind::KnownFuture]);
        let ws = make_windows(&p, 5..40, &spec(10, 8, 4, FutureMode::WithFuture), SplitMode::Strict).unwrap();
        let w = &ws[0];
        assert_eq!(w.pad, 2);
        assert_eq!(&w.x_hist[..4], &[5.0, 5.0, 5.0, 6.0]);
        assert_eq!(w.cov_at(0, 0), w.cov_at(2, 0));
        assert_eq!(w.total_len(), 20);
        // statistics ignore the padding
        let n = w.renormalize();
        assert_eq!(n.stats.target.mu, 9.5);
    }

    #[test]
    fn split_too_short() {
        let p = panel(30, &[]);
        let err = make_windows(&p, 0..30, &spec(24, 8, 8, FutureMode::WithFuture), SplitMode::Strict).unwrap_err();
        assert_eq!(err, DataError::SplitTooShort { len: 30, needed: 32 });
    }

    #[test]
    fn strict_windows_stay_inside_split() {
        let p = panel(300, &[]);
        let ws = make_windows(
            &p,
            100..300,
            &spec(48, 24, 24, FutureMode::WithFuture),
            SplitMode::Strict,
        )
        .unwrap();
        assert!(ws.iter().all(|w| w.start >= 100 && w.start + 72 <= 300));
        let ws = make_windows(
            &p,
            100..300,
            &spec(48, 24, 24, FutureMode::WithFuture),
            SplitMode::BorrowLookback,
        )
        .unwrap();
        assert_eq!(ws[0].start, 52);
        assert!(ws.iter().all(|w| w.start + 48 >= 100));
    }

    #[test]
    fn renormalize_two_points() {
        let w = SeriesWindow {
            start: 0,
            pad: 0,
            x_hist: vec![0.0, 2.0],
            y_pred: vec![3.0, 5.0],
            cov: vec![],
            n_cov: 0,
            horizon_masked: vec![],
        };
        let n = w.renormalize();
        assert_eq!(n.stats.target, Stats { mu: 1.0, sigma: 1.0 });
        assert_eq!(n.x_hist, vec![-1.0, 1.0]);
        assert_eq!(n.y_pred, vec![2.0, 4.0]);
    }

    #[test]
    fn constant_history_floors_sigma() {
        let w = SeriesWindow {
            start: 0,
            pad: 0,
            x_hist: vec![2.0; 4],
            y_pred: vec![2.0],
            cov: vec![],
            n_cov: 0,
            horizon_masked: vec![],
        };
        let n = w.renormalize();
        assert_eq!(n.x_hist, vec![0.0; 4]);
        assert_eq!(n.stats.target.sigma, RENORM_EPS);
    }
}
