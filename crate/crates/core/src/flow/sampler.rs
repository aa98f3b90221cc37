//! Euler integration of the learned velocity field from noise to data.

use alloc::vec::Vec;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::path::standard_normal;
use super::FlowError;
use crate::data::{denormalize, NormalizedWindow, Stats};
use crate::metrics::{ensemble_mean, ensemble_quantiles, MetricError};
use crate::model::{DitsModel, ModelInput};

/// Largest number of trajectories evaluated in one forward pass.
pub const SAMPLE_BATCH: usize = 64;

/// Integrates `dx/dt = v(x, t)` from `t = 1` down to `t = 0` on a uniform grid:
/// `x_{t−Δt} = x_t − v(x_t, t)·Δt`.
pub fn euler_integrate<F>(x1: &[f64], steps: usize, mut velocity: F) -> Result<Vec<f64>, FlowError>
where
    F: FnMut(&[f64], f64) -> Result<Vec<f64>, FlowError>,
{
    if steps == 0 {
        return Err(FlowError::InvalidConfig(alloc::vec![alloc::string::String::from(
            "sample_steps must be at least 1"
        )]));
    }
    let dt = 1.0 / steps as f64;
    let mut x = x1.to_vec();
    for k in 0..steps {
        let t = 1.0 - k as f64 * dt;
        let v = velocity(&x, t)?;
        if v.len() != x.len() {
            return Err(FlowError::LengthMismatch {
                expected: x.len(),
                found: v.len(),
            });
        }
        for (xi, vi) in x.iter_mut().zip(&v) {
            *xi -= vi * dt;
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(FlowError::NonFinite { step: k });
        }
    }
    Ok(x)
}

/// Samples one trajectory per `(window, x1)` pair, in normalized units.
/// The history stays clean at every step.
pub fn sample_batch(
    model: &DitsModel,
    windows: &[&NormalizedWindow],
    x1: &[Vec<f64>],
    steps: usize,
) -> Result<Vec<Vec<f64>>, FlowError> {
    let first = windows.first().ok_or(FlowError::EmptyBatch)?;
    let (lp, h, c) = (first.hist_len(), first.horizon(), first.n_cov);
    let b = windows.len();
    if x1.len() != b || x1.iter().any(|x| x.len() != h) {
        return Err(FlowError::LengthMismatch {
            expected: b * h,
            found: x1.iter().map(Vec::len).sum(),
        });
    }
    let mut input = ModelInput::zeros(b, lp + h, c);
    for (i, w) in windows.iter().enumerate() {
        input.set_sample(i, &[&w.x_hist[..], &x1[i][..]].concat(), &w.cov, 1.0);
    }
    let flat: Vec<f64> = x1.concat();
    let out = euler_integrate(&flat, steps, |x, t| {
        for i in 0..b {
            input.x[i * (lp + h) + lp..(i + 1) * (lp + h)].copy_from_slice(&x[i * h..(i + 1) * h]);
            input.t[i] = t;
        }
        let v = model.predict(&input)?;
        let mut vh = Vec::with_capacity(b * h);
        for i in 0..b {
            vh.extend_from_slice(&v[i * (lp + h) + lp..(i + 1) * (lp + h)]);
        }
        Ok(vh)
    })?;
    Ok(out.chunks(h).map(<[f64]>::to_vec).collect())
}

/// Initial noise for ensemble member `member`: each member has its own ChaCha stream.
pub fn member_noise(seed: u64, member: usize, horizon: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(member as u64);
    standard_normal(&mut rng, horizon)
}

/// `S × H` sample paths for one window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastEnsemble {
    /// Normalized units, one row per member.
    pub samples: Vec<Vec<f64>>,
    pub stats: Stats,
}

impl ForecastEnsemble {
    pub fn members(&self) -> usize {
        self.samples.len()
    }

    pub fn mean(&self) -> Result<Vec<f64>, MetricError> {
        ensemble_mean(&self.samples)
    }

    /// `[level][t]`, monotone in the level.
    pub fn quantiles(&self, levels: &[f64]) -> Result<Vec<Vec<f64>>, MetricError> {
        ensemble_quantiles(&self.samples, levels)
    }

    /// `(q0.1, q0.9)` per time step.
    pub fn band80(&self) -> Result<(Vec<f64>, Vec<f64>), MetricError> {
        let mut q = self.quantiles(&[0.1, 0.9])?;
        let hi = q.pop().unwrap_or_default();
        let lo = q.pop().unwrap_or_default();
        Ok((lo, hi))
    }

    /// Samples mapped back to the window's original scale.
    pub fn denormalized(&self) -> Vec<Vec<f64>> {
        self.samples.iter().map(|s| denormalize(s, &self.stats)).collect()
    }
}

/// `members` independent Euler samples for one window; member `i` starts from
/// `member_noise(seed, i, H)`.
pub fn ensemble_forecast(
    model: &DitsModel,
    window: &NormalizedWindow,
    members: usize,
    steps: usize,
    seed: u64,
) -> Result<ForecastEnsemble, FlowError> {
    if members == 0 {
        return Err(FlowError::EmptyEnsemble);
    }
    let h = window.horizon();
    let mut samples = Vec::with_capacity(members);
    let mut start = 0;
    while start < members {
        let end = (start + SAMPLE_BATCH).min(members);
        let x1: Vec<Vec<f64>> = (start..end).map(|i| member_noise(seed, i, h)).collect();
        let ws: Vec<&NormalizedWindow> = (start..end).map(|_| window).collect();
        samples.extend(sample_batch(model, &ws, &x1, steps)?);
        start = end;
    }
    Ok(ForecastEnsemble {
        samples,
        stats: window.stats.target,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_velocity_telescopes() {
        let x = euler_integrate(&[1.0, 2.0], 7, |x, _| Ok(alloc::vec![0.5; x.len()])).unwrap();
        assert!((x[0] - 0.5).abs() < 1e-15 && (x[1] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn grid_visits_one_down_to_dt() {
        let mut seen = Vec::new();
        euler_integrate(&[0.0], 4, |x, t| {
            seen.push(t);
            Ok(alloc::vec![0.0; x.len()])
        })
        .unwrap();
        assert_eq!(seen, [1.0, 0.75, 0.5, 0.25]);
    }

    #[test]
    fn non_finite_names_step() {
        let r = euler_integrate(&[0.0], 3, |_, t| Ok(alloc::vec![if t < 0.9 { f64::NAN } else { 0.0 }]));
        assert!(matches!(r, Err(FlowError::NonFinite { step: 1 })));
    }
}
