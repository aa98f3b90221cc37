//! Synthetic panels with known structure, used as analytic oracles.

use alloc::vec::Vec;
use alloc::{format, vec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{Covariate, CovariateKind, DataError, SeriesPanel};

/// Range of sinusoid periods (in steps) for generated covariates.
pub const COVARIATE_PERIODS: (f64, f64) = (8.0, 48.0);

const TAU: f64 = core::f64::consts::TAU;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticPanel {
    pub panel: SeriesPanel,
    /// Bayes-optimal horizon MSE in normalized units: `σ² / Var(target)`.
    pub oracle_floor: f64,
}

fn timestamps(n: usize) -> Vec<i64> {
    (0..n as i64).map(|t| t * 3600).collect()
}

/// Noise level whose oracle floor equals `floor` for the given weights.
pub fn noise_sigma_for_floor(weights: &[f64], floor: f64) -> f64 {
    let signal: f64 = weights.iter().map(|w| w * w).sum();
    libm::sqrt(floor * signal / (1.0 - floor))
}

/// `target_t = Σ_i w_i · cov_{i,t} + ε_t` where every covariate is the sum of
/// two unit-amplitude sinusoids with random periods and phases, known in advance.
pub fn synth_covariate_regression(
    seed: u64,
    t_total: usize,
    n_cov: usize,
    weights: &[f64],
    noise_sigma: f64,
) -> Result<SyntheticPanel, DataError> {
    if weights.len() != n_cov {
        return Err(DataError::InvalidSynthetic("weights must have one entry per covariate"));
    }
    if noise_sigma < 0.0 || !noise_sigma.is_finite() {
        return Err(DataError::InvalidSynthetic(
            "noise sigma must be finite and non-negative",
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut covariates = Vec::with_capacity(n_cov);
    for i in 0..n_cov {
        let comps: Vec<(f64, f64)> = (0..2)
            .map(|_| {
                let period = rng.random_range(COVARIATE_PERIODS.0..COVARIATE_PERIODS.1);
                let phase = rng.random_range(0.0..TAU);
                (TAU / period, phase)
            })
            .collect();
        let values = (0..t_total)
            .map(|t| comps.iter().map(|&(w, p)| libm::sin(w * t as f64 + p)).sum())
            .collect();
        covariates.push(Covariate {
            name: format!("cov{i}"),
            kind: CovariateKind::KnownFuture,
            values,
        });
    }
    let noise = Normal::new(0.0, noise_sigma).map_err(|_| DataError::InvalidSynthetic("bad noise sigma"))?;
    let target = (0..t_total)
        .map(|t| {
            let signal: f64 = weights.iter().zip(&covariates).map(|(w, c)| w * c.values[t]).sum();
            signal + noise.sample(&mut rng)
        })
        .collect();
    let signal_var: f64 = weights.iter().map(|w| w * w).sum();
    let noise_var = noise_sigma * noise_sigma;
    let total_var = signal_var + noise_var;
    let oracle_floor = if total_var > 0.0 { noise_var / total_var } else { 0.0 };
    Ok(SyntheticPanel {
        panel: SeriesPanel::new(timestamps(t_total), target, covariates)?,
        oracle_floor,
    })
}

/// Multi-scale seasonal signal plus AR(1) noise, without covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EndogenousSpec {
    pub periods: Vec<f64>,
    pub amplitudes: Vec<f64>,
    pub ar_coef: f64,
    pub noise_sigma: f64,
    /// Draw a random phase per component; zero phase otherwise.
    #[serde(default = "default_true")]
    pub random_phase: bool,
}

fn default_true() -> bool {
    true
}

impl Default for EndogenousSpec {
    fn default() -> Self {
        EndogenousSpec {
            periods: vec![24.0, 168.0],
            amplitudes: vec![1.0, 0.5],
            ar_coef: 0.5,
            noise_sigma: 0.2,
            random_phase: true,
        }
    }
}

pub fn synth_endogenous(seed: u64, t_total: usize, spec: &EndogenousSpec) -> Result<SeriesPanel, DataError> {
    if spec.periods.len() != spec.amplitudes.len() {
        return Err(DataError::InvalidSynthetic("periods and amplitudes differ in length"));
    }
    if spec.periods.iter().any(|&p| p <= 0.0) {
        return Err(DataError::InvalidSynthetic("periods must be positive"));
    }
    if spec.ar_coef.abs() >= 1.0 {
        return Err(DataError::InvalidSynthetic("AR coefficient must lie in (-1, 1)"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let phases: Vec<f64> = spec
        .periods
        .iter()
        .map(|_| {
            if spec.random_phase {
                rng.random_range(0.0..TAU)
            } else {
                0.0
            }
        })
        .collect();
    let noise = Normal::new(0.0, spec.noise_sigma).map_err(|_| DataError::InvalidSynthetic("bad noise sigma"))?;
    let mut ar = 0.0;
    let target = (0..t_total)
        .map(|t| {
            ar = spec.ar_coef * ar + noise.sample(&mut rng);
            let seasonal: f64 = spec
                .periods
                .iter()
                .zip(&spec.amplitudes)
                .zip(&phases)
                .map(|((p, a), ph)| a * libm::sin(TAU * t as f64 / p + ph))
                .sum();
            seasonal + ar
        })
        .collect();
    SeriesPanel::new(timestamps(t_total), target, Vec::new())
}
