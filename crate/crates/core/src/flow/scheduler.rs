//! Training-time distributions over the flow time `t`.

use core::f64::consts::{FRAC_1_SQRT_2, PI};
use rand::{Rng, RngCore};
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Draws are clamped to `[T_EPS, 1 - T_EPS]`.
pub const T_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SchedulerKind {
    /// `t ~ U(0, 1)`.
    Linear,
    /// `t = 1 − cos(πu/2)`, `u ~ U(0, 1)`.
    Cosine,
    /// Logit-normal: `t = sigmoid(z)`, `z ~ N(m, s²)`.
    #[default]
    LogNormal,
    /// `t = exp(z)`, `z ~ N(m, s²)`, clamped into the unit interval.
    LogNormalClamped,
}

impl SchedulerKind {
    pub const ALL: [SchedulerKind; 4] = [
        SchedulerKind::Linear,
        SchedulerKind::Cosine,
        SchedulerKind::LogNormal,
        SchedulerKind::LogNormalClamped,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchedulerKind::Linear => "linear",
            SchedulerKind::Cosine => "cosine",
            SchedulerKind::LogNormal => "log-normal",
            SchedulerKind::LogNormalClamped => "log-normal-clamped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scheduler {
    pub kind: SchedulerKind,
    /// Location `m` of the underlying normal.
    pub loc: f64,
    /// Scale `s` of the underlying normal.
    pub scale: f64,
}

fn clamp_t(t: f64) -> f64 {
    t.clamp(T_EPS, 1.0 - T_EPS)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

impl Scheduler {
    pub fn new(kind: SchedulerKind) -> Self {
        Scheduler {
            kind,
            loc: 0.0,
            scale: 1.0,
        }
    }

    pub fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        match self.kind {
            SchedulerKind::Linear => clamp_t(rng.random::<f64>()),
            SchedulerKind::Cosine => {
                let u: f64 = rng.random();
                clamp_t(1.0 - libm::cos(PI * u / 2.0))
            }
            SchedulerKind::LogNormal => {
                let z: f64 = StandardNormal.sample(rng);
                let z = self.loc + self.scale * z;
                clamp_t(1.0 / (1.0 + libm::exp(-z)))
            }
            SchedulerKind::LogNormalClamped => {
                let z: f64 = StandardNormal.sample(rng);
                clamp_t(libm::exp(self.loc + self.scale * z))
            }
        }
    }

    /// Distribution function of the unclamped draw, restricted to the
    /// clamping interval (the clamped tails appear as atoms at its ends).
    pub fn cdf(&self, t: f64) -> f64 {
        if t < T_EPS {
            return 0.0;
        }
        if t >= 1.0 - T_EPS {
            return 1.0;
        }
        match self.kind {
            SchedulerKind::Linear => t,
            SchedulerKind::Cosine => 2.0 / PI * libm::acos(1.0 - t),
            SchedulerKind::LogNormal => normal_cdf((libm::log(t / (1.0 - t)) - self.loc) / self.scale),
            SchedulerKind::LogNormalClamped => normal_cdf((libm::log(t) - self.loc) / self.scale),
        }
    }
}

/// Kolmogorov–Smirnov distance between a sample and a distribution function.
/// Ties are handled by comparing both one-sided limits at each distinct value.
pub fn ks_statistic(samples: &mut [f64], cdf: impl Fn(f64) -> f64) -> f64 {
    samples.sort_by(f64::total_cmp);
    let n = samples.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < samples.len() {
        let x = samples[i];
        let mut j = i;
        while j < samples.len() && samples[j] == x {
            j += 1;
        }
        let below = i as f64 / n;
        let upto = j as f64 / n;
        d = d
            .max(libm::fabs(upto - cdf(x)))
            .max(libm::fabs(below - cdf(x.next_down())));
        i = j;
    }
    d
}
