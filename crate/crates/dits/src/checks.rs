//! Fast built-in verification used by the `grad-check` and `selftest` verbs.

use std::time::Instant;

use dits_core::data::{NormalizedWindow, RenormStats, Stats};
use dits_core::flow::{
    derive_seed, euler_integrate, ks_statistic, noising, standard_normal, velocity_loss, velocity_target, BatchItem,
    FlowError, Scheduler, SchedulerKind,
};
use dits_core::metrics::{crps, mae, score_window, DEFAULT_LEVELS};
use dits_core::model::{DitsModel, ModelConfig, ModelInput};
use dits_core::tensor::{grad_check, DEFAULT_STEP};
use dits_core::{Graph, ParamStore};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::Result;

pub const GRAD_TOLERANCE: f64 = 1e-4;

/// Replaces every parameter with a uniform draw in `[-scale, scale]`, so that
/// zero-initialized layers carry gradient signal through the whole network.
pub fn scramble(store: &mut ParamStore, seed: u64, scale: f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let ids: Vec<_> = store.ids().collect();
    for id in ids {
        for v in store.get_mut(id).data_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
}

/// A window of uniform noise with identity statistics.
pub fn random_window(rng: &mut impl Rng, hist: usize, horizon: usize, n_cov: usize) -> NormalizedWindow {
    NormalizedWindow {
        start: 0,
        pad: 0,
        x_hist: (0..hist).map(|_| rng.random_range(-2.0..2.0)).collect(),
        y_pred: (0..horizon).map(|_| rng.random_range(-2.0..2.0)).collect(),
        cov: (0..(hist + horizon) * n_cov)
            .map(|_| rng.random_range(-1.0..1.0))
            .collect(),
        n_cov,
        stats: RenormStats {
            target: Stats { mu: 0.0, sigma: 1.0 },
            covariates: vec![Stats { mu: 0.0, sigma: 1.0 }; n_cov],
        },
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GradCheckSummary {
    pub max_rel_err: f64,
    pub worst_param: String,
    pub evaluated: usize,
    pub seconds: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Velocity loss of the tiny model (D = 8, 2 heads, 1 block, N = 3, C = 2,
/// batch 2) against central differences over every parameter element.
pub fn grad_check_tiny(seed: u64) -> Result<GradCheckSummary> {
    let start = Instant::now();
    let cfg = ModelConfig::tiny(2, 48, 24, 24);
    let mut model = DitsModel::new(cfg, seed)?;
    scramble(&mut model.params, derive_seed(seed, 1), 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, 2));
    let windows: Vec<NormalizedWindow> = (0..2).map(|_| random_window(&mut rng, 48, 24, 2)).collect();
    let items: Vec<BatchItem> = windows
        .iter()
        .map(|w| BatchItem {
            window: w,
            t: rng.random_range(0.05..0.95),
            eps: standard_normal(&mut rng, 24),
        })
        .collect();
    let frozen = model.clone();
    let report = grad_check::<FlowError, _>(&mut model.params, DEFAULT_STEP, |g: &mut Graph, p: &ParamStore| {
        velocity_loss(g, &frozen, p, &items, None)
    })?;
    let worst = report
        .params
        .iter()
        .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
        .map(|p| p.name.clone())
        .unwrap_or_default();
    Ok(GradCheckSummary {
        max_rel_err: report.max_rel_err,
        worst_param: worst,
        evaluated: report.evaluated,
        seconds: start.elapsed().as_secs_f64(),
        tolerance: GRAD_TOLERANCE,
        passed: report.max_rel_err < GRAD_TOLERANCE,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &str, passed: bool, detail: String) -> Check {
    Check {
        name: name.to_string(),
        passed,
        detail,
    }
}

/// Quick invariants; each returns a pass/fail line rather than aborting.
pub fn selftest(seed: u64) -> Vec<Check> {
    let mut out = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let y: Vec<f64> = (0..24).map(|t| 1.0 + (t as f64 / 4.0).sin()).collect();
    let hist: Vec<f64> = (0..72).map(|t| (t as f64 / 3.0).cos()).collect();
    let perfect = score_window(&vec![y.clone(); 5], &y, &hist, 24, &DEFAULT_LEVELS);
    out.push(match perfect {
        Ok(s) => check(
            "perfect forecast scores zero",
            s.values().iter().all(|v| *v == 0.0),
            format!("{:?}", s.values()),
        ),
        Err(e) => check("perfect forecast scores zero", false, e.to_string()),
    });

    let v: Vec<f64> = y.iter().map(|x| x + 0.3 * (x * 7.0).sin()).collect();
    let d = (crps(&vec![v.clone(); 4], &y).unwrap_or(f64::NAN) - mae(&v, &y).unwrap_or(f64::NAN)).abs();
    out.push(check(
        "degenerate CRPS equals MAE",
        d < 1e-12,
        format!("|diff| = {d:e}"),
    ));
    let two = crps(&[vec![0.0], vec![2.0]], &[1.0]).unwrap_or(f64::NAN);
    out.push(check("two-member CRPS", two == 0.5, format!("{two}")));

    let x0 = standard_normal(&mut rng, 24);
    let eps = standard_normal(&mut rng, 24);
    let ends = noising(&x0, &eps, 0.0).ok() == Some(x0.clone()) && noising(&x0, &eps, 1.0).ok() == Some(eps.clone());
    out.push(check("noising endpoints", ends, String::new()));
    let vt = velocity_target(&x0, &eps);
    let rec = euler_integrate(&eps, 1, |_, _| Ok(vt.clone())).unwrap_or_default();
    let err = rec.iter().zip(&x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    out.push(check(
        "one Euler step recovers data",
        err < 1e-12,
        format!("max err {err:e}"),
    ));

    let cfg = ModelConfig::tiny(2, 48, 24, 24);
    match DitsModel::new(cfg, seed) {
        Ok(model) => {
            let mut input = ModelInput::zeros(4, 72, 2);
            for b in 0..4 {
                let x: Vec<f64> = (0..72).map(|_| rng.random_range(-3.0..3.0)).collect();
                let c: Vec<f64> = (0..144).map(|_| rng.random_range(-3.0..3.0)).collect();
                input.set_sample(b, &x, &c, rng.random_range(0.0..1.0));
            }
            let zero = model.predict(&input).map(|v| v.iter().all(|x| *x == 0.0));
            out.push(check(
                "zero-initialized velocity",
                zero == Ok(true),
                format!("{zero:?}"),
            ));
            let ck = Checkpoint::new(&model, String::new(), seed, None, None);
            let back = serde_json::to_string(&ck)
                .ok()
                .and_then(|s| serde_json::from_str::<Checkpoint>(&s).ok());
            out.push(check(
                "checkpoint round trip is bitwise",
                back.as_ref().map(|b| &b.params) == Some(&model.params),
                String::new(),
            ));
        }
        Err(e) => out.push(check("zero-initialized velocity", false, e.to_string())),
    }

    for kind in SchedulerKind::ALL {
        let s = Scheduler::new(kind);
        let mut xs: Vec<f64> = (0..100_000).map(|_| s.sample(&mut rng)).collect();
        let d = ks_statistic(&mut xs, |t| s.cdf(t));
        out.push(check(
            &format!("{} scheduler KS", kind.name()),
            d < 0.01,
            format!("D = {d:.5}"),
        ));
    }

    out.push(match grad_check_tiny(seed) {
        Ok(g) => check(
            "gradient check",
            g.passed,
            format!(
                "max rel err {:.3e} ({}), {:.1}s",
                g.max_rel_err, g.worst_param, g.seconds
            ),
        ),
        Err(e) => check("gradient check", false, e.to_string()),
    });
    out
}
