use dits_core::data::{make_windows, synth_endogenous, EndogenousSpec, FutureMode, SplitMode, WindowSpec};
use dits_core::metrics::*;
use proptest::prelude::*;

fn seasonal_panel(seed: u64, len: usize) -> Vec<f64> {
    let spec = EndogenousSpec {
        periods: vec![24.0],
        amplitudes: vec![1.0],
        ar_coef: 0.0,
        noise_sigma: 0.3,
        random_phase: true,
    };
    synth_endogenous(seed, len, &spec).unwrap().target().to_vec()
}

#[test]
fn perfect_forecasts_score_zero_everywhere() {
    let y: Vec<f64> = (0..24).map(|t| 2.0 + (t as f64 / 3.0).sin()).collect();
    let history: Vec<f64> = (0..96).map(|t| 2.0 + (t as f64 / 5.0).cos()).collect();
    let ensemble = vec![y.clone(); 10];
    let s = score_window(&ensemble, &y, &history, 24, &DEFAULT_LEVELS).unwrap();
    assert_eq!(s.values(), [0.0; 7]);
}

#[test]
fn hand_examples() {
    let p = point_metrics(&[2.0, 2.0], &[1.0, 1.0]).unwrap();
    assert_eq!((p.mse, p.mae, p.wape), (1.0, 1.0, 1.0));
    assert_eq!(crps(&[vec![0.0], vec![2.0]], &[1.0]).unwrap(), 0.5);
    assert_eq!(aggregate(&[1.0, 4.0], AggregateMode::Geometric).unwrap(), 2.0);
    assert_eq!(aggregate(&[1.0, 4.0], AggregateMode::Arithmetic).unwrap(), 2.5);
    assert_eq!(aggregate(&[], AggregateMode::Arithmetic), Err(MetricError::Empty));
    assert!(matches!(
        aggregate(&[1.0, 0.0], AggregateMode::Geometric),
        Err(MetricError::NonPositive { index: 1, .. })
    ));
}

#[test]
fn wql_with_zero_truth_mass_is_an_error() {
    let levels = DEFAULT_LEVELS;
    let q: Vec<Vec<f64>> = levels.iter().map(|_| vec![1.0]).collect();
    for (k, &l) in levels.iter().enumerate() {
        assert!((pinball(l, 0.0, q[k][0]) - 2.0 * (1.0 - l)).abs() < 1e-15);
    }
    assert_eq!(wql(&q, &levels, &[0.0]), Err(MetricError::ZeroDenominator("WQL")));
}

#[test]
fn seasonal_naive_scores_unit_mase() {
    let series = seasonal_panel(3, 40_000);
    let panel = dits_core::data::SeriesPanel::new((0..series.len() as i64).collect(), series, vec![]).unwrap();
    let spec = WindowSpec {
        history: 168,
        horizon: 24,
        stride: 24,
        patch_len: 24,
        future: FutureMode::WithFuture,
    };
    let windows = make_windows(&panel, 0..panel.len(), &spec, SplitMode::Strict).unwrap();
    let values: Vec<f64> = windows
        .iter()
        .map(|w| {
            let f = seasonal_naive_forecast(&w.x_hist, 24, 24).unwrap();
            mase(&f, &w.y_pred, &w.x_hist, 24).unwrap()
        })
        .collect();
    let m = aggregate(&values, AggregateMode::Arithmetic).unwrap();
    assert!((m - 1.0).abs() < 0.02, "{m}");
}

#[test]
fn degenerate_ensemble_crps_is_mae() {
    let y = [0.3, -1.2, 4.0, 0.0];
    let v = [1.0, -1.0, 2.5, 0.1];
    let c = crps(&vec![v.to_vec(); 7], &y).unwrap();
    assert!((c - mae(&v, &y).unwrap()).abs() < 1e-12);
}

#[test]
fn errors_are_typed() {
    assert_eq!(mse(&[], &[]), Err(MetricError::Empty));
    assert!(matches!(
        mae(&[1.0], &[1.0, 2.0]),
        Err(MetricError::LengthMismatch { .. })
    ));
    assert_eq!(wape(&[1.0], &[0.0]), Err(MetricError::ZeroDenominator("WAPE")));
    assert_eq!(
        mase(&[1.0], &[1.0], &[1.0, 2.0, 1.0, 2.0], 2),
        Err(MetricError::ZeroDenominator("seasonal-naive scale"))
    );
    assert!(matches!(
        seasonal_naive_scale(&[1.0, 2.0], 2),
        Err(MetricError::SeriesTooShort { len: 2, season: 2 })
    ));
    assert_eq!(crps(&[], &[1.0]), Err(MetricError::Empty));
    assert!(matches!(
        ensemble_quantiles(&[vec![1.0]], &[1.0]),
        Err(MetricError::InvalidLevel(_))
    ));
}

fn ensemble_and_truth() -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<f64>, Vec<f64>)> {
    (1usize..6, 2usize..12).prop_flat_map(|(s, h)| {
        (
            prop::collection::vec(prop::collection::vec(-5.0..5.0f64, h), s),
            prop::collection::vec(0.5..5.0f64, h),
            prop::collection::vec(-5.0..5.0f64, 30),
        )
    })
}

proptest! {
    #[test]
    fn scale_free_metrics_ignore_units((ens, y, hist) in ensemble_and_truth(), k in 0.01..100.0f64) {
        let a = score_window(&ens, &y, &hist, 7, &DEFAULT_LEVELS).unwrap();
        let ens_k: Vec<Vec<f64>> = ens.iter().map(|m| m.iter().map(|v| v * k).collect()).collect();
        let y_k: Vec<f64> = y.iter().map(|v| v * k).collect();
        let hist_k: Vec<f64> = hist.iter().map(|v| v * k).collect();
        let b = score_window(&ens_k, &y_k, &hist_k, 7, &DEFAULT_LEVELS).unwrap();
        for (x, z) in [(a.mase, b.mase), (a.wape, b.wape), (a.sql, b.sql), (a.wql, b.wql)] {
            prop_assert!((x - z).abs() <= 1e-12 * x.abs().max(1.0));
        }
    }

    #[test]
    fn metrics_are_non_negative_and_quantiles_monotone((ens, y, hist) in ensemble_and_truth()) {
        let s = score_window(&ens, &y, &hist, 7, &DEFAULT_LEVELS).unwrap();
        prop_assert!(s.values().iter().all(|v| *v >= 0.0));
        let q = ensemble_quantiles(&ens, &DEFAULT_LEVELS).unwrap();
        for pair in q.windows(2) {
            prop_assert!(pair[1].iter().zip(&pair[0]).all(|(hi, lo)| hi >= lo));
        }
    }

    #[test]
    fn pinball_at_median_is_absolute_error(y in -10.0..10.0f64, m in -10.0..10.0f64) {
        prop_assert!((pinball(0.5, y, m) - (y - m).abs()).abs() < 1e-12);
    }

    #[test]
    fn crps_matches_pairwise_formula((ens, y, _) in ensemble_and_truth()) {
        let s = ens.len() as f64;
        let mut direct = 0.0;
        for (t, obs) in y.iter().enumerate() {
            let skill: f64 = ens.iter().map(|m| (m[t] - obs).abs()).sum::<f64>() / s;
            let spread: f64 = ens.iter().flat_map(|a| ens.iter().map(move |b| (a[t] - b[t]).abs())).sum::<f64>() / (s * s);
            direct += skill - 0.5 * spread;
        }
        direct /= y.len() as f64;
        prop_assert!((crps(&ens, &y).unwrap() - direct).abs() < 1e-12);
    }
}
