use std::collections::BTreeMap;

use capgrowth::dataset::synthetic::{reference_truth, task_difficulties};
use capgrowth::dataset::{RunRecord, RunTable, TaskFamily};
use capgrowth::fitting::{map_fit, FitConfig, FitKind, FittedCurve, GrowthFit, PriorSpec, Specification};
use capgrowth::forecast::{fit_inflections, project};
use capgrowth::growth::{model_horizon, ExpTrendParams, LinkKind, SingleSigmoidParams};
use capgrowth::horizon::{fit_horizon, horizon_loglik, success_probability};
use capgrowth::{ModelTable, TimeScale};
use chrono::NaiveDate;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(model: &str, task: usize, t: f64, success: bool, weight: f64) -> RunRecord {
    RunRecord {
        model_id: model.into(),
        task_id: format!("t{task}"),
        task_family: TaskFamily::Hcast,
        human_minutes: t,
        success,
        attempt: if success { 0 } else { 1 },
        weight,
    }
}

fn separable(runs: &[RunRecord]) -> bool {
    let max_success = runs.iter().filter(|r| r.success).map(|r| r.human_minutes).fold(0.0, f64::max);
    let min_failure = runs.iter().filter(|r| !r.success).map(|r| r.human_minutes).fold(f64::INFINITY, f64::min);
    max_success < min_failure
}

#[test]
fn horizon_mle_matches_brute_force_grid() {
    let config = FitConfig::horizon_default();
    let mut checked = 0;
    for seed in 0..12u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let runs: Vec<RunRecord> = (0..20)
            .map(|i| {
                let t = rng.gen_range(0.0f64..6.5).exp();
                let p = success_probability(30.0, 0.8, t).unwrap();
                run("m", i, t, rng.gen::<f64>() < p, 1.0)
            })
            .collect();
        if separable(&runs) || runs.iter().all(|r| r.success) || runs.iter().all(|r| !r.success) {
            continue;
        }
        let refs: Vec<&RunRecord> = runs.iter().collect();
        let est = fit_horizon(&refs, &config).unwrap();
        let mut best = (f64::NEG_INFINITY, 0.0, 0.0);
        for i in 0..=1100 {
            let lh = -3.0 + 0.01 * i as f64;
            for j in 0..=800 {
                let lb = -5.0 + 0.01 * j as f64;
                let (v, _) = horizon_loglik([lh, lb], &refs).unwrap();
                if v > best.0 {
                    best = (v, lh, lb);
                }
            }
        }
        assert!(est.log_likelihood >= best.0 - 1e-9, "seed {seed}: mle {} < grid {}", est.log_likelihood, best.0);
        assert!((est.h_minutes.ln() - best.1).abs() <= 0.02, "seed {seed}: ln h {} vs {}", est.h_minutes.ln(), best.1);
        assert!((est.beta.ln() - best.2).abs() <= 0.02, "seed {seed}: ln beta {} vs {}", est.beta.ln(), best.2);
        checked += 1;
    }
    assert!(checked >= 5, "only {checked} non-separable slices");
}

/// Expected-outcome ("noiseless") runs: each task contributes a success
/// weighted by p and a failure weighted by 1 - p.
fn noiseless_runs(models: &ModelTable, truth_h: &[f64], beta: f64, n_tasks: usize) -> RunTable {
    let tasks = task_difficulties(n_tasks, 17);
    let mut records = Vec::new();
    for (m, &h) in models.iter().zip(truth_h) {
        for (i, &t) in tasks.iter().enumerate() {
            let p = success_probability(h, beta, t).unwrap();
            records.push(run(&m.model_id, i, t, true, p.max(1e-12)));
            records.push(run(&m.model_id, i, t, false, (1.0 - p).max(1e-12)));
        }
    }
    RunTable::from_records(records)
}

#[test]
fn map_fit_is_consistent_as_runs_grow() {
    let scale = TimeScale::default();
    let truth = reference_truth(&scale);
    let models = ModelTable::reference_sota();
    let truth_h: Vec<f64> = models.iter().map(|m| model_horizon(scale.encode(m.release_date), m.k_thinking, &truth).unwrap()).collect();
    // Fewer restarts than the default: the noiseless objective has a single basin around the truth.
    let config = FitConfig { restarts: 3, ..FitConfig::growth_default() };
    let mut errors = Vec::new();
    for n in [50, 500, 5000] {
        let runs = noiseless_runs(&models, &truth_h, 0.8, n);
        let fit = map_fit(LinkKind::Sigmoid, &runs, &models, &PriorSpec::default(), &config, &scale).unwrap();
        assert!(fit.converged, "n={n}");
        let err = models
            .iter()
            .zip(&truth_h)
            .map(|(m, &h)| (fit.predict(scale.encode(m.release_date), m.k_thinking).unwrap() / h).ln().abs())
            .fold(0.0, f64::max);
        errors.push(err);
    }
    assert!(errors[0] > errors[1] && errors[1] > errors[2], "{errors:?}");
    assert!(errors[2] < 0.05, "{errors:?}");
}

fn date(s: &str) -> NaiveDate {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
}

fn curve_fit(curve: FittedCurve, spec: Specification) -> GrowthFit {
    GrowthFit {
        specification: spec,
        kind: FitKind::MseSigmoid,
        curve,
        per_model_beta: BTreeMap::new(),
        objective: 0.0,
        mse: None,
        converged: true,
        seed: 0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sigmoid_projection_bends_once_at_the_inflection(
        gamma in 1.0f64..500.0,
        slope in 0.5f64..4.0,
        mid_days in 1500i64..3000,
    ) {
        let scale = TimeScale::default();
        let mid = scale.encode(date("2019-01-01") + chrono::Duration::days(mid_days));
        let fit = curve_fit(
            FittedCurve::SingleSigmoid(SingleSigmoidParams { gamma, delta1: slope, delta2: -slope * mid }),
            Specification::SigmoidCurve,
        );
        let series = project(&fit, date("2019-01-01"), date("2029-01-01"), 7, false, &scale).unwrap();
        let v: Vec<f64> = series.values().collect();
        let second: Vec<f64> = v.windows(3).map(|w| w[2] - 2.0 * w[1] + w[0]).collect();
        // Ignore differences lost to rounding in the flat tails.
        let tol = 1e-9 * gamma;
        let signs: Vec<f64> = second.iter().filter(|s| s.abs() > tol).map(|s| s.signum()).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        prop_assert_eq!(changes, 1);
        let idx = second.windows(2).position(|w| w[0] > tol && w[1] <= tol).unwrap();
        // second[i] is centred on grid point i + 1; the sign flips between i + 1 and i + 2.
        let flip = series.points[idx + 1].0;
        let reported = fit_inflections(&fit, &scale, date("2026-01-01")).unwrap()[0].date;
        prop_assert!((flip - reported).num_days().abs() <= 7, "flip {} reported {}", flip, reported);
    }

    #[test]
    fn exponential_projection_is_log_linear(beta0 in -5.0f64..5.0, beta1 in 0.0f64..1.5) {
        let scale = TimeScale::default();
        let fit = curve_fit(FittedCurve::ExpTrend(ExpTrendParams { beta0, beta1 }), Specification::MetrExp);
        let a = project(&fit, date("2019-01-01"), date("2029-01-01"), 7, false, &scale).unwrap();
        let logs: Vec<f64> = a.values().map(f64::ln).collect();
        for w in logs.windows(3) {
            prop_assert!((w[2] - 2.0 * w[1] + w[0]).abs() <= 1e-10);
        }
        prop_assert_eq!(a, project(&fit, date("2019-01-01"), date("2029-01-01"), 7, false, &scale).unwrap());
    }
}
