//! Per-model 50% horizon regression.
//!
//! A model with horizon `h` and slope `beta` solves a task of human duration
//! `t` with probability `sigmoid(beta * (ln h - ln t))`. Estimation is maximum
//! likelihood over individual runs in `(ln h, ln beta)` coordinates.

use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, ModelTable, RunRecord, RunTable};
use crate::fitting::FitConfig;
use crate::numeric::{log_one_minus_sigmoid, log_sigmoid, median, sigmoid};
use crate::optim::{lbfgs, LbfgsOptions};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HorizonError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("no runs for model `{0}`")]
    EmptySlice(String),
    #[error("runs for several models in one slice (`{0}` and `{1}`)")]
    MixedSlice(String, String),
    #[error("horizon fit for `{0}` did not reach a finite optimum")]
    NonConvergence(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HorizonEstimate {
    pub model_id: String,
    pub h_minutes: f64,
    pub beta: f64,
    pub log_likelihood: f64,
    pub n_runs: usize,
    pub converged: bool,
    /// All-success or all-failure slice; `h_minutes` is clamped to the
    /// difficulty range instead of diverging.
    #[serde(default)]
    pub degenerate: bool,
}

/// `sigmoid(beta * (ln h - ln t))`.
pub fn success_probability(h: f64, beta: f64, t: f64) -> Result<f64, HorizonError> {
    if !(h > 0.0 && beta > 0.0 && t > 0.0) {
        return Err(HorizonError::DomainError(format!("h, beta and t must be positive (h={h}, beta={beta}, t={t})")));
    }
    Ok(sigmoid(beta * (h.ln() - t.ln())))
}

/// One Bernoulli observation reduced to what the likelihood needs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub log_t: f64,
    pub success: bool,
    pub weight: f64,
}

impl From<&RunRecord> for Observation {
    fn from(r: &RunRecord) -> Self {
        Observation { log_t: r.human_minutes.ln(), success: r.success, weight: r.weight }
    }
}

/// Log-likelihood of `obs` under `(ln h, ln beta) = params`, with its
/// gradient in the same coordinates.
pub fn observation_loglik(params: [f64; 2], obs: &[Observation]) -> (f64, [f64; 2]) {
    let (log_h, log_beta) = (params[0], params[1]);
    let beta = log_beta.exp();
    let mut value = 0.0;
    let mut grad = [0.0; 2];
    for o in obs {
        let u = beta * (log_h - o.log_t);
        let (ll, resid) = if o.success { (log_sigmoid(u), 1.0 - sigmoid(u)) } else { (log_one_minus_sigmoid(u), -sigmoid(u)) };
        value += o.weight * ll;
        grad[0] += o.weight * resid * beta;
        grad[1] += o.weight * resid * u;
    }
    (value, grad)
}

fn slice_observations(model_id: &str, runs: &[&RunRecord]) -> Result<Vec<Observation>, HorizonError> {
    if runs.is_empty() {
        return Err(HorizonError::EmptySlice(model_id.to_string()));
    }
    if let Some(other) = runs.iter().find(|r| r.model_id != runs[0].model_id) {
        return Err(HorizonError::MixedSlice(runs[0].model_id.clone(), other.model_id.clone()));
    }
    Ok(runs.iter().map(|r| Observation::from(*r)).collect())
}

/// Bernoulli log-likelihood of one model's runs at `(ln h, ln beta)`.
pub fn horizon_loglik(params: [f64; 2], runs: &[&RunRecord]) -> Result<(f64, [f64; 2]), HorizonError> {
    let model = runs.first().map(|r| r.model_id.clone()).unwrap_or_default();
    let obs = slice_observations(&model, runs)?;
    Ok(observation_loglik(params, &obs))
}

/// Stable 64-bit FNV-1a, used to derive per-model seeds.
pub(crate) fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// Maximum-likelihood horizon for one model's runs.
pub fn fit_horizon(runs: &[&RunRecord], config: &FitConfig) -> Result<HorizonEstimate, HorizonError> {
    let model_id = runs.first().map(|r| r.model_id.clone()).unwrap_or_default();
    let obs = slice_observations(&model_id, runs)?;
    fit_observations(&model_id, &obs, config)
}

pub fn fit_observations(model_id: &str, obs: &[Observation], config: &FitConfig) -> Result<HorizonEstimate, HorizonError> {
    if obs.is_empty() {
        return Err(HorizonError::EmptySlice(model_id.to_string()));
    }
    let n_runs = obs.len();
    let successes = obs.iter().filter(|o| o.success).count();
    if successes == 0 || successes == n_runs {
        let log_ts = obs.iter().map(|o| o.log_t);
        let log_h = if successes == n_runs { log_ts.fold(f64::NEG_INFINITY, f64::max) } else { log_ts.fold(f64::INFINITY, f64::min) };
        let (ll, _) = observation_loglik([log_h, 0.0], obs);
        return Ok(HorizonEstimate {
            model_id: model_id.to_string(),
            h_minutes: log_h.exp(),
            beta: 1.0,
            log_likelihood: ll,
            n_runs,
            converged: false,
            degenerate: true,
        });
    }

    let log_ts: Vec<f64> = obs.iter().map(|o| o.log_t).collect();
    let start = [median(&log_ts), 0.0];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ fnv1a(model_id.as_bytes()));
    let mut starts = vec![start];
    for _ in 1..config.restarts.max(1) {
        let dh: f64 = rng.gen_range(-2.0..2.0);
        let db: f64 = rng.gen_range(-1.0..1.0);
        starts.push([start[0] + dh, start[1] + db]);
    }
    let options =
        LbfgsOptions { max_iterations: config.max_iterations, gradient_tolerance: config.gradient_tolerance, ..Default::default() };

    let mut best: Option<crate::optim::Minimum> = None;
    for s in &starts {
        let m = lbfgs(
            |x: &[f64]| {
                let (v, g) = observation_loglik([x[0], x[1]], obs);
                (-v, vec![-g[0], -g[1]])
            },
            s,
            &options,
        );
        if !m.value.is_finite() {
            continue;
        }
        let better = match &best {
            None => true,
            Some(b) => m.value < b.value,
        };
        if better {
            best = Some(m);
        }
    }
    let best = best.ok_or_else(|| HorizonError::NonConvergence(model_id.to_string()))?;
    Ok(HorizonEstimate {
        model_id: model_id.to_string(),
        h_minutes: best.x[0].exp(),
        beta: best.x[1].exp(),
        log_likelihood: -best.value,
        n_runs,
        converged: best.converged,
        degenerate: false,
    })
}

/// Outcome of one model's fit inside a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelHorizon {
    pub model_id: String,
    pub result: Result<HorizonEstimate, HorizonError>,
}

/// Fits every model independently (in parallel); output order follows `models`.
pub fn fit_all_horizons(runs: &RunTable, models: &ModelTable, config: &FitConfig) -> Vec<ModelHorizon> {
    models
        .records
        .par_iter()
        .map(|m| {
            let slice: Vec<&RunRecord> = runs.for_model(&m.model_id).collect();
            let result = if slice.is_empty() { Err(HorizonError::EmptySlice(m.model_id.clone())) } else { fit_horizon(&slice, config) };
            ModelHorizon { model_id: m.model_id.clone(), result }
        })
        .collect()
}

pub const HORIZON_COLUMNS: [&str; 6] = ["model_id", "h_minutes", "beta", "loglik", "n_runs", "converged"];

pub fn write_horizons_csv<W: Write>(estimates: &[HorizonEstimate], writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(HORIZON_COLUMNS)?;
    for e in estimates {
        w.write_record([
            e.model_id.clone(),
            format!("{}", e.h_minutes),
            format!("{}", e.beta),
            format!("{}", e.log_likelihood),
            e.n_runs.to_string(),
            if e.converged { "1".into() } else { "0".into() },
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a horizons table. Only `model_id` and `h_minutes` are required, so
/// externally published horizon values can be loaded directly.
pub fn read_horizons_csv<R: Read>(source: R) -> Result<Vec<HorizonEstimate>, DatasetError> {
    let mut reader = csv::Reader::from_reader(source);
    let headers = reader.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let id = col("model_id").ok_or_else(|| DatasetError::MissingColumn("model_id".into()))?;
    let h = col("h_minutes").ok_or_else(|| DatasetError::MissingColumn("h_minutes".into()))?;
    let (beta, ll, n, conv) = (col("beta"), col("loglik"), col("n_runs"), col("converged"));
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let num = |c: Option<usize>, default: f64| -> Result<f64, DatasetError> {
            match c.and_then(|c| rec.get(c)).map(str::trim).filter(|s| !s.is_empty()) {
                None => Ok(default),
                Some(s) => s.parse().map_err(|_| DatasetError::Malformed { row, message: format!("`{s}` is not a number") }),
            }
        };
        let h_minutes = num(Some(h), f64::NAN)?;
        if !(h_minutes > 0.0) {
            return Err(DatasetError::NonPositiveDifficulty { row, value: h_minutes });
        }
        out.push(HorizonEstimate {
            model_id: rec.get(id).unwrap_or_default().trim().to_string(),
            h_minutes,
            beta: num(beta, f64::NAN)?,
            log_likelihood: num(ll, f64::NAN)?,
            n_runs: num(n, 0.0)? as usize,
            converged: num(conv, 1.0)? != 0.0,
            degenerate: false,
        });
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::TaskFamily;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    fn run(model: &str, t: f64, success: bool) -> RunRecord {
        RunRecord {
            model_id: model.into(),
            task_id: format!("task-{t}"),
            task_family: TaskFamily::Hcast,
            human_minutes: t,
            success,
            attempt: 0,
            weight: 1.0,
        }
    }

    #[test]
    fn probability_examples() {
        assert_eq!(success_probability(60.0, 0.37, 60.0).unwrap(), 0.5);
        assert!((success_probability(120.0, 1.0, 60.0).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!((success_probability(60.0, 1.0, 240.0).unwrap() - 0.2).abs() < 1e-15);
        assert!(matches!(success_probability(0.0, 1.0, 1.0), Err(HorizonError::DomainError(_))));
        assert!(matches!(success_probability(1.0, -1.0, 1.0), Err(HorizonError::DomainError(_))));
        // Extreme arguments stay inside [0, 1].
        let p = success_probability(1e300, 2.0, 1e-300).unwrap();
        assert!(p <= 1.0 && p.is_finite());
    }

    #[test]
    fn loglik_examples() {
        let a = run("m", 30.0, true);
        let (v, _) = horizon_loglik([30f64.ln(), 0.3], &[&a]).unwrap();
        assert!((v - 0.5f64.ln()).abs() < 1e-15);
        let b = run("m", 30.0, false);
        let (v2, _) = horizon_loglik([30f64.ln(), -0.2], &[&a, &b]).unwrap();
        assert!((v2 - 2.0 * 0.5f64.ln()).abs() < 1e-15);
        assert!(matches!(horizon_loglik([0.0, 0.0], &[]), Err(HorizonError::EmptySlice(_))));
        let c = run("other", 1.0, true);
        assert!(matches!(horizon_loglik([0.0, 0.0], &[&a, &c]), Err(HorizonError::MixedSlice(..))));
    }

    #[test]
    fn all_success_slice_clamps_to_largest_difficulty() {
        let runs: Vec<RunRecord> = [1.0, 8.0, 64.0].iter().map(|&t| run("m", t, true)).collect();
        let refs: Vec<&RunRecord> = runs.iter().collect();
        let e = fit_horizon(&refs, &FitConfig::horizon_default()).unwrap();
        assert!(e.degenerate && !e.converged);
        assert!((e.h_minutes - 64.0).abs() < 1e-9);

        let runs: Vec<RunRecord> = [1.0, 8.0, 64.0].iter().map(|&t| run("m", t, false)).collect();
        let refs: Vec<&RunRecord> = runs.iter().collect();
        let e = fit_horizon(&refs, &FitConfig::horizon_default()).unwrap();
        assert!(e.degenerate);
        assert!((e.h_minutes - 1.0).abs() < 1e-12);
    }

    #[test]
    fn step_data_puts_horizon_between_the_boundary_runs() {
        let ts = [1.0, 2.0, 5.0, 10.0, 20.0, 28.0, 33.0, 45.0, 90.0, 200.0];
        let runs: Vec<RunRecord> = ts.iter().map(|&t| run("m", t, t < 30.0)).collect();
        let refs: Vec<&RunRecord> = runs.iter().collect();
        let e = fit_horizon(&refs, &FitConfig::horizon_default()).unwrap();
        assert!(e.h_minutes >= 28.0 && e.h_minutes <= 33.0, "{e:?}");
        assert!(e.beta > 10.0);
    }

    #[test]
    fn fitted_horizon_has_probability_one_half() {
        let ts = [1.0, 3.0, 7.0, 15.0, 30.0, 60.0, 120.0];
        let succ = [true, true, false, true, true, false, false];
        let runs: Vec<RunRecord> = ts.iter().zip(succ).map(|(&t, s)| run("m", t, s)).collect();
        let refs: Vec<&RunRecord> = runs.iter().collect();
        let e = fit_horizon(&refs, &FitConfig::horizon_default()).unwrap();
        assert!(e.converged);
        assert_eq!(success_probability(e.h_minutes, e.beta, e.h_minutes).unwrap(), 0.5);
    }

    #[test]
    fn batch_is_a_map_and_keeps_order() {
        let mut records = Vec::new();
        for (m, shift) in [("a", 1.0), ("b", 4.0)] {
            for (i, &t) in [1.0, 2.0, 4.0, 8.0, 16.0, 32.0, 64.0].iter().enumerate() {
                records.push(run(m, t * shift, i % 3 != 2 && i < 5));
            }
        }
        let runs = RunTable::from_records(records);
        let models = ModelTable::new(vec![
            crate::dataset::ModelRecord {
                model_id: "b".into(),
                release_date: chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap(),
                is_sota: true,
                k_thinking: false,
            },
            crate::dataset::ModelRecord {
                model_id: "a".into(),
                release_date: chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
                is_sota: true,
                k_thinking: false,
            },
            crate::dataset::ModelRecord {
                model_id: "none".into(),
                release_date: chrono::NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
                is_sota: true,
                k_thinking: false,
            },
        ])
        .unwrap();
        let cfg = FitConfig::horizon_default();
        let all = fit_all_horizons(&runs, &models, &cfg);
        assert_eq!(all.iter().map(|m| m.model_id.as_str()).collect::<Vec<_>>(), ["b", "a", "none"]);
        for m in &all[..2] {
            let slice: Vec<&RunRecord> = runs.for_model(&m.model_id).collect();
            assert_eq!(m.result, fit_horizon(&slice, &cfg));
        }
        assert!(matches!(all[2].result, Err(HorizonError::EmptySlice(_))));
        assert!(fit_all_horizons(&runs, &ModelTable::default(), &cfg).is_empty());
    }

    #[test]
    fn large_slices_reach_the_gradient_tolerance() {
        // Near the optimum the likelihood changes only at round-off level.
        let cfg = FitConfig::horizon_default();
        for seed in [11u64, 29, 40, 43] {
            let tasks = crate::dataset::synthetic::task_difficulties(500, seed + 99);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let runs: Vec<RunRecord> = tasks
                .iter()
                .enumerate()
                .map(|(i, &t)| RunRecord {
                    model_id: "m".into(),
                    task_id: format!("t{i}"),
                    task_family: TaskFamily::Hcast,
                    human_minutes: t,
                    success: rng.gen::<f64>() < success_probability(30.0, 0.8, t).unwrap(),
                    attempt: 0,
                    weight: 1.0,
                })
                .collect();
            let refs: Vec<&RunRecord> = runs.iter().collect();
            assert!(fit_horizon(&refs, &cfg).unwrap().converged, "seed {seed}");
        }
    }

    #[test]
    fn horizons_csv_round_trip_and_published_mode() {
        let e = HorizonEstimate {
            model_id: "GPT-4".into(),
            h_minutes: 5.36,
            beta: 0.71,
            log_likelihood: -40.5,
            n_runs: 300,
            converged: true,
            degenerate: false,
        };
        let mut buf = Vec::new();
        write_horizons_csv(&[e.clone()], &mut buf).unwrap();
        assert!(String::from_utf8_lossy(&buf).starts_with("model_id,h_minutes,beta,loglik,n_runs,converged\n"));
        assert_eq!(read_horizons_csv(buf.as_slice()).unwrap(), vec![e]);
        let published = read_horizons_csv("model_id,h_minutes\nX,12.5\n".as_bytes()).unwrap();
        assert_eq!(published[0].h_minutes, 12.5);
        assert!(read_horizons_csv("model_id\nX\n".as_bytes()).is_err());
    }

    proptest! {
        #[test]
        fn probability_monotone(h in 0.01f64..1e4, t in 0.01f64..1e4, beta in 0.05f64..5.0, f in 1.01f64..3.0) {
            let p = success_probability(h, beta, t).unwrap();
            let hi = success_probability(h * f, beta, t).unwrap();
            let lo = success_probability(h, beta, t * f).unwrap();
            prop_assert!(hi >= p && lo <= p);
            prop_assert!(hi > p || p > 1.0 - 1e-15);
            prop_assert!(lo < p || p < 1e-300);
        }
    }
}
