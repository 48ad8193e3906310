//! Seeded synthetic studies with a known ground truth, used by tests, the
//! acceptance suite and hermetic pipeline runs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{ModelTable, RunRecord, RunTable, TaskFamily, TimeScale};
use crate::growth::{model_horizon, GrowthParams};
use crate::horizon::success_probability;

/// Difficulty range of generated tasks, in minutes.
pub const TASK_MINUTES: (f64, f64) = (0.02, 1920.0);

#[derive(Debug, Clone)]
pub struct SyntheticStudy {
    pub runs: RunTable,
    pub models: ModelTable,
    pub truth: GrowthParams,
    /// True horizon of each model, in `models` order.
    pub true_horizons: Vec<f64>,
    pub true_beta: f64,
}

/// A sigmoid-link truth with the base inflection in late 2024 and the
/// reasoning inflection in mid 2026, scaled so that the reference models span
/// from a few seconds to a few hours.
pub fn reference_truth(scale: &TimeScale) -> GrowthParams {
    let base_mid = scale.encode_str("2024-11-21").expect("valid date");
    let reasoning_mid = scale.encode_str("2026-06-06").expect("valid date");
    let (s1, s2) = (1.2, 2.0);
    GrowthParams::sigmoid(40.0, 12.0, [s1, -s1 * base_mid], [s2, -s2 * reasoning_mid])
}

fn family_for(minutes: f64) -> TaskFamily {
    if minutes < 1.0 {
        TaskFamily::Swaa
    } else if minutes >= 480.0 {
        TaskFamily::ReBench
    } else {
        TaskFamily::Hcast
    }
}

/// Log-uniform task difficulties, deterministic in `seed`.
pub fn task_difficulties(n_tasks: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (lo, hi) = (TASK_MINUTES.0.ln(), TASK_MINUTES.1.ln());
    (0..n_tasks).map(|_| rng.gen_range(lo..hi).exp()).collect()
}

/// Draws Bernoulli outcomes for every (model, task, attempt) from the
/// horizon regression with horizons given by `truth`.
pub fn generate(
    truth: &GrowthParams,
    models: &ModelTable,
    n_tasks: usize,
    attempts: usize,
    beta: f64,
    seed: u64,
    scale: &TimeScale,
) -> SyntheticStudy {
    let tasks = task_difficulties(n_tasks, seed.wrapping_add(0x5eed));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut records = Vec::with_capacity(models.len() * n_tasks * attempts);
    let mut true_horizons = Vec::with_capacity(models.len());
    for m in models.iter() {
        let h = model_horizon(scale.encode(m.release_date), m.k_thinking, truth).expect("valid truth");
        true_horizons.push(h);
        for (ti, &t) in tasks.iter().enumerate() {
            let p = success_probability(h, beta, t).expect("positive inputs");
            for a in 0..attempts {
                records.push(RunRecord {
                    model_id: m.model_id.clone(),
                    task_id: format!("task-{ti:03}"),
                    task_family: family_for(t),
                    human_minutes: t,
                    success: rng.gen::<f64>() < p,
                    attempt: a as u32,
                    weight: 1.0,
                });
            }
        }
    }
    SyntheticStudy { runs: RunTable::from_records(records), models: models.clone(), truth: truth.clone(), true_horizons, true_beta: beta }
}

/// The bundled frontier models with outcomes drawn from [`reference_truth`]:
/// 170 tasks, two attempts each, slope 0.8.
pub fn reference_study(seed: u64) -> SyntheticStudy {
    let scale = TimeScale::default();
    generate(&reference_truth(&scale), &ModelTable::reference_sota(), 170, 2, 0.8, seed, &scale)
}
