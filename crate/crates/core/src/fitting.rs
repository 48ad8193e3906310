//! Estimators for the growth curves.
//!
//! - [`ols_log_fit`]: least squares on `ln h` (log-linear trend).
//! - [`mse_sigmoid_fit`]: least squares on `h` for a single sigmoid.
//! - [`map_fit`]: penalized maximum likelihood of the multiplicative model on
//!   task-level outcomes, with one free slope per model.
//!
//! Positive parameters are optimized on the log scale. Their priors are
//! stated on the positive value, so the log-Jacobian is part of the objective.

use std::collections::BTreeMap;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{ModelTable, RunTable, TimeScale};
use crate::growth::{
    bspline_basis, metr_exponential, model_horizon, single_sigmoid_curve, single_sigmoid_grad, ExpTrendParams, GrowthError, GrowthParams,
    LinkKind, SingleSigmoidParams, SplineSpec,
};
use crate::horizon::{fit_observations, observation_loglik, HorizonEstimate, Observation};
use crate::numeric::{log_sigmoid, median, sigmoid};
use crate::optim::{adam, gradient_converged, lbfgs, AdamOptions, LbfgsOptions, Minimum};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FitError {
    #[error("all dates are equal; slope is not identifiable")]
    DegenerateDesign,
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("{0}: no restart reached the gradient tolerance")]
    NonConvergence(String),
    #[error("run references unknown model `{0}`")]
    ModelNotFound(String),
    #[error("no metadata for model `{0}`")]
    MissingModel(String),
    #[error("empty input: {0}")]
    EmptyInput(&'static str),
    #[error(transparent)]
    Growth(#[from] GrowthError),
}

/// Optimizer settings shared by all estimators.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    pub seed: u64,
    pub restarts: usize,
    /// Iteration cap for the quasi-Newton stage.
    pub max_iterations: usize,
    /// Scaled gradient tolerance, see [`crate::optim::gradient_converged`].
    pub gradient_tolerance: f64,
    /// First-order warm-up steps before quasi-Newton polishing (0 disables).
    pub warmup_steps: usize,
    pub warmup_initial_step: f64,
    pub warmup_decay: f64,
}

impl FitConfig {
    /// Settings for per-model horizon regressions.
    pub fn horizon_default() -> Self {
        FitConfig {
            seed: 0,
            restarts: 5,
            max_iterations: 500,
            gradient_tolerance: 1e-8,
            warmup_steps: 0,
            warmup_initial_step: 1e-2,
            warmup_decay: 0.999,
        }
    }

    /// Settings for trend fits: 2000 decaying first-order steps, then L-BFGS.
    pub fn growth_default() -> Self {
        FitConfig {
            seed: 0,
            restarts: 8,
            max_iterations: 3000,
            gradient_tolerance: 1e-8,
            warmup_steps: 2000,
            warmup_initial_step: 1e-2,
            warmup_decay: 0.999,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    fn lbfgs(&self) -> LbfgsOptions {
        LbfgsOptions { memory: 10, max_iterations: self.max_iterations, gradient_tolerance: self.gradient_tolerance }
    }

    fn warmup(&self) -> AdamOptions {
        AdamOptions { steps: self.warmup_steps, initial_step: self.warmup_initial_step, decay: self.warmup_decay }
    }
}

/// Prior scales for the MAP objective.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriorSpec {
    /// Standard deviation of the zero-mean normal prior on link and scale parameters.
    pub normal_sd: f64,
    /// Fixed step scale of the spline coefficient random walk. A free scale
    /// has no joint mode (the density grows without bound as the scale and
    /// all steps shrink to zero), so it is held at the scale of its prior.
    pub spline_rw_tau: f64,
}

impl Default for PriorSpec {
    fn default() -> Self {
        PriorSpec { normal_sd: 10.0, spline_rw_tau: 1.0 }
    }
}

/// The five trend specifications compared by the report.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Specification {
    MetrExp,
    SigmoidCurve,
    SigmoidLink,
    ExpLink,
    BsplineLink,
}

impl Specification {
    pub const ALL: [Specification; 5] = [
        Specification::MetrExp,
        Specification::SigmoidCurve,
        Specification::SigmoidLink,
        Specification::ExpLink,
        Specification::BsplineLink,
    ];

    /// Command-line identifier.
    pub fn id(&self) -> &'static str {
        match self {
            Specification::MetrExp => "metr-exp",
            Specification::SigmoidCurve => "sigmoid-curve",
            Specification::SigmoidLink => "sigmoid-link",
            Specification::ExpLink => "exp-link",
            Specification::BsplineLink => "bspline-link",
        }
    }

    pub fn display_name(&self) -> &'static str {
        match self {
            Specification::MetrExp => "METR Exponential Curve",
            Specification::SigmoidCurve => "Sigmoid Curve",
            Specification::SigmoidLink => "Sigmoid Link",
            Specification::ExpLink => "Exponential Link",
            Specification::BsplineLink => "B-Spline Link",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|spec| spec.id() == s)
    }

    pub fn link(&self) -> Option<LinkKind> {
        match self {
            Specification::SigmoidLink => Some(LinkKind::Sigmoid),
            Specification::ExpLink => Some(LinkKind::Exponential),
            Specification::BsplineLink => Some(LinkKind::Bspline),
            _ => None,
        }
    }
}

impl fmt::Display for Specification {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FitKind {
    OlsLog,
    MseSigmoid,
    MapJoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum FittedCurve {
    ExpTrend(ExpTrendParams),
    SingleSigmoid(SingleSigmoidParams),
    Multiplicative(GrowthParams),
}

/// A fitted growth model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthFit {
    pub specification: Specification,
    pub kind: FitKind,
    pub curve: FittedCurve,
    /// Per-model slopes of the joint likelihood (MAP fits only).
    #[serde(default)]
    pub per_model_beta: BTreeMap<String, f64>,
    /// Log posterior for MAP fits, MSE for least squares fits, residual sum
    /// of squares in log space for OLS.
    pub objective: f64,
    #[serde(default)]
    pub mse: Option<f64>,
    pub converged: bool,
    pub seed: u64,
}

impl GrowthFit {
    /// Predicted horizon (minutes) at encoded date `d`.
    pub fn predict(&self, d: f64, k_thinking: bool) -> Result<f64, GrowthError> {
        match &self.curve {
            FittedCurve::ExpTrend(p) => metr_exponential(d, p),
            FittedCurve::SingleSigmoid(p) => single_sigmoid_curve(d, p),
            FittedCurve::Multiplicative(p) => model_horizon(d, k_thinking, p),
        }
    }

    pub fn link(&self) -> Option<LinkKind> {
        match &self.curve {
            FittedCurve::Multiplicative(p) => Some(p.link),
            _ => None,
        }
    }
}

/// Closed-form least squares of `ln h = beta0 + beta1 * d`.
pub fn ols_log_fit(points: &[(f64, f64)]) -> Result<ExpTrendParams, FitError> {
    if points.len() < 2 {
        return Err(FitError::TooFewPoints { needed: 2, got: points.len() });
    }
    if let Some(&(_, h)) = points.iter().find(|(_, h)| !(*h > 0.0)) {
        return Err(FitError::Growth(GrowthError::DomainError(format!("horizon must be positive, got {h}"))));
    }
    let n = points.len() as f64;
    let mean_d = points.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let (mut sxx, mut sxy) = (0.0, 0.0);
    for &(d, h) in points {
        let dx = d - mean_d;
        sxx += dx * dx;
        sxy += dx * (h.ln() - mean_y);
    }
    if !(sxx > 0.0) {
        return Err(FitError::DegenerateDesign);
    }
    let beta1 = sxy / sxx;
    Ok(ExpTrendParams { beta0: mean_y - beta1 * mean_d, beta1 })
}

pub fn ols_fit(points: &[(f64, f64)], seed: u64) -> Result<GrowthFit, FitError> {
    let p = ols_log_fit(points)?;
    let rss = points.iter().map(|&(d, h)| (h.ln() - p.beta0 - p.beta1 * d).powi(2)).sum();
    Ok(GrowthFit {
        specification: Specification::MetrExp,
        kind: FitKind::OlsLog,
        curve: FittedCurve::ExpTrend(p),
        per_model_beta: BTreeMap::new(),
        objective: rss,
        mse: None,
        converged: true,
        seed,
    })
}

fn sigmoid_mse_objective(points: &[(f64, f64)], z: &[f64]) -> (f64, Vec<f64>) {
    let p = SingleSigmoidParams { gamma: z[0].exp(), delta1: z[1].exp(), delta2: z[2] };
    let n = points.len() as f64;
    let mut value = 0.0;
    let mut grad = [0.0; 3];
    for &(d, h) in points {
        let pred = p.gamma * sigmoid(p.delta1 * d + p.delta2);
        let r = pred - h;
        value += r * r;
        let g = single_sigmoid_grad(d, &p);
        grad[0] += 2.0 * r * g[0] * p.gamma;
        grad[1] += 2.0 * r * g[1] * p.delta1;
        grad[2] += 2.0 * r * g[2];
    }
    (value / n, grad.iter().map(|g| g / n).collect())
}

/// Least-squares fit of `h = gamma * sigmoid(delta1 * d + delta2)`.
pub fn mse_sigmoid_fit(points: &[(f64, f64)], config: &FitConfig) -> Result<(SingleSigmoidParams, f64), FitError> {
    if points.len() < 3 {
        return Err(FitError::TooFewPoints { needed: 3, got: points.len() });
    }
    let (dmin, dmax) = points.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), p| (a.min(p.0), b.max(p.0)));
    if !(dmax > dmin) {
        return Err(FitError::DegenerateDesign);
    }
    let hmax = points.iter().map(|p| p.1).fold(0.0, f64::max);
    if !(hmax > 0.0) {
        return Err(FitError::Growth(GrowthError::DomainError("all horizons are zero".into())));
    }
    let span = dmax - dmin;
    // Midpoint guess: date of the point closest to half the largest horizon.
    let mid = points.iter().min_by(|a, b| (a.1 - hmax / 2.0).abs().total_cmp(&(b.1 - hmax / 2.0).abs())).unwrap().0;
    let slope0 = 8.0 / span;
    let base = [(1.2 * hmax).ln(), slope0.ln(), -slope0 * mid];

    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![base.to_vec()];
    for _ in 1..config.restarts.max(1) {
        let lg = base[0] + 0.5 * gaussian(&mut rng);
        let ls = base[1] + 0.7 * gaussian(&mut rng);
        let m = mid + 0.25 * span * gaussian(&mut rng);
        starts.push(vec![lg, ls, -ls.exp() * m]);
    }

    let results: Vec<Minimum> = starts.par_iter().map(|s| polish(|z: &[f64]| sigmoid_mse_objective(points, z), s, config)).collect();
    let best = best_minimum(results).ok_or_else(|| FitError::NonConvergence("sigmoid curve".into()))?;
    if !best.converged {
        return Err(FitError::NonConvergence("sigmoid curve".into()));
    }
    let p = SingleSigmoidParams { gamma: best.x[0].exp(), delta1: best.x[1].exp(), delta2: best.x[2] };
    Ok((p, best.value))
}

pub fn sigmoid_curve_fit(points: &[(f64, f64)], config: &FitConfig) -> Result<GrowthFit, FitError> {
    let (p, mse) = mse_sigmoid_fit(points, config)?;
    Ok(GrowthFit {
        specification: Specification::SigmoidCurve,
        kind: FitKind::MseSigmoid,
        curve: FittedCurve::SingleSigmoid(p),
        per_model_beta: BTreeMap::new(),
        objective: mse,
        mse: None,
        converged: true,
        seed: config.seed,
    })
}

pub(crate) fn gaussian<R: Rng>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

/// Warm-up then quasi-Newton from `start` on a minimization objective.
fn polish<F>(mut f: F, start: &[f64], config: &FitConfig) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let warm = if config.warmup_steps > 0 { adam(&mut f, start, &config.warmup()).x } else { start.to_vec() };
    lbfgs(&mut f, &warm, &config.lbfgs())
}

/// Lowest finite objective; converged runs beat non-converged ones and ties
/// go to the lowest index.
fn best_minimum(results: Vec<Minimum>) -> Option<Minimum> {
    let mut best: Option<Minimum> = None;
    for m in results {
        if !m.value.is_finite() {
            continue;
        }
        let replace = match &best {
            None => true,
            Some(b) => (m.converged && !b.converged) || (m.converged == b.converged && m.value < b.value),
        };
        if replace {
            best = Some(m);
        }
    }
    best
}

/// Per-model data for the joint likelihood.
#[derive(Debug, Clone)]
struct ModelData {
    model_id: String,
    d: f64,
    k_thinking: bool,
    obs: Vec<Observation>,
}

/// The MAP objective of the multiplicative model.
///
/// Unconstrained parameter layout:
///
/// | block            | sigmoid / exponential          | B-spline                      |
/// |------------------|--------------------------------|-------------------------------|
/// | scales           | `ln g1, ln g2`                 | `ln g1, ln g2`                |
/// | base link        | `ln d1, d2`                    | `ln c_1 .. ln c_6`            |
/// | reasoning link   | `ln t1, t2`                    | `ln c_1 .. ln c_6`            |
/// | per-model slopes | `ln beta_m` for every model    | same                          |
#[derive(Debug, Clone)]
pub struct MapProblem {
    link: LinkKind,
    spline: Option<SplineSpec>,
    priors: PriorSpec,
    models: Vec<ModelData>,
    /// Basis values at each model's date (B-spline link only).
    basis: Vec<Vec<f64>>,
}

impl MapProblem {
    /// Builds the objective from runs and model metadata. Dates are encoded
    /// with `scale`; models without runs are left out.
    pub fn new(link: LinkKind, runs: &RunTable, models: &ModelTable, priors: &PriorSpec, scale: &TimeScale) -> Result<Self, FitError> {
        if let Some(r) = runs.records.iter().find(|r| models.get(&r.model_id).is_none()) {
            return Err(FitError::ModelNotFound(r.model_id.clone()));
        }
        let mut data = Vec::new();
        for m in models.iter() {
            let obs: Vec<Observation> = runs.for_model(&m.model_id).map(Observation::from).collect();
            if !obs.is_empty() {
                data.push(ModelData { model_id: m.model_id.clone(), d: scale.encode(m.release_date), k_thinking: m.k_thinking, obs });
            }
        }
        let spline = match link {
            LinkKind::Bspline => {
                let dates: Vec<f64> = if data.is_empty() {
                    models.iter().map(|m| scale.encode(m.release_date)).collect()
                } else {
                    data.iter().map(|m| m.d).collect()
                };
                Some(SplineSpec::for_release_dates(&dates)?)
            }
            _ => None,
        };
        Ok(Self::from_parts(link, spline, priors.clone(), data))
    }

    fn from_parts(link: LinkKind, spline: Option<SplineSpec>, priors: PriorSpec, models: Vec<ModelData>) -> Self {
        let basis = match &spline {
            Some(s) => models.iter().map(|m| bspline_basis(m.d, s)).collect(),
            None => Vec::new(),
        };
        MapProblem { link, spline, priors, models, basis }
    }

    pub fn link(&self) -> LinkKind {
        self.link
    }

    pub fn spline(&self) -> Option<&SplineSpec> {
        self.spline.as_ref()
    }

    pub fn model_ids(&self) -> Vec<&str> {
        self.models.iter().map(|m| m.model_id.as_str()).collect()
    }

    fn n_link(&self) -> usize {
        match self.link {
            LinkKind::Bspline => 2 + 2 * self.spline.as_ref().map_or(0, |s| s.n_basis),
            _ => 6,
        }
    }

    /// Length of the unconstrained parameter vector.
    pub fn dimension(&self) -> usize {
        self.n_link() + self.models.len()
    }

    /// `ln h` for model `m` and its gradient with respect to the link block.
    fn log_horizon(&self, z: &[f64], m: usize) -> (f64, Vec<f64>) {
        let n_link = self.n_link();
        let mut g = vec![0.0; n_link];
        let model = &self.models[m];
        let d = model.d;
        let (lg2, k) = (z[1], model.k_thinking);
        let mut value = z[0];
        g[0] = 1.0;
        match self.link {
            LinkKind::Sigmoid => {
                let (s1, c1) = (z[2].exp(), z[3]);
                let u = s1 * d + c1;
                value += log_sigmoid(u);
                let du = 1.0 - sigmoid(u);
                g[2] = du * d * s1;
                g[3] = du;
                if k {
                    let (s2, c2) = (z[4].exp(), z[5]);
                    let v = s2 * d + c2;
                    let r = sigmoid(v);
                    let big_r = lg2.exp() * r;
                    value += big_r.ln_1p();
                    let w = big_r / (1.0 + big_r);
                    g[1] = w;
                    let dv = w * (1.0 - r);
                    g[4] = dv * d * s2;
                    g[5] = dv;
                }
            }
            LinkKind::Exponential => {
                let (s1, c1) = (z[2].exp(), z[3]);
                value += s1 * d + c1;
                g[2] = d * s1;
                g[3] = 1.0;
                if k {
                    let (s2, c2) = (z[4].exp(), z[5]);
                    // ln(1 + g2 e^v) = softplus(ln g2 + v)
                    let a = lg2 + s2 * d + c2;
                    value += -log_sigmoid(-a);
                    let w = sigmoid(a);
                    g[1] = w;
                    g[4] = w * d * s2;
                    g[5] = w;
                }
            }
            LinkKind::Bspline => {
                let nb = self.spline.as_ref().map_or(0, |s| s.n_basis);
                let basis = &self.basis[m];
                let base: Vec<f64> = z[2..2 + nb].iter().map(|x| x.exp()).collect();
                let b: f64 = base.iter().zip(basis).map(|(c, bi)| c * bi).sum();
                value += b.ln();
                for i in 0..nb {
                    g[2 + i] = basis[i] * base[i] / b;
                }
                if k {
                    let reason: Vec<f64> = z[2 + nb..2 + 2 * nb].iter().map(|x| x.exp()).collect();
                    let r: f64 = reason.iter().zip(basis).map(|(c, bi)| c * bi).sum();
                    let g2 = lg2.exp();
                    let big_r = g2 * r;
                    value += big_r.ln_1p();
                    let w = 1.0 / (1.0 + big_r);
                    g[1] = big_r * w;
                    for i in 0..nb {
                        g[2 + nb + i] = g2 * basis[i] * reason[i] * w;
                    }
                }
            }
        }
        (value, g)
    }

    fn log_prior(&self, z: &[f64], grad: &mut [f64]) -> f64 {
        let var = self.priors.normal_sd * self.priors.normal_sd;
        let mut lp = 0.0;
        // Positive parameter with N(0, sd^2) on exp(x), plus the log-Jacobian x.
        fn positive(z: &[f64], grad: &mut [f64], var: f64, i: usize) -> f64 {
            let v = z[i].exp();
            grad[i] += -v * v / var + 1.0;
            -0.5 * v * v / var + z[i]
        }
        lp += positive(z, grad, var, 0);
        lp += positive(z, grad, var, 1);
        let n_link = self.n_link();
        match self.link {
            LinkKind::Sigmoid | LinkKind::Exponential => {
                lp += positive(z, grad, var, 2);
                lp += positive(z, grad, var, 4);
                for i in [3, 5] {
                    lp += -0.5 * z[i] * z[i] / var;
                    grad[i] += -z[i] / var;
                }
            }
            LinkKind::Bspline => {
                let nb = self.spline.as_ref().map_or(0, |s| s.n_basis);
                let tau = self.priors.spline_rw_tau;
                for block in [2, 2 + nb] {
                    let c: Vec<f64> = z[block..block + nb].iter().map(|x| x.exp()).collect();
                    // First coefficient ~ N(0, 1).
                    lp += -0.5 * c[0] * c[0];
                    let mut dc = vec![0.0; nb];
                    dc[0] -= c[0];
                    for i in 1..nb {
                        let step = c[i] - c[i - 1];
                        lp += -0.5 * step * step / (tau * tau);
                        dc[i] -= step / (tau * tau);
                        dc[i - 1] += step / (tau * tau);
                    }
                    for i in 0..nb {
                        lp += z[block + i];
                        grad[block + i] += dc[i] * c[i] + 1.0;
                    }
                }
            }
        }
        let offset = n_link;
        for i in offset..z.len() {
            lp += positive(z, grad, var, i);
        }
        lp
    }

    /// Log posterior (up to a constant) and its gradient.
    pub fn log_posterior(&self, z: &[f64]) -> (f64, Vec<f64>) {
        assert_eq!(z.len(), self.dimension(), "parameter vector length");
        let mut grad = vec![0.0; z.len()];
        let mut value = self.log_prior(z, &mut grad);
        let beta_offset = self.n_link();
        for m in 0..self.models.len() {
            let (log_h, dlh) = self.log_horizon(z, m);
            let log_beta = z[beta_offset + m];
            let (ll, g) = observation_loglik([log_h, log_beta], &self.models[m].obs);
            value += ll;
            for (gi, di) in grad.iter_mut().zip(&dlh) {
                *gi += g[0] * di;
            }
            grad[beta_offset + m] += g[1];
        }
        if !value.is_finite() {
            return (f64::NEG_INFINITY, grad);
        }
        (value, grad)
    }

    /// Packs constrained parameters into the unconstrained vector.
    pub fn pack(&self, params: &GrowthParams, betas: &[f64]) -> Vec<f64> {
        let mut z = vec![params.gamma1.ln(), params.gamma2.ln()];
        match self.link {
            LinkKind::Sigmoid | LinkKind::Exponential => {
                z.extend([params.base[0].ln(), params.base[1], params.reasoning[0].ln(), params.reasoning[1]]);
            }
            LinkKind::Bspline => {
                z.extend(params.base.iter().map(|c| c.ln()));
                z.extend(params.reasoning.iter().map(|c| c.ln()));
            }
        }
        z.extend(betas.iter().map(|b| b.ln()));
        z
    }

    pub fn unpack(&self, z: &[f64]) -> (GrowthParams, Vec<f64>) {
        let params = match self.link {
            LinkKind::Sigmoid => GrowthParams::sigmoid(z[0].exp(), z[1].exp(), [z[2].exp(), z[3]], [z[4].exp(), z[5]]),
            LinkKind::Exponential => GrowthParams::exponential(z[0].exp(), z[1].exp(), [z[2].exp(), z[3]], [z[4].exp(), z[5]]),
            LinkKind::Bspline => {
                let nb = self.spline.as_ref().map_or(0, |s| s.n_basis);
                GrowthParams::bspline(
                    z[0].exp(),
                    z[1].exp(),
                    z[2..2 + nb].iter().map(|x| x.exp()).collect(),
                    z[2 + nb..2 + 2 * nb].iter().map(|x| x.exp()).collect(),
                    self.spline.clone().expect("spline spec"),
                )
            }
        };
        let betas = z[self.n_link()..].iter().map(|x| x.exp()).collect();
        (params, betas)
    }

    /// Deterministic starting point: per-model horizons by maximum
    /// likelihood, then a least-squares fit of the link block to their logs.
    fn initial_point(&self, config: &FitConfig) -> Vec<f64> {
        let horizon_cfg = FitConfig::horizon_default().with_seed(config.seed);
        let fits: Vec<(f64, f64)> = self
            .models
            .iter()
            .map(|m| match fit_observations(&m.model_id, &m.obs, &horizon_cfg) {
                Ok(e) => (e.h_minutes.ln(), e.beta.clamp(0.05, 20.0)),
                Err(_) => (median(&m.obs.iter().map(|o| o.log_t).collect::<Vec<_>>()), 1.0),
            })
            .collect();
        let n_link = self.n_link();
        let targets: Vec<f64> = fits.iter().map(|f| f.0).collect();
        let dates: Vec<f64> = self.models.iter().map(|m| m.d).collect();
        let (dmin, dmax) = dates.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &d| (a.min(d), b.max(d)));
        let span = (dmax - dmin).max(1.0);
        let trend_points: Vec<(f64, f64)> = dates.iter().zip(&targets).map(|(&d, &t)| (d, t.exp())).collect();
        let trend = ols_log_fit(&trend_points).unwrap_or(ExpTrendParams { beta0: median(&targets), beta1: 0.5 });
        let hmax = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max).exp();

        let mut starts: Vec<Vec<f64>> = Vec::new();
        match self.link {
            LinkKind::Sigmoid => {
                let s1 = 4.0 / span;
                let s2 = 4.0 / span;
                for (mid_b, mid_r) in [(0.5, 1.0), (0.7, 1.05), (0.85, 1.2), (1.0, 1.0)] {
                    let db = dmin + mid_b * (dmax - dmin);
                    let dr = dmin + mid_r * (dmax - dmin);
                    starts.push(vec![(hmax / 2.0).ln(), 2f64.ln(), s1.ln(), -s1 * db, s2.ln(), -s2 * dr]);
                }
            }
            LinkKind::Exponential => {
                let slope = trend.beta1.max(0.05);
                for (frac, g2) in [(0.5, 1.0), (0.8, 2.0), (1.0, 0.5)] {
                    let dr = dmin + frac * (dmax - dmin);
                    starts.push(vec![0.0, f64::ln(g2), slope.ln(), trend.beta0, slope.ln(), -slope * dr]);
                }
            }
            LinkKind::Bspline => {
                let spec = self.spline.as_ref().expect("spline spec");
                let nb = spec.n_basis;
                let p = spec.degree;
                let gamma1 = hmax.max(1.0).sqrt().min(20.0);
                let mut z = vec![gamma1.ln(), 0.0];
                for i in 0..nb {
                    let greville = spec.knots[i + 1..=i + p].iter().sum::<f64>() / p as f64;
                    let h = (trend.beta0 + trend.beta1 * greville).exp().clamp(1e-3, 1e4);
                    z.push((h / gamma1).ln());
                }
                z.extend(std::iter::repeat(0.0).take(nb));
                starts.push(z);
            }
        }

        let ls = |x: &[f64]| -> (f64, Vec<f64>) {
            let mut full = x.to_vec();
            full.extend(std::iter::repeat(0.0).take(self.models.len()));
            let mut value = 0.0;
            let mut grad = vec![0.0; n_link];
            for m in 0..self.models.len() {
                let (lh, g) = self.log_horizon(&full, m);
                let r = lh - targets[m];
                value += r * r;
                for i in 0..n_link {
                    grad[i] += 2.0 * r * g[i];
                }
            }
            // Light ridge keeps the start finite when the data underdetermine it.
            for i in 0..n_link {
                value += 1e-4 * x[i] * x[i];
                grad[i] += 2e-4 * x[i];
            }
            (value, grad)
        };
        let options = LbfgsOptions { memory: 10, max_iterations: 500, gradient_tolerance: 1e-8 };
        let best = starts
            .iter()
            .map(|s| lbfgs(ls, s, &options))
            .filter(|m| m.value.is_finite())
            .min_by(|a, b| a.value.total_cmp(&b.value))
            .map(|m| m.x)
            .unwrap_or_else(|| starts[0].clone());

        let mut z = best;
        z.extend(fits.iter().map(|f| f.1.ln()));
        z
    }
}

/// Value and gradient (unconstrained coordinates) of the log posterior at
/// the given constrained parameters and per-model log-slopes.
pub fn map_objective(
    params: &GrowthParams,
    log_betas: &[f64],
    runs: &RunTable,
    models: &ModelTable,
    priors: &PriorSpec,
    scale: &TimeScale,
) -> Result<(f64, Vec<f64>), FitError> {
    let mut problem = MapProblem::new(params.link, runs, models, priors, scale)?;
    if let Some(spec) = &params.spline {
        problem = MapProblem::from_parts(problem.link, Some(spec.clone()), problem.priors, problem.models);
    }
    let betas: Vec<f64> = log_betas.iter().map(|b| b.exp()).collect();
    if betas.len() != problem.models.len() {
        return Err(FitError::Growth(GrowthError::LengthMismatch { expected: problem.models.len(), got: betas.len() }));
    }
    let z = problem.pack(params, &betas);
    Ok(problem.log_posterior(&z))
}

/// MAP estimate of the multiplicative model.
///
/// Restart 0 starts from the deterministic initial point; the others from
/// seeded Gaussian perturbations of it. Each restart runs the warm-up and
/// quasi-Newton stages; the best log posterior wins, ties to the lower index.
pub fn map_fit(
    link: LinkKind,
    runs: &RunTable,
    models: &ModelTable,
    priors: &PriorSpec,
    config: &FitConfig,
    scale: &TimeScale,
) -> Result<GrowthFit, FitError> {
    if runs.is_empty() {
        return Err(FitError::EmptyInput("runs"));
    }
    let problem = MapProblem::new(link, runs, models, priors, scale)?;
    if problem.models.is_empty() {
        return Err(FitError::EmptyInput("models with runs"));
    }
    let (best, _) = map_fit_problem(&problem, config);
    let best = best.ok_or_else(|| FitError::NonConvergence(format!("{} link", link.as_str())))?;
    let (params, betas) = problem.unpack(&best.x);
    let per_model_beta = problem.models.iter().zip(betas).map(|(m, b)| (m.model_id.clone(), b)).collect();
    let specification = match link {
        LinkKind::Sigmoid => Specification::SigmoidLink,
        LinkKind::Exponential => Specification::ExpLink,
        LinkKind::Bspline => Specification::BsplineLink,
    };
    Ok(GrowthFit {
        specification,
        kind: FitKind::MapJoint,
        curve: FittedCurve::Multiplicative(params),
        per_model_beta,
        objective: -best.value,
        mse: None,
        converged: best.converged,
        seed: config.seed,
    })
}

/// Runs every restart; returns the winner and all per-restart minima (of
/// the negative log posterior), in restart order.
pub fn map_fit_problem(problem: &MapProblem, config: &FitConfig) -> (Option<Minimum>, Vec<Minimum>) {
    let start = problem.initial_point(config);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut starts = vec![start.clone()];
    for _ in 1..config.restarts.max(1) {
        starts.push(start.iter().map(|x| x + 0.5 * gaussian(&mut rng)).collect());
    }
    let neg = |z: &[f64]| {
        let (v, g) = problem.log_posterior(z);
        (-v, g.into_iter().map(|x| -x).collect::<Vec<_>>())
    };
    let results: Vec<Minimum> = starts.par_iter().map(|s| polish(neg, s, config)).collect();
    (best_minimum(results.clone()), results)
}

/// Mean squared error of a fit's predictions against per-model horizons.
pub fn mse_against_horizons(
    fit: &GrowthFit,
    horizons: &[HorizonEstimate],
    models: &ModelTable,
    scale: &TimeScale,
) -> Result<f64, FitError> {
    if horizons.is_empty() {
        return Err(FitError::EmptyInput("horizons"));
    }
    let mut total = 0.0;
    for h in horizons {
        let m = models.get(&h.model_id).ok_or_else(|| FitError::MissingModel(h.model_id.clone()))?;
        let pred = fit.predict(scale.encode(m.release_date), m.k_thinking)?;
        total += (pred - h.h_minutes).powi(2);
    }
    Ok(total / horizons.len() as f64)
}

/// Largest elementwise relative error between an analytic gradient and
/// five-point central differences with the given step; the denominator is
/// floored at 1e-8.
pub fn finite_difference_check<F>(mut objective: F, point: &[f64], step: f64) -> f64
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let (_, analytic) = objective(point);
    let mut worst: f64 = 0.0;
    let mut x = point.to_vec();
    for i in 0..point.len() {
        let mut at = |offset: f64| {
            x[i] = point[i] + offset;
            objective(&x).0
        };
        let (f2, f1, m1, m2) = (at(2.0 * step), at(step), at(-step), at(-2.0 * step));
        x[i] = point[i];
        let numeric = (8.0 * (f1 - m1) - (f2 - m2)) / (12.0 * step);
        let err = (analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8);
        worst = worst.max(err);
    }
    worst
}

/// Checks a fitted sigmoid curve's convergence in the crate's scaled norm.
pub fn sigmoid_fit_converged(points: &[(f64, f64)], p: &SingleSigmoidParams, tolerance: f64) -> bool {
    let z = [p.gamma.ln(), p.delta1.ln(), p.delta2];
    let (v, g) = sigmoid_mse_objective(points, &z);
    gradient_converged(v, &g, tolerance)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ModelRecord, RunRecord, TaskFamily};
    use chrono::NaiveDate;

    #[test]
    fn ols_exact_line() {
        let pts: Vec<(f64, f64)> = (0..10)
            .map(|i| {
                let d = i as f64 * 0.7 - 1.0;
                (d, (1.0 + 2.0 * d).exp())
            })
            .collect();
        let p = ols_log_fit(&pts).unwrap();
        assert!((p.beta0 - 1.0).abs() < 1e-12 && (p.beta1 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn ols_two_points() {
        let p = ols_log_fit(&[(0.0, 1.0), (1.0, 2.0)]).unwrap();
        assert!(p.beta0.abs() < 1e-15);
        assert!((p.beta1 - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(ols_log_fit(&[(1.0, 2.0), (1.0, 3.0)]), Err(FitError::DegenerateDesign));
        assert!(matches!(ols_log_fit(&[(1.0, 2.0)]), Err(FitError::TooFewPoints { .. })));
    }

    #[test]
    fn ols_residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let pts: Vec<(f64, f64)> = (0..30).map(|_| (rng.gen_range(0.0..7.0), rng.gen_range(0.01..300.0))).collect();
        let p = ols_log_fit(&pts).unwrap();
        let (mut r1, mut rd) = (0.0, 0.0);
        for &(d, h) in &pts {
            let r = h.ln() - p.beta0 - p.beta1 * d;
            r1 += r;
            rd += r * d;
        }
        assert!(r1.abs() < 1e-10 && rd.abs() < 1e-10);
    }

    #[test]
    fn sigmoid_fit_recovers_noiseless_curve() {
        let truth = SingleSigmoidParams { gamma: 100.0, delta1: 2.0, delta2: -8.0 };
        let pts: Vec<(f64, f64)> = (0..20)
            .map(|i| {
                let d = i as f64 * 0.35;
                (d, single_sigmoid_curve(d, &truth).unwrap())
            })
            .collect();
        let (p, mse) = mse_sigmoid_fit(&pts, &FitConfig::growth_default()).unwrap();
        assert!(mse < 1e-6, "mse {mse}");
        assert!((p.gamma / 100.0 - 1.0).abs() < 0.01);
        assert!((p.delta1 / 2.0 - 1.0).abs() < 0.01);
        assert!((p.delta2 / -8.0 - 1.0).abs() < 0.01);
    }

    #[test]
    fn sigmoid_fit_needs_three_points() {
        assert_eq!(
            mse_sigmoid_fit(&[(0.0, 1.0), (1.0, 2.0)], &FitConfig::growth_default()),
            Err(FitError::TooFewPoints { needed: 3, got: 2 })
        );
    }

    #[test]
    fn fd_check_examples() {
        let quad = |x: &[f64]| (x[0] * x[0], vec![2.0 * x[0]]);
        assert!(finite_difference_check(quad, &[3.0], 1e-6) <= 1e-9);
        let constant = |_: &[f64]| (4.2, vec![0.0, 0.0]);
        assert_eq!(finite_difference_check(constant, &[1.0, -2.0], 1e-6), 0.0);
    }

    fn model(id: &str, date: &str, k: bool) -> ModelRecord {
        ModelRecord {
            model_id: id.into(),
            release_date: NaiveDate::parse_from_str(date, "%Y-%m-%d").unwrap(),
            is_sota: true,
            k_thinking: k,
        }
    }

    fn run(m: &str, t: f64, s: bool) -> RunRecord {
        RunRecord {
            model_id: m.into(),
            task_id: format!("{t}"),
            task_family: TaskFamily::Other,
            human_minutes: t,
            success: s,
            attempt: 0,
            weight: 1.0,
        }
    }

    #[test]
    fn map_objective_with_no_runs_is_the_log_prior() {
        let models = ModelTable::new(vec![model("a", "2020-01-01", false)]).unwrap();
        let runs = RunTable::default();
        let p = GrowthParams::sigmoid(2.0, 3.0, [0.5, 0.1], [1.5, -0.2]);
        let (v, _) = map_objective(&p, &[], &runs, &models, &PriorSpec::default(), &TimeScale::default()).unwrap();
        let var: f64 = 100.0;
        let positive = |x: f64| -0.5 * x * x / var + x.ln();
        let expected = positive(2.0) + positive(3.0) + positive(0.5) + positive(1.5) - 0.5 * 0.01 / var - 0.5 * 0.04 / var;
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn map_likelihood_term_at_the_midpoint() {
        // Model at the epoch: b(0) = sigmoid(0) = 1/2, so h = g1 / 2 without reasoning.
        let models = ModelTable::new(vec![model("a", "2019-01-01", false)]).unwrap();
        let runs = RunTable::from_records(vec![run("a", 5.0, true)]);
        let p = GrowthParams::sigmoid(10.0, 1.0, [1.0, 0.0], [1.0, 0.0]);
        let priors = PriorSpec::default();
        let scale = TimeScale::default();
        let (with, _) = map_objective(&p, &[0.3], &runs, &models, &priors, &scale).unwrap();
        let problem = MapProblem::new(LinkKind::Sigmoid, &runs, &models, &priors, &scale).unwrap();
        let z = problem.pack(&p, &[0.3f64.exp()]);
        let lp = problem.log_prior(&z, &mut vec![0.0; z.len()]);
        assert!((with - lp - 0.5f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn unknown_model_is_reported() {
        let models = ModelTable::new(vec![model("a", "2020-01-01", false)]).unwrap();
        let runs = RunTable::from_records(vec![run("zzz", 1.0, true)]);
        assert_eq!(
            MapProblem::new(LinkKind::Sigmoid, &runs, &models, &PriorSpec::default(), &TimeScale::default()).unwrap_err(),
            FitError::ModelNotFound("zzz".into())
        );
    }

    #[test]
    fn mse_against_horizons_examples() {
        let models = ModelTable::new(vec![model("a", "2020-01-01", false), model("b", "2021-01-01", false)]).unwrap();
        let est = |id: &str, h: f64| HorizonEstimate {
            model_id: id.into(),
            h_minutes: h,
            beta: 1.0,
            log_likelihood: 0.0,
            n_runs: 1,
            converged: true,
            degenerate: false,
        };
        // A trend through both points exactly.
        let scale = TimeScale::default();
        let pts = [(scale.encode(models.records[0].release_date), 3.0), (scale.encode(models.records[1].release_date), 4.0)];
        let fit = ols_fit(&pts, 0).unwrap();
        let mse = mse_against_horizons(&fit, &[est("a", 3.0), est("b", 4.0)], &models, &scale).unwrap();
        assert!(mse < 1e-24);
        // A (near) zero prediction: exp(-800) underflows to 0.
        let zero = GrowthFit { curve: FittedCurve::ExpTrend(ExpTrendParams { beta0: -800.0, beta1: 0.0 }), ..fit.clone() };
        assert_eq!(mse_against_horizons(&zero, &[est("a", 3.0), est("b", 4.0)], &models, &scale).unwrap(), 12.5);
        assert_eq!(mse_against_horizons(&fit, &[est("c", 1.0)], &models, &scale), Err(FitError::MissingModel("c".into())));
        assert_eq!(mse_against_horizons(&fit, &[], &models, &scale), Err(FitError::EmptyInput("horizons")));
    }

    #[test]
    fn specification_ids_round_trip() {
        for s in Specification::ALL {
            assert_eq!(Specification::parse(s.id()), Some(s));
        }
        assert_eq!(Specification::parse("nope"), None);
    }
}
