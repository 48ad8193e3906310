//! Python bindings for the capability-horizon analysis crate.

use std::path::PathBuf;

use capgrowth_core as core;
use core::dataset::{synthetic, RunRecord, TaskFamily, TimeScale};
use core::fitting::{self, FitConfig, Specification};
use core::growth::{self, ExpTrendParams, GrowthParams, LinkKind};
use core::horizon;
use core::pipeline::{self, PipelineError, RunManifest};
use core::theory::{self, CertificationReport, XRange};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn pipeline_err(e: PipelineError) -> PyErr {
    match e.exit_code() {
        2 => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn to_json<T: serde::Serialize>(value: &T) -> PyResult<String> {
    serde_json::to_string(value).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

/// Per-model horizon estimate.
#[pyclass(name = "HorizonEstimate", frozen, get_all, skip_from_py_object)]
#[derive(Clone)]
struct PyHorizonEstimate {
    model_id: String,
    h_minutes: f64,
    beta: f64,
    log_likelihood: f64,
    n_runs: usize,
    converged: bool,
    degenerate: bool,
}

#[pymethods]
impl PyHorizonEstimate {
    fn __repr__(&self) -> String {
        format!(
            "HorizonEstimate(model_id={:?}, h_minutes={}, beta={}, converged={})",
            self.model_id, self.h_minutes, self.beta, self.converged
        )
    }
}

impl From<horizon::HorizonEstimate> for PyHorizonEstimate {
    fn from(h: horizon::HorizonEstimate) -> Self {
        PyHorizonEstimate {
            model_id: h.model_id,
            h_minutes: h.h_minutes,
            beta: h.beta,
            log_likelihood: h.log_likelihood,
            n_runs: h.n_runs,
            converged: h.converged,
            degenerate: h.degenerate,
        }
    }
}

/// A fitted growth curve.
#[pyclass(name = "GrowthFit", frozen)]
struct PyGrowthFit {
    inner: fitting::GrowthFit,
}

#[pymethods]
impl PyGrowthFit {
    #[getter]
    fn specification(&self) -> &'static str {
        self.inner.specification.id()
    }

    #[getter]
    fn objective(&self) -> f64 {
        self.inner.objective
    }

    #[getter]
    fn mse(&self) -> Option<f64> {
        self.inner.mse
    }

    #[getter]
    fn converged(&self) -> bool {
        self.inner.converged
    }

    /// Predicted horizon (minutes) at an ISO date.
    #[pyo3(signature = (date, k_thinking=false))]
    fn predict(&self, date: &str, k_thinking: bool) -> PyResult<f64> {
        let d = TimeScale::default().encode_str(date).map_err(value_err)?;
        self.inner.predict(d, k_thinking).map_err(value_err)
    }

    /// Inflection dates of the fit's sigmoid components, as `(component, date)`.
    fn inflections(&self) -> PyResult<Vec<(String, String)>> {
        let scale = TimeScale::default();
        let reference = scale.decode(0.0);
        Ok(core::forecast::fit_inflections(&self.inner, &scale, reference)
            .map_err(value_err)?
            .into_iter()
            .map(|i| {
                (serde_json::to_value(i.component).ok().and_then(|v| v.as_str().map(str::to_owned)).unwrap_or_default(), i.date.to_string())
            })
            .collect())
    }

    fn to_json(&self) -> PyResult<String> {
        to_json(&self.inner)
    }

    fn __repr__(&self) -> String {
        format!(
            "GrowthFit(specification={:?}, objective={}, converged={})",
            self.inner.specification.id(),
            self.inner.objective,
            self.inner.converged
        )
    }
}

/// `sigmoid(beta * (ln h - ln t))`.
#[pyfunction]
fn success_probability(h: f64, beta: f64, t: f64) -> PyResult<f64> {
    horizon::success_probability(h, beta, t).map_err(value_err)
}

/// Maximum-likelihood 50% horizon from task lengths (minutes) and outcomes.
#[pyfunction]
#[pyo3(signature = (human_minutes, success, weights=None, seed=0, model_id="model"))]
fn fit_horizon(
    human_minutes: Vec<f64>,
    success: Vec<bool>,
    weights: Option<Vec<f64>>,
    seed: u64,
    model_id: &str,
) -> PyResult<PyHorizonEstimate> {
    if human_minutes.len() != success.len() {
        return Err(PyValueError::new_err("human_minutes and success differ in length"));
    }
    let weights = weights.unwrap_or_else(|| vec![1.0; success.len()]);
    if weights.len() != success.len() {
        return Err(PyValueError::new_err("weights and success differ in length"));
    }
    let runs: Vec<RunRecord> = human_minutes
        .iter()
        .zip(&success)
        .zip(&weights)
        .enumerate()
        .map(|(i, ((&t, &s), &w))| RunRecord {
            model_id: model_id.to_string(),
            task_id: format!("task-{i}"),
            task_family: TaskFamily::Other,
            human_minutes: t,
            success: s,
            attempt: 0,
            weight: w,
        })
        .collect();
    if let Some(r) = runs.iter().find(|r| !(r.human_minutes > 0.0) || !(r.weight > 0.0)) {
        return Err(PyValueError::new_err(format!("task lengths and weights must be positive ({} / {})", r.human_minutes, r.weight)));
    }
    let refs: Vec<&RunRecord> = runs.iter().collect();
    horizon::fit_horizon(&refs, &FitConfig::horizon_default().with_seed(seed)).map(Into::into).map_err(value_err)
}

/// Encodes an ISO date as years since 2019-01-01.
#[pyfunction]
fn encode_date(date: &str) -> PyResult<f64> {
    TimeScale::default().encode_str(date).map_err(value_err)
}

/// Decodes years since 2019-01-01 to the nearest ISO date.
#[pyfunction]
fn decode_date(x: f64) -> String {
    TimeScale::default().decode(x).to_string()
}

fn parse_link(link: &str) -> PyResult<LinkKind> {
    match link {
        "sigmoid" => Ok(LinkKind::Sigmoid),
        "exponential" | "exp" => Ok(LinkKind::Exponential),
        "bspline" => Ok(LinkKind::Bspline),
        other => Err(PyValueError::new_err(format!("unknown link `{other}`"))),
    }
}

/// Horizon of the multiplicative model with sigmoid or exponential links
/// (`base`, `reasoning` are `(slope, intercept)` pairs).
#[pyfunction]
#[pyo3(signature = (d, k_thinking, gamma1, gamma2, base, reasoning, link="sigmoid"))]
fn model_horizon(d: f64, k_thinking: bool, gamma1: f64, gamma2: f64, base: (f64, f64), reasoning: (f64, f64), link: &str) -> PyResult<f64> {
    let p = match parse_link(link)? {
        LinkKind::Sigmoid => GrowthParams::sigmoid(gamma1, gamma2, [base.0, base.1], [reasoning.0, reasoning.1]),
        LinkKind::Exponential => GrowthParams::exponential(gamma1, gamma2, [base.0, base.1], [reasoning.0, reasoning.1]),
        LinkKind::Bspline => return Err(PyValueError::new_err("use a fitted B-spline GrowthFit to evaluate spline links")),
    };
    growth::model_horizon(d, k_thinking, &p).map_err(value_err)
}

/// Log-linear least squares `ln h = beta0 + beta1 * d`; returns `(beta0, beta1, doubling_months)`.
#[pyfunction]
fn ols_log_fit(points: Vec<(f64, f64)>) -> PyResult<(f64, f64, f64)> {
    let p: ExpTrendParams = fitting::ols_log_fit(&points).map_err(value_err)?;
    let dt = growth::doubling_time(&p).unwrap_or(f64::INFINITY);
    Ok((p.beta0, p.beta1, dt))
}

/// Least-squares single sigmoid `gamma * sigmoid(d1 * d + d2)` through `(d, h)` points.
#[pyfunction]
#[pyo3(signature = (points, seed=0))]
fn fit_sigmoid_curve(points: Vec<(f64, f64)>, seed: u64) -> PyResult<PyGrowthFit> {
    fitting::sigmoid_curve_fit(&points, &FitConfig::growth_default().with_seed(seed))
        .map(|inner| PyGrowthFit { inner })
        .map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

fn manifest(runs: PathBuf, out_dir: PathBuf, models: Option<PathBuf>, seed: u64, sota_only: bool) -> RunManifest {
    let mut m = RunManifest::new(runs, out_dir);
    m.models_path = models;
    m.seed = seed;
    m.sota_only = sota_only;
    m
}

/// Fits one specification (`metr-exp`, `sigmoid-curve`, `sigmoid-link`,
/// `exp-link`, `bspline-link`) to a run table.
#[pyfunction]
#[pyo3(signature = (runs, spec, models=None, seed=0, sota_only=true))]
fn fit_trend(py: Python<'_>, runs: PathBuf, spec: &str, models: Option<PathBuf>, seed: u64, sota_only: bool) -> PyResult<PyGrowthFit> {
    let spec = Specification::parse(spec).ok_or_else(|| PyValueError::new_err(format!("unknown specification `{spec}`")))?;
    let m = manifest(runs, PathBuf::new(), models, seed, sota_only);
    py.detach(|| {
        let inputs = pipeline::load_inputs(&m)?;
        let (horizons, _, _) = pipeline::horizons(&inputs, None, seed)?;
        pipeline::fit_specification(spec, &inputs, &horizons, seed, &TimeScale::default())
            .map_err(|e| PipelineError::Fit { spec: spec.id().into(), message: e.to_string() })
    })
    .map(|inner| PyGrowthFit { inner })
    .map_err(pipeline_err)
}

/// Runs the full pipeline; returns report.json as a string.
#[pyfunction]
#[pyo3(signature = (runs, out_dir, specs=None, models=None, seed=0, sota_only=true, plots=false))]
fn run_pipeline(
    py: Python<'_>,
    runs: PathBuf,
    out_dir: PathBuf,
    specs: Option<Vec<String>>,
    models: Option<PathBuf>,
    seed: u64,
    sota_only: bool,
    plots: bool,
) -> PyResult<String> {
    let mut m = manifest(runs, out_dir, models, seed, sota_only);
    m.plots = plots;
    if let Some(specs) = specs {
        m.specs = specs
            .iter()
            .map(|s| Specification::parse(s).ok_or_else(|| PyValueError::new_err(format!("unknown specification `{s}`"))))
            .collect::<PyResult<_>>()?;
    }
    let out = py.detach(|| pipeline::run_pipeline(&m)).map_err(pipeline_err)?;
    to_json(&out.report)
}

/// Certifies the three-regime bounds of `prod_i sigmoid(x - i*alpha)`;
/// returns the certification report as JSON.
#[pyfunction]
#[pyo3(signature = (k, alpha, resolution=0.01))]
fn certify_bounds(py: Python<'_>, k: u32, alpha: f64, resolution: f64) -> PyResult<String> {
    let spec = theory::SigmoidProductSpec::new(k, alpha).map_err(value_err)?;
    let range = XRange::default();
    let certs = py.detach(|| theory::certify_bounds(&[spec], resolution, range)).map_err(value_err)?;
    to_json(&CertificationReport::new(&certs, resolution, range))
}

/// Writes the seeded synthetic reference study as a canonical runs CSV.
#[pyfunction]
#[pyo3(signature = (path, seed=0))]
fn write_synthetic_runs(path: PathBuf, seed: u64) -> PyResult<usize> {
    let study = synthetic::reference_study(seed);
    let file = std::fs::File::create(&path).map_err(value_err)?;
    study.runs.write_csv(file).map_err(value_err)?;
    Ok(study.runs.len())
}

#[pymodule]
fn capgrowth(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_class::<PyHorizonEstimate>()?;
    m.add_class::<PyGrowthFit>()?;
    m.add_function(wrap_pyfunction!(success_probability, m)?)?;
    m.add_function(wrap_pyfunction!(fit_horizon, m)?)?;
    m.add_function(wrap_pyfunction!(encode_date, m)?)?;
    m.add_function(wrap_pyfunction!(decode_date, m)?)?;
    m.add_function(wrap_pyfunction!(model_horizon, m)?)?;
    m.add_function(wrap_pyfunction!(ols_log_fit, m)?)?;
    m.add_function(wrap_pyfunction!(fit_sigmoid_curve, m)?)?;
    m.add_function(wrap_pyfunction!(fit_trend, m)?)?;
    m.add_function(wrap_pyfunction!(run_pipeline, m)?)?;
    m.add_function(wrap_pyfunction!(certify_bounds, m)?)?;
    m.add_function(wrap_pyfunction!(write_synthetic_runs, m)?)?;
    Ok(())
}
