//! End-to-end driver: ingest, per-model horizons, growth fits, projections
//! and the emitted artifact set.

use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;
use serde::Serialize;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::dataset::{
    filter_sota, parse_metr_runs, parse_models, parse_runs, DatasetError, InputFormat, ModelTable, RunTable, TimeScale,
    REFERENCE_SOTA_MODELS_CSV,
};
use crate::fitting::{map_fit, ols_fit, sigmoid_curve_fit, FitConfig, FitError, FittedCurve, GrowthFit, PriorSpec, Specification};
use crate::forecast::{
    divergence_date, project, project_components, sustained_divergence_date, write_forecast_csv, Component, ForecastError, ForecastSeries,
    ReportRow,
};
use crate::growth::doubling_time;
use crate::horizon::{fit_all_horizons, read_horizons_csv, write_horizons_csv, HorizonError, HorizonEstimate};
use crate::plot::{Chart, Marker, ObservedPoint};
use crate::TOOL_VERSION;

/// Failure classes, each with a stable process exit code.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{0}")]
    Input(String),
    #[error("{spec}: {message}")]
    Fit { spec: String, message: String },
    #[error("{0}")]
    Theorem(String),
    #[error("{0}")]
    Output(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Input(_) => 2,
            PipelineError::Fit { .. } => 3,
            PipelineError::Theorem(_) => 4,
            PipelineError::Output(_) => 1,
        }
    }

    fn fit(spec: impl std::fmt::Display, err: impl std::fmt::Display) -> Self {
        PipelineError::Fit { spec: spec.to_string(), message: err.to_string() }
    }
}

impl From<DatasetError> for PipelineError {
    fn from(e: DatasetError) -> Self {
        PipelineError::Input(e.to_string())
    }
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> PipelineError {
    PipelineError::Output(format!("{}: {e}", path.display()))
}

pub const DEFAULT_DIVERGENCE_THRESHOLD: f64 = 1.25;
pub const DEFAULT_STEP_DAYS: u32 = 7;

/// Inputs and switches of one pipeline invocation.
#[derive(Debug, Clone)]
pub struct RunManifest {
    pub runs_path: PathBuf,
    /// `None` uses the bundled frontier-model table.
    pub models_path: Option<PathBuf>,
    /// Externally published horizons replace the refit ones when set.
    pub published_horizons: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub seed: u64,
    pub specs: Vec<Specification>,
    pub sota_only: bool,
    pub plots: bool,
    pub forecast_start: NaiveDate,
    pub forecast_end: NaiveDate,
    pub step_days: u32,
    pub divergence_threshold: f64,
}

impl RunManifest {
    pub fn new(runs_path: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        RunManifest {
            runs_path: runs_path.into(),
            models_path: None,
            published_horizons: None,
            out_dir: out_dir.into(),
            seed: 0,
            specs: Specification::ALL.to_vec(),
            sota_only: true,
            plots: true,
            forecast_start: NaiveDate::from_ymd_opt(2019, 1, 1).expect("valid date"),
            forecast_end: NaiveDate::from_ymd_opt(2029, 1, 1).expect("valid date"),
            step_days: DEFAULT_STEP_DAYS,
            divergence_threshold: DEFAULT_DIVERGENCE_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct InputDigest {
    pub role: String,
    pub file: String,
    pub sha256: String,
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

fn digest(role: &str, file: &str, bytes: &[u8]) -> InputDigest {
    InputDigest { role: role.into(), file: file.into(), sha256: sha256_hex(bytes) }
}

fn file_name(path: &Path) -> String {
    path.file_name().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
}

fn read_input(path: &Path) -> Result<Vec<u8>, PipelineError> {
    fs::read(path).map_err(|e| PipelineError::Input(format!("cannot read {}: {e}", path.display())))
}

/// Validated inputs ready for fitting.
#[derive(Debug, Clone)]
pub struct Inputs {
    pub runs: RunTable,
    pub models: ModelTable,
    pub digests: Vec<InputDigest>,
}

/// True when the first record uses the public eval-analysis field names.
fn looks_like_metr(bytes: &[u8]) -> bool {
    let head = bytes.split(|&b| b == b'\n').next().unwrap_or_default();
    let head = String::from_utf8_lossy(head);
    head.contains("score_binarized") && head.contains("alias")
}

pub fn load_runs(path: &Path) -> Result<(RunTable, InputDigest), PipelineError> {
    let bytes = read_input(path)?;
    let runs = if looks_like_metr(&bytes) {
        parse_metr_runs(bytes.as_slice())?
    } else {
        parse_runs(bytes.as_slice(), InputFormat::from_path(path))?
    };
    if runs.is_empty() {
        let detail = runs.rejects.first().map(|r| format!(" (first rejected row {}: {})", r.row, r.error)).unwrap_or_default();
        return Err(PipelineError::Input(format!("no runs in {}{detail}", path.display())));
    }
    Ok((runs, digest("runs", &file_name(path), &bytes)))
}

pub fn load_models(path: Option<&Path>) -> Result<(ModelTable, InputDigest), PipelineError> {
    match path {
        None => Ok((ModelTable::reference_sota(), digest("models", "<bundled>", REFERENCE_SOTA_MODELS_CSV.as_bytes()))),
        Some(p) => {
            let bytes = read_input(p)?;
            let models = parse_models(bytes.as_slice(), InputFormat::from_path(p))?;
            if models.is_empty() {
                return Err(PipelineError::Input(format!("no models in {}", p.display())));
            }
            Ok((models, digest("models", &file_name(p), &bytes)))
        }
    }
}

/// Loads runs and models, optionally keeps SOTA models only, and restricts
/// runs to the retained models.
pub fn load_inputs(manifest: &RunManifest) -> Result<Inputs, PipelineError> {
    let (runs, runs_digest) = load_runs(&manifest.runs_path)?;
    let (models, models_digest) = load_models(manifest.models_path.as_deref())?;
    Ok(select(runs, models, manifest.sota_only, vec![runs_digest, models_digest]))
}

fn select(runs: RunTable, models: ModelTable, sota_only: bool, digests: Vec<InputDigest>) -> Inputs {
    let models = if sota_only { filter_sota(&models) } else { models };
    let records = runs.records.into_iter().filter(|r| models.get(&r.model_id).is_some()).collect();
    let mut kept = RunTable::from_records(records);
    kept.rejects = runs.rejects;
    kept.input_rows = runs.input_rows;
    Inputs { runs: kept, models, digests }
}

#[derive(Debug, Clone, Serialize)]
pub struct IngestReport {
    pub tool_version: &'static str,
    pub inputs: Vec<InputDigest>,
    pub input_rows: usize,
    pub accepted_runs: usize,
    pub retained_runs: usize,
    pub models: usize,
    pub distinct_tasks: usize,
    pub rejects: Vec<RejectEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RejectEntry {
    pub row: usize,
    pub error: String,
}

/// Writes canonical `runs.csv`, `models.csv` and `ingest_report.json`.
pub fn ingest(manifest: &RunManifest) -> Result<IngestReport, PipelineError> {
    let (runs, runs_digest) = load_runs(&manifest.runs_path)?;
    let accepted = runs.len();
    let (models, models_digest) = load_models(manifest.models_path.as_deref())?;
    let inputs = select(runs, models, manifest.sota_only, vec![runs_digest, models_digest]);
    let out = prepare_out_dir(&manifest.out_dir)?;
    write_with(&out.join("runs.csv"), |w| inputs.runs.write_csv(w))?;
    write_with(&out.join("models.csv"), |w| inputs.models.write_csv(w))?;
    let report = IngestReport {
        tool_version: TOOL_VERSION,
        inputs: inputs.digests.clone(),
        input_rows: inputs.runs.input_rows,
        accepted_runs: accepted,
        retained_runs: inputs.runs.len(),
        models: inputs.models.len(),
        distinct_tasks: inputs.runs.distinct_tasks(),
        rejects: inputs.runs.rejects.iter().map(|r| RejectEntry { row: r.row, error: r.error.to_string() }).collect(),
    };
    write_json(&out.join("ingest_report.json"), &report)?;
    Ok(report)
}

fn prepare_out_dir(dir: &Path) -> Result<PathBuf, PipelineError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    Ok(dir.to_path_buf())
}

fn write_with<F>(path: &Path, f: F) -> Result<(), PipelineError>
where
    F: FnOnce(&mut Vec<u8>) -> Result<(), DatasetError>,
{
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| io_err(path, e))?;
    fs::write(path, buf).map_err(|e| io_err(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| io_err(path, e))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_err(path, e))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum HorizonSource {
    Refit,
    Published,
}

/// Per-model horizons, either refit from runs or read from a published
/// table. Models without runs are skipped; any other failure is fatal.
pub fn horizons(
    inputs: &Inputs,
    published: Option<&Path>,
    seed: u64,
) -> Result<(Vec<HorizonEstimate>, HorizonSource, Option<InputDigest>), PipelineError> {
    if let Some(path) = published {
        let bytes = read_input(path)?;
        let all = read_horizons_csv(bytes.as_slice())?;
        let kept: Vec<HorizonEstimate> =
            inputs.models.iter().filter_map(|m| all.iter().find(|h| h.model_id == m.model_id).cloned()).collect();
        if kept.is_empty() {
            return Err(PipelineError::Input(format!("{} has no horizons for the selected models", path.display())));
        }
        return Ok((kept, HorizonSource::Published, Some(digest("published_horizons", &file_name(path), &bytes))));
    }
    let config = FitConfig::horizon_default().with_seed(seed);
    let mut out = Vec::new();
    for m in fit_all_horizons(&inputs.runs, &inputs.models, &config) {
        match m.result {
            Ok(h) => out.push(h),
            Err(HorizonError::EmptySlice(_)) => {}
            Err(e) => return Err(PipelineError::fit("horizons", e)),
        }
    }
    if out.is_empty() {
        return Err(PipelineError::Input("no runs for any selected model".into()));
    }
    Ok((out, HorizonSource::Refit, None))
}

/// `(encoded date, horizon)` pairs for the curve fits, in model order.
pub fn horizon_points(horizons: &[HorizonEstimate], models: &ModelTable, scale: &TimeScale) -> Vec<(f64, f64)> {
    horizons.iter().filter_map(|h| models.get(&h.model_id).map(|m| (scale.encode(m.release_date), h.h_minutes))).collect()
}

/// Fits one specification. Curve fits use the horizons; link fits use the
/// runs jointly.
pub fn fit_specification(
    spec: Specification,
    inputs: &Inputs,
    horizons: &[HorizonEstimate],
    seed: u64,
    scale: &TimeScale,
) -> Result<GrowthFit, FitError> {
    let points = horizon_points(horizons, &inputs.models, scale);
    let mut fit = match spec.link() {
        None if spec == Specification::MetrExp => ols_fit(&points, seed)?,
        None => sigmoid_curve_fit(&points, &FitConfig::growth_default().with_seed(seed))?,
        Some(link) => {
            let models_with_runs = ModelTable {
                records: inputs.models.iter().filter(|m| inputs.runs.for_model(&m.model_id).next().is_some()).cloned().collect(),
            };
            map_fit(link, &inputs.runs, &models_with_runs, &PriorSpec::default(), &FitConfig::growth_default().with_seed(seed), scale)?
        }
    };
    fit.mse = Some(crate::fitting::mse_against_horizons(&fit, horizons, &inputs.models, scale)?);
    Ok(fit)
}

#[derive(Debug, Clone, Serialize)]
pub struct FitsDocument {
    pub tool_version: &'static str,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub fits: Vec<FitEntry>,
}

#[derive(Debug, Clone, Serialize)]
pub struct FitEntry {
    pub specification: Specification,
    pub name: &'static str,
    pub link: Option<&'static str>,
    #[serde(flatten)]
    pub fit: GrowthFit,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DivergenceReport {
    pub between: [Specification; 2],
    pub threshold: f64,
    pub first_exceedance: Option<NaiveDate>,
    pub sustained_from: Option<NaiveDate>,
}

/// A fitted quantity compared against an externally reported value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReferenceCheck {
    pub quantity: String,
    pub expected: NaiveDate,
    pub tolerance_days: i64,
    pub actual: Option<NaiveDate>,
    pub within_tolerance: bool,
}

impl ReferenceCheck {
    fn new(quantity: &str, expected: NaiveDate, tolerance_days: i64, actual: Option<NaiveDate>) -> Self {
        let within_tolerance = actual.map(|a| (a - expected).num_days().abs() <= tolerance_days).unwrap_or(false);
        ReferenceCheck { quantity: quantity.into(), expected, tolerance_days, actual, within_tolerance }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct Report {
    pub tool_version: &'static str,
    pub seed: u64,
    pub inputs: Vec<InputDigest>,
    pub horizon_source: HorizonSource,
    pub n_models: usize,
    pub n_runs: usize,
    pub doubling_time_months: Option<f64>,
    /// Ascending by MSE.
    pub comparison: Vec<ReportRow>,
    pub divergence: Option<DivergenceReport>,
    pub reference_checks: Vec<ReferenceCheck>,
}

fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).expect("valid date")
}

/// Externally reported dates that fitted quantities are compared against,
/// with their tolerances in days.
pub const REFERENCE_BASE_INFLECTION: (i32, u32, u32, i64) = (2024, 11, 21, 120);
pub const REFERENCE_REASONING_INFLECTION: (i32, u32, u32, i64) = (2026, 6, 6, 120);
pub const REFERENCE_SINGLE_INFLECTION: (i32, u32, u32, i64) = (2025, 6, 6, 90);
pub const REFERENCE_DIVERGENCE: (i32, u32, u32, i64) = (2026, 7, 3, 183);

fn reference_checks(rows: &[ReportRow], divergence: Option<&DivergenceReport>) -> Vec<ReferenceCheck> {
    let find = |spec: Specification, component: Component| {
        rows.iter().filter(|r| r.specification == spec).flat_map(|r| &r.inflections).find(|i| i.component == component).map(|i| i.date)
    };
    let mut out = Vec::new();
    let mut check = |name: &str, r: (i32, u32, u32, i64), actual: Option<NaiveDate>| {
        out.push(ReferenceCheck::new(name, date(r.0, r.1, r.2), r.3, actual));
    };
    if rows.iter().any(|r| r.specification == Specification::SigmoidCurve) {
        check("sigmoid-curve inflection", REFERENCE_SINGLE_INFLECTION, find(Specification::SigmoidCurve, Component::SingleCurve));
    }
    if rows.iter().any(|r| r.specification == Specification::SigmoidLink) {
        check("sigmoid-link base inflection", REFERENCE_BASE_INFLECTION, find(Specification::SigmoidLink, Component::Base));
        check("sigmoid-link reasoning inflection", REFERENCE_REASONING_INFLECTION, find(Specification::SigmoidLink, Component::Reasoning));
    }
    if let Some(d) = divergence {
        check("metr-exp vs sigmoid-link divergence", REFERENCE_DIVERGENCE, d.first_exceedance);
    }
    out
}

/// Everything a pipeline run produced, in memory.
#[derive(Debug, Clone)]
pub struct PipelineOutput {
    pub horizons: Vec<HorizonEstimate>,
    pub fits: Vec<GrowthFit>,
    pub series: Vec<ForecastSeries>,
    pub report: Report,
    pub written: Vec<PathBuf>,
}

fn forecast_err(e: ForecastError) -> PipelineError {
    match e {
        ForecastError::Fit(FitError::MissingModel(m)) => PipelineError::Input(format!("horizon for unknown model `{m}`")),
        other => PipelineError::fit("forecast", other),
    }
}

/// Runs every stage and writes `horizons.csv`, `fits.json`,
/// `forecast.csv`, `report.json` and, unless disabled, SVG charts.
pub fn run_pipeline(manifest: &RunManifest) -> Result<PipelineOutput, PipelineError> {
    if manifest.specs.is_empty() {
        return Err(PipelineError::Input("no specifications selected".into()));
    }
    let scale = TimeScale::default();
    let mut inputs = load_inputs(manifest)?;
    let (horizons, source, published_digest) = horizons(&inputs, manifest.published_horizons.as_deref(), manifest.seed)?;
    inputs.digests.extend(published_digest);

    let mut fits = Vec::with_capacity(manifest.specs.len());
    for &spec in &manifest.specs {
        let fit = fit_specification(spec, &inputs, &horizons, manifest.seed, &scale).map_err(|e| PipelineError::fit(spec, e))?;
        if !fit.converged {
            return Err(PipelineError::fit(spec, "no restart reached the gradient tolerance"));
        }
        fits.push(fit);
    }

    let latest = inputs.models.iter().map(|m| m.release_date).max().ok_or_else(|| PipelineError::Input("no models".into()))?;
    let rows = crate::forecast::comparison_report(&fits, &horizons, &inputs.models, &scale, latest).map_err(forecast_err)?;

    let (start, end, step) = (manifest.forecast_start, manifest.forecast_end, manifest.step_days);
    let mut series = Vec::new();
    for fit in &fits {
        series.push(project(fit, start, end, step, true, &scale).map_err(forecast_err)?);
    }
    for fit in fits.iter().filter(|f| f.specification == Specification::SigmoidLink) {
        let (base, reasoning) = project_components(fit, start, end, step, latest, &scale).map_err(forecast_err)?;
        series.push(base);
        series.push(reasoning);
    }

    let by_id = |spec: Specification| series.iter().find(|s| s.label == spec.id());
    let divergence = match (by_id(Specification::MetrExp), by_id(Specification::SigmoidLink)) {
        (Some(a), Some(b)) => Some(DivergenceReport {
            between: [Specification::MetrExp, Specification::SigmoidLink],
            threshold: manifest.divergence_threshold,
            first_exceedance: divergence_date(a, b, manifest.divergence_threshold).map_err(forecast_err)?,
            sustained_from: sustained_divergence_date(a, b, manifest.divergence_threshold).map_err(forecast_err)?,
        }),
        _ => None,
    };
    let doubling_time_months = fits.iter().find_map(|f| match &f.curve {
        FittedCurve::ExpTrend(p) => doubling_time(p).ok(),
        _ => None,
    });

    let report = Report {
        tool_version: TOOL_VERSION,
        seed: manifest.seed,
        inputs: inputs.digests.clone(),
        horizon_source: source,
        n_models: horizons.len(),
        n_runs: inputs.runs.len(),
        doubling_time_months,
        reference_checks: reference_checks(&rows, divergence.as_ref()),
        comparison: rows,
        divergence,
    };

    let out = prepare_out_dir(&manifest.out_dir)?;
    let mut written = Vec::new();
    let path = out.join("horizons.csv");
    write_with(&path, |w| write_horizons_csv(&horizons, w))?;
    written.push(path);
    let path = out.join("fits.json");
    write_json(&path, &fits_document(manifest.seed, &inputs.digests, &fits))?;
    written.push(path);
    let path = out.join("forecast.csv");
    write_with(&path, |w| write_forecast_csv(&series, w))?;
    written.push(path);
    let path = out.join("report.json");
    write_json(&path, &report)?;
    written.push(path);
    if manifest.plots {
        for (name, svg) in charts(&horizons, &inputs.models, &series, &report, &scale) {
            let path = out.join(name);
            fs::write(&path, svg).map_err(|e| io_err(&path, e))?;
            written.push(path);
        }
    }
    Ok(PipelineOutput { horizons, fits, series, report, written })
}

pub fn fits_document(seed: u64, inputs: &[InputDigest], fits: &[GrowthFit]) -> FitsDocument {
    FitsDocument {
        tool_version: TOOL_VERSION,
        seed,
        inputs: inputs.to_vec(),
        fits: fits
            .iter()
            .map(|f| FitEntry {
                specification: f.specification,
                name: f.specification.display_name(),
                link: f.link().map(|l| l.as_str()),
                fit: f.clone(),
            })
            .collect(),
    }
}

fn charts(
    horizons: &[HorizonEstimate],
    models: &ModelTable,
    series: &[ForecastSeries],
    report: &Report,
    scale: &TimeScale,
) -> Vec<(String, String)> {
    let observed: Vec<ObservedPoint> = horizons
        .iter()
        .filter_map(|h| {
            models.get(&h.model_id).map(|m| ObservedPoint {
                label: m.model_id.clone(),
                date: m.release_date,
                h_minutes: h.h_minutes,
                k_thinking: m.k_thinking,
            })
        })
        .collect();
    let markers: Vec<Marker> = report
        .comparison
        .iter()
        .flat_map(|r| &r.inflections)
        .map(|i| Marker { label: format!("{} {:?}", i.specification.id(), i.component).to_lowercase(), date: i.date })
        .collect();
    let mut out = Vec::new();
    for (log, suffix) in [(false, "linear"), (true, "log")] {
        let mut chart = Chart::new(format!("50% horizon vs release date ({suffix})"), log);
        chart.observed = observed.clone();
        chart.series = series.to_vec();
        chart.markers = markers.clone();
        out.push((format!("horizons_{suffix}.svg"), chart.to_svg(scale)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_are_stable() {
        assert_eq!(PipelineError::Input("x".into()).exit_code(), 2);
        assert_eq!(PipelineError::fit("sigmoid-link", "x").exit_code(), 3);
        assert_eq!(PipelineError::Theorem("x".into()).exit_code(), 4);
        assert!(PipelineError::fit("sigmoid-link", "boom").to_string().contains("sigmoid-link"));
    }

    #[test]
    fn sha256_of_empty_input() {
        assert_eq!(sha256_hex(b""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    }

    #[test]
    fn metr_layout_detection() {
        assert!(looks_like_metr(br#"{"alias":"a","score_binarized":1}"#));
        assert!(!looks_like_metr(b"model_id,task_id,task_family,human_minutes,success\n"));
    }

    #[test]
    fn reference_check_tolerance() {
        let c = ReferenceCheck::new("q", date(2026, 7, 3), 183, Some(date(2026, 12, 1)));
        assert!(c.within_tolerance);
        assert!(!ReferenceCheck::new("q", date(2026, 7, 3), 183, None).within_tolerance);
    }
}
