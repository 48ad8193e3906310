//! Dated projections, inflection dates, divergence between projections and
//! the goodness-of-fit comparison table.

use std::io::Write;

use chrono::{Duration, NaiveDate};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DatasetError, ModelTable, TimeScale};
use crate::fitting::{mse_against_horizons, FitError, FittedCurve, GrowthFit, Specification};
use crate::growth::{GrowthError, LinkKind};
use crate::horizon::HorizonEstimate;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ForecastError {
    #[error("slope must be positive (got {0})")]
    NonPositiveSlope(f64),
    #[error("series do not share a date grid")]
    GridMismatch,
    #[error("start {start} must precede end {end}")]
    EmptyRange { start: NaiveDate, end: NaiveDate },
    #[error("step must be at least one day")]
    InvalidStep,
    #[error("projection at {date} is not a positive finite horizon ({value})")]
    InvalidHorizon { date: NaiveDate, value: f64 },
    #[error("the fit has no {0} component")]
    MissingComponent(&'static str),
    #[error(transparent)]
    Growth(#[from] GrowthError),
    #[error(transparent)]
    Fit(#[from] FitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastSeries {
    pub label: String,
    pub fit_kind: String,
    pub points: Vec<(NaiveDate, f64)>,
}

impl ForecastSeries {
    pub fn dates(&self) -> impl Iterator<Item = NaiveDate> + '_ {
        self.points.iter().map(|p| p.0)
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.points.iter().map(|p| p.1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Component {
    Base,
    Reasoning,
    SingleCurve,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InflectionReport {
    pub specification: Specification,
    pub component: Component,
    pub date: NaiveDate,
    /// Encoded position of the inflection.
    pub x: f64,
    pub reference_date: NaiveDate,
    pub in_past: bool,
}

/// Date where `sigmoid(slope * d + intercept)` crosses one half.
pub fn inflection_date(slope: f64, intercept: f64, scale: &TimeScale) -> Result<NaiveDate, ForecastError> {
    if !(slope > 0.0) {
        return Err(ForecastError::NonPositiveSlope(slope));
    }
    Ok(scale.decode(-intercept / slope))
}

/// Every sigmoid inflection carried by a fit.
pub fn fit_inflections(fit: &GrowthFit, scale: &TimeScale, reference_date: NaiveDate) -> Result<Vec<InflectionReport>, ForecastError> {
    let mut out = Vec::new();
    let mut push = |component, slope: f64, intercept: f64| -> Result<(), ForecastError> {
        let date = inflection_date(slope, intercept, scale)?;
        out.push(InflectionReport {
            specification: fit.specification,
            component,
            date,
            x: -intercept / slope,
            reference_date,
            in_past: date < reference_date,
        });
        Ok(())
    };
    match &fit.curve {
        FittedCurve::SingleSigmoid(p) => push(Component::SingleCurve, p.delta1, p.delta2)?,
        FittedCurve::Multiplicative(p) if p.link == LinkKind::Sigmoid => {
            push(Component::Base, p.base[0], p.base[1])?;
            push(Component::Reasoning, p.reasoning[0], p.reasoning[1])?;
        }
        _ => {}
    }
    Ok(out)
}

/// `start, start + step, ...` up to and including `end`.
pub fn date_grid(start: NaiveDate, end: NaiveDate, step_days: u32) -> Result<Vec<NaiveDate>, ForecastError> {
    if start >= end {
        return Err(ForecastError::EmptyRange { start, end });
    }
    if step_days == 0 {
        return Err(ForecastError::InvalidStep);
    }
    let mut out = Vec::new();
    let mut d = start;
    while d <= end {
        out.push(d);
        d += Duration::days(step_days as i64);
    }
    Ok(out)
}

fn series_from<F>(label: String, fit_kind: String, grid: &[NaiveDate], mut eval: F) -> Result<ForecastSeries, ForecastError>
where
    F: FnMut(NaiveDate) -> Result<f64, ForecastError>,
{
    let mut points = Vec::with_capacity(grid.len());
    for &date in grid {
        let value = eval(date)?;
        if !(value > 0.0) || !value.is_finite() {
            return Err(ForecastError::InvalidHorizon { date, value });
        }
        points.push((date, value));
    }
    Ok(ForecastSeries { label, fit_kind, points })
}

fn fit_kind_label(fit: &GrowthFit) -> String {
    serde_json::to_value(fit.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default()
}

/// Evaluates a fit over a date grid. `k_thinking` selects the reasoning
/// regime of multiplicative fits and is ignored by single-curve fits.
pub fn project(
    fit: &GrowthFit,
    start: NaiveDate,
    end: NaiveDate,
    step_days: u32,
    k_thinking: bool,
    scale: &TimeScale,
) -> Result<ForecastSeries, ForecastError> {
    let grid = date_grid(start, end, step_days)?;
    series_from(fit.specification.id().to_string(), fit_kind_label(fit), &grid, |date| Ok(fit.predict(scale.encode(date), k_thinking)?))
}

/// Base and reasoning projections of a multiplicative fit: the base curve
/// `g1 * b(d)`, and the reasoning curve `g1 * b(best) * (1 + g2 * r(d))`
/// with the base held at `best_base_date`.
pub fn project_components(
    fit: &GrowthFit,
    start: NaiveDate,
    end: NaiveDate,
    step_days: u32,
    best_base_date: NaiveDate,
    scale: &TimeScale,
) -> Result<(ForecastSeries, ForecastSeries), ForecastError> {
    let FittedCurve::Multiplicative(p) = &fit.curve else {
        return Err(ForecastError::MissingComponent("base/reasoning"));
    };
    let grid = date_grid(start, end, step_days)?;
    let kind = fit_kind_label(fit);
    let base = series_from(format!("{}:base", fit.specification.id()), kind.clone(), &grid, |date| {
        Ok(p.gamma1 * p.base_component(scale.encode(date))?)
    })?;
    let best_base = p.gamma1 * p.base_component(scale.encode(best_base_date))?;
    let reasoning = series_from(format!("{}:reasoning", fit.specification.id()), kind, &grid, |date| {
        Ok(best_base * (1.0 + p.gamma2 * p.reasoning_component(scale.encode(date))?))
    })?;
    Ok((base, reasoning))
}

fn check_grid(a: &ForecastSeries, b: &ForecastSeries) -> Result<(), ForecastError> {
    if a.points.len() != b.points.len() || a.dates().zip(b.dates()).any(|(x, y)| x != y) {
        return Err(ForecastError::GridMismatch);
    }
    Ok(())
}

fn ratio(a: f64, b: f64) -> f64 {
    (a / b).max(b / a)
}

/// First grid date where the two series differ by more than `threshold`
/// (as a ratio in either direction).
pub fn divergence_date(a: &ForecastSeries, b: &ForecastSeries, ratio_threshold: f64) -> Result<Option<NaiveDate>, ForecastError> {
    check_grid(a, b)?;
    Ok(a.points.iter().zip(&b.points).find(|(p, q)| ratio(p.1, q.1) > ratio_threshold).map(|(p, _)| p.0))
}

/// Start of the final stretch over which the series stay more than
/// `threshold` apart through the end of the grid.
pub fn sustained_divergence_date(a: &ForecastSeries, b: &ForecastSeries, ratio_threshold: f64) -> Result<Option<NaiveDate>, ForecastError> {
    check_grid(a, b)?;
    let mut onset = None;
    for (p, q) in a.points.iter().zip(&b.points) {
        if ratio(p.1, q.1) > ratio_threshold {
            onset.get_or_insert(p.0);
        } else {
            onset = None;
        }
    }
    Ok(onset)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub specification: Specification,
    pub name: String,
    pub mse: f64,
    pub converged: bool,
    pub inflections: Vec<InflectionReport>,
}

/// MSE of each fit against the per-model horizons, ascending.
pub fn comparison_report(
    fits: &[GrowthFit],
    horizons: &[HorizonEstimate],
    models: &ModelTable,
    scale: &TimeScale,
    reference_date: NaiveDate,
) -> Result<Vec<ReportRow>, ForecastError> {
    if fits.is_empty() {
        return Err(ForecastError::Fit(FitError::EmptyInput("fits")));
    }
    let mut rows = Vec::with_capacity(fits.len());
    for fit in fits {
        rows.push(ReportRow {
            specification: fit.specification,
            name: fit.specification.display_name().to_string(),
            mse: mse_against_horizons(fit, horizons, models, scale)?,
            converged: fit.converged,
            inflections: fit_inflections(fit, scale, reference_date)?,
        });
    }
    rows.sort_by(|a, b| a.mse.total_cmp(&b.mse).then(a.specification.cmp(&b.specification)));
    Ok(rows)
}

pub const FORECAST_COLUMNS: [&str; 3] = ["label", "date", "horizon_minutes"];

pub fn write_forecast_csv<W: Write>(series: &[ForecastSeries], writer: W) -> Result<(), DatasetError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(FORECAST_COLUMNS)?;
    for s in series {
        for (date, h) in &s.points {
            w.write_record([s.label.as_str(), &date.format("%Y-%m-%d").to_string(), &format!("{h}")])?;
        }
    }
    w.flush()?;
    Ok(())
}
