//! Horizon estimation and growth-curve analysis for AI capability trends.
//!
//! The crate covers the whole analysis chain:
//!
//! - [`dataset`]: canonical run/model tables and the date encoding.
//! - [`horizon`]: per-model 50% horizon regression on Bernoulli task outcomes.
//! - [`growth`]: curve families of horizon vs. release date (exponential trend,
//!   single sigmoid, multiplicative base x reasoning model with sigmoid,
//!   exponential or B-spline links).
//! - [`fitting`]: OLS, least-squares and MAP estimators for those curves.
//! - [`forecast`]: inflection dates, projections, divergence and comparison tables.
//! - [`theory`]: numerical certification of the staggered-sigmoid product bounds.
//! - [`pipeline`]: the end-to-end driver used by the command-line tool.

pub mod dataset;
pub mod fitting;
pub mod forecast;
pub mod growth;
pub mod horizon;
pub mod optim;
pub mod pipeline;
pub mod plot;
pub mod theory;

pub(crate) mod numeric;

pub use dataset::{ModelRecord, ModelTable, RunRecord, RunTable, TaskFamily, TimeScale};
pub use fitting::{FitConfig, FittedCurve, GrowthFit, PriorSpec, Specification};
pub use forecast::{ForecastSeries, InflectionReport};
pub use growth::{ExpTrendParams, GrowthParams, LinkKind, SingleSigmoidParams, SplineSpec};
pub use horizon::HorizonEstimate;
pub use theory::{BoundCertificate, SigmoidProductSpec};

/// Version string embedded in emitted artifacts.
pub const TOOL_VERSION: &str = concat!(env!("CARGO_PKG_NAME"), " ", env!("CARGO_PKG_VERSION"));
