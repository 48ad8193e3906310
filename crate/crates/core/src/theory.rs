//! Products of evenly staggered sigmoids, `f(x) = prod_{i=1..k} sigmoid(x - i*alpha)`,
//! and numerical certification of their three-regime bounds:
//!
//! - `x <= 0`: `e^{kx} e^{-alpha k(k+1)/2} / 5 <= f <= e^{kx} e^{-alpha k(k+1)/2}`
//! - `x in [j alpha, (j+1) alpha]`, `j < k`:
//!   `e^{-alpha (k-j+1)(k-j)/2} / 20 <= f <= e^{-alpha (k-j-1)(k-j)/2}`
//! - `x >= k alpha`: `1/4 <= f <= 1`
//!
//! Comparisons are done on `ln f`, so the tiny values of the early regime are
//! checked with the same relative precision as the plateau.

use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::{log_sigmoid, sigmoid};

/// Slack applied to every bound comparison (on the log scale).
pub const BOUND_SLACK: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TheoryError {
    #[error("alpha must be at least 2 (got {0})")]
    HypothesisViolation(f64),
    #[error("k must be at least 1")]
    EmptyProduct,
    #[error("grid resolution must be positive (got {0})")]
    InvalidResolution(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SigmoidProductSpec {
    k: u32,
    alpha: f64,
}

impl SigmoidProductSpec {
    pub fn new(k: u32, alpha: f64) -> Result<Self, TheoryError> {
        if k == 0 {
            return Err(TheoryError::EmptyProduct);
        }
        if !(alpha >= 2.0) || !alpha.is_finite() {
            return Err(TheoryError::HypothesisViolation(alpha));
        }
        Ok(SigmoidProductSpec { k, alpha })
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// Start of the plateau regime, `k * alpha`.
    pub fn plateau_onset(&self) -> f64 {
        self.k as f64 * self.alpha
    }
}

/// `ln f(x)`, summed term by term.
pub fn log_sigmoid_product(x: f64, spec: &SigmoidProductSpec) -> f64 {
    (1..=spec.k).map(|i| log_sigmoid(x - i as f64 * spec.alpha)).sum()
}

pub fn sigmoid_product(x: f64, spec: &SigmoidProductSpec) -> f64 {
    log_sigmoid_product(x, spec).exp()
}

/// Exact derivative of `ln f`: `sum_i (1 - sigmoid(x - i alpha))`.
pub fn log_slope(x: f64, spec: &SigmoidProductSpec) -> f64 {
    (1..=spec.k).map(|i| 1.0 - sigmoid(x - i as f64 * spec.alpha)).sum()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "regime", content = "j", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Regime {
    Pre,
    Mid(u32),
    Post,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Regime::Pre => f.write_str("PRE"),
            Regime::Mid(j) => write!(f, "MID({j})"),
            Regime::Post => f.write_str("POST"),
        }
    }
}

/// Bounds of one regime, stored as logarithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeBound {
    pub regime: Regime,
    pub log_lower: f64,
    pub log_upper: f64,
}

impl RegimeBound {
    pub fn lower(&self) -> f64 {
        self.log_lower.exp()
    }

    pub fn upper(&self) -> f64 {
        self.log_upper.exp()
    }
}

/// Every regime whose (closed) domain contains `x`, with its bounds.
pub fn theorem_bounds(x: f64, spec: &SigmoidProductSpec) -> Vec<RegimeBound> {
    let k = spec.k as f64;
    let a = spec.alpha;
    let mut out = Vec::new();
    if x <= 0.0 {
        let log_upper = k * x - 0.5 * a * k * (k + 1.0);
        out.push(RegimeBound { regime: Regime::Pre, log_lower: log_upper - 5f64.ln(), log_upper });
    }
    for j in 0..spec.k {
        let jf = j as f64;
        if x >= jf * a && x <= (jf + 1.0) * a {
            let log_lower = -0.5 * a * (k - jf + 1.0) * (k - jf) - 20f64.ln();
            let log_upper = -0.5 * a * (k - jf - 1.0) * (k - jf);
            out.push(RegimeBound { regime: Regime::Mid(j), log_lower, log_upper });
        }
    }
    if x >= spec.plateau_onset() {
        out.push(RegimeBound { regime: Regime::Post, log_lower: -(4f64.ln()), log_upper: 0.0 });
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub x: f64,
    pub f: f64,
    pub lower: f64,
    pub upper: f64,
    pub regime: Regime,
}

/// Interval of `x` values to certify.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum XRange {
    Fixed {
        lo: f64,
        hi: f64,
    },
    /// `[-before, k*alpha + after]`, adapted to each spec.
    AroundInflections {
        before: f64,
        after: f64,
    },
}

impl Default for XRange {
    fn default() -> Self {
        XRange::AroundInflections { before: 10.0, after: 10.0 }
    }
}

impl XRange {
    pub fn resolve(&self, spec: &SigmoidProductSpec) -> (f64, f64) {
        match *self {
            XRange::Fixed { lo, hi } => (lo, hi),
            XRange::AroundInflections { before, after } => (-before, spec.plateau_onset() + after),
        }
    }
}

/// Uniform grid `lo, lo + step, ...` up to and including `hi` (within rounding).
pub fn uniform_grid(lo: f64, hi: f64, step: f64) -> Vec<f64> {
    if hi < lo {
        return Vec::new();
    }
    let n = ((hi - lo) / step + 1e-9).floor() as usize;
    (0..=n).map(|i| lo + i as f64 * step).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundCertificate {
    pub spec: SigmoidProductSpec,
    pub x_grid: Vec<f64>,
    /// Regimes that apply at each grid point.
    pub regime_labels: Vec<Vec<Regime>>,
    pub violations: Vec<Violation>,
    /// Smallest `min(ln f - ln lower, ln upper - ln f)` over the grid.
    pub worst_margin: f64,
    pub worst_x: f64,
}

impl BoundCertificate {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

pub fn certify_spec(spec: &SigmoidProductSpec, resolution: f64, range: XRange) -> Result<BoundCertificate, TheoryError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(TheoryError::InvalidResolution(resolution));
    }
    let (lo, hi) = range.resolve(spec);
    let x_grid = uniform_grid(lo, hi, resolution);
    let mut regime_labels = Vec::with_capacity(x_grid.len());
    let mut violations = Vec::new();
    let mut worst_margin = f64::INFINITY;
    let mut worst_x = f64::NAN;
    for &x in &x_grid {
        let log_f = log_sigmoid_product(x, spec);
        let bounds = theorem_bounds(x, spec);
        for b in &bounds {
            let margin = (log_f - b.log_lower).min(b.log_upper - log_f);
            if margin < worst_margin {
                worst_margin = margin;
                worst_x = x;
            }
            if log_f < b.log_lower - BOUND_SLACK || log_f > b.log_upper + BOUND_SLACK {
                violations.push(Violation { x, f: log_f.exp(), lower: b.lower(), upper: b.upper(), regime: b.regime });
            }
        }
        regime_labels.push(bounds.iter().map(|b| b.regime).collect());
    }
    Ok(BoundCertificate { spec: *spec, x_grid, regime_labels, violations, worst_margin, worst_x })
}

/// Certifies every spec on its own grid (in parallel, output in input order).
pub fn certify_bounds(specs: &[SigmoidProductSpec], resolution: f64, range: XRange) -> Result<Vec<BoundCertificate>, TheoryError> {
    if !(resolution > 0.0) || !resolution.is_finite() {
        return Err(TheoryError::InvalidResolution(resolution));
    }
    specs.par_iter().map(|s| certify_spec(s, resolution, range)).collect()
}

/// `k in 1..=6`, `alpha in {2, 2.5, 3, 4}`.
pub fn default_spec_grid() -> Vec<SigmoidProductSpec> {
    let mut out = Vec::new();
    for k in 1..=6 {
        for alpha in [2.0, 2.5, 3.0, 4.0] {
            out.push(SigmoidProductSpec::new(k, alpha).expect("valid grid"));
        }
    }
    out
}

/// Least-squares slope of `ln f` over the grid points of `[lo, hi]`.
pub fn fitted_log_slope(spec: &SigmoidProductSpec, lo: f64, hi: f64, resolution: f64) -> f64 {
    let xs = uniform_grid(lo, hi, resolution);
    let ys: Vec<f64> = xs.iter().map(|&x| log_sigmoid_product(x, spec)).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxy: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    sxy / sxx
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeSummary {
    pub inflections: Vec<f64>,
    pub plateau_onset: f64,
}

impl fmt::Display for RegimeSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let pts: Vec<String> = self.inflections.iter().map(|x| format!("{x}")).collect();
        write!(
            f,
            "component inflections at {{{}}}; growth is exponential before 0, decelerating between, plateau for x >= {}",
            pts.join(", "),
            self.plateau_onset
        )
    }
}

pub fn growth_regime_summary(spec: &SigmoidProductSpec) -> RegimeSummary {
    RegimeSummary { inflections: (1..=spec.k).map(|i| i as f64 * spec.alpha).collect(), plateau_onset: spec.plateau_onset() }
}

/// Serializable summary of a certification run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CertificationReport {
    pub tool_version: String,
    pub resolution: f64,
    pub x_range: XRange,
    pub slack: f64,
    pub passed: bool,
    pub specs: Vec<SpecReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpecReport {
    pub k: u32,
    pub alpha: f64,
    pub points: usize,
    pub passed: bool,
    pub violations: usize,
    pub worst_margin: f64,
    pub worst_x: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub worst_offender: Option<Violation>,
}

impl CertificationReport {
    pub fn new(certs: &[BoundCertificate], resolution: f64, x_range: XRange) -> Self {
        let specs: Vec<SpecReport> = certs
            .iter()
            .map(|c| SpecReport {
                k: c.spec.k,
                alpha: c.spec.alpha,
                points: c.x_grid.len(),
                passed: c.passed(),
                violations: c.violations.len(),
                worst_margin: c.worst_margin,
                worst_x: c.worst_x,
                worst_offender: c.violations.iter().copied().max_by(|a, b| {
                    let excess = |v: &Violation| (v.lower.ln() - v.f.ln()).max(v.f.ln() - v.upper.ln());
                    excess(a).total_cmp(&excess(b))
                }),
            })
            .collect();
        CertificationReport {
            tool_version: crate::TOOL_VERSION.to_string(),
            resolution,
            x_range,
            slack: BOUND_SLACK,
            passed: specs.iter().all(|s| s.passed),
            specs,
        }
    }
}
