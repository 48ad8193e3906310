//! Curve families mapping a release date to a 50% horizon (minutes).
//!
//! Dates are reals in the units of a [`crate::TimeScale`] (years since
//! 2019-01-01 by default). Every evaluator has an analytic parameter gradient
//! next to it; the estimators in [`crate::fitting`] are built on those.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numeric::sigmoid;

/// Largest exponent accepted by the exponential evaluators.
pub const MAX_EXPONENT: f64 = 700.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GrowthError {
    #[error("domain error: {0}")]
    DomainError(String),
    #[error("exponent {0} exceeds the overflow guard")]
    OverflowGuard(f64),
    #[error("invalid knot vector: {0}")]
    InvalidKnots(String),
    #[error("expected {expected} coefficients, got {got}")]
    LengthMismatch { expected: usize, got: usize },
    #[error("coefficient {index} must be positive (got {value})")]
    NonPositiveCoefficient { index: usize, value: f64 },
    #[error("slope must be positive (got {0})")]
    NonPositiveSlope(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Sigmoid,
    Exponential,
    Bspline,
}

impl LinkKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            LinkKind::Sigmoid => "sigmoid",
            LinkKind::Exponential => "exponential",
            LinkKind::Bspline => "bspline",
        }
    }
}

fn check_slope(slope: f64) -> Result<(), GrowthError> {
    if slope > 0.0 && slope.is_finite() {
        Ok(())
    } else {
        Err(GrowthError::DomainError(format!("link slope must be positive, got {slope}")))
    }
}

/// `sigmoid(p[0] * d + p[1])`.
pub fn sigmoid_link(d: f64, p: [f64; 2]) -> Result<f64, GrowthError> {
    check_slope(p[0])?;
    Ok(sigmoid(p[0] * d + p[1]))
}

/// Gradient of [`sigmoid_link`] with respect to `(slope, intercept)`.
pub fn sigmoid_link_grad(d: f64, p: [f64; 2]) -> [f64; 2] {
    let s = sigmoid(p[0] * d + p[1]);
    let ds = s * (1.0 - s);
    [ds * d, ds]
}

/// `exp(p[0] * d + p[1])`.
pub fn exponential_link(d: f64, p: [f64; 2]) -> Result<f64, GrowthError> {
    check_slope(p[0])?;
    guarded_exp(p[0] * d + p[1])
}

pub fn exponential_link_grad(d: f64, p: [f64; 2]) -> [f64; 2] {
    let e = (p[0] * d + p[1]).exp();
    [e * d, e]
}

fn guarded_exp(u: f64) -> Result<f64, GrowthError> {
    if u > MAX_EXPONENT || u.is_nan() {
        Err(GrowthError::OverflowGuard(u))
    } else {
        Ok(u.exp())
    }
}

/// B-spline basis definition: polynomial degree and a clamped knot vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplineSpec {
    pub degree: usize,
    pub n_basis: usize,
    pub knots: Vec<f64>,
}

/// Degree used for the spline link.
pub const SPLINE_DEGREE: usize = 5;
/// Basis size used for the spline link: breakpoints (2) + degree - 1.
pub const SPLINE_BASIS: usize = 2 + SPLINE_DEGREE - 1;

impl SplineSpec {
    pub fn new(degree: usize, knots: Vec<f64>) -> Result<Self, GrowthError> {
        if knots.len() < 2 * (degree + 1) {
            return Err(GrowthError::InvalidKnots(format!(
                "degree {degree} needs at least {} knots, got {}",
                2 * (degree + 1),
                knots.len()
            )));
        }
        if knots.iter().any(|k| !k.is_finite()) {
            return Err(GrowthError::InvalidKnots("non-finite knot".into()));
        }
        if knots.windows(2).any(|w| w[1] < w[0]) {
            return Err(GrowthError::InvalidKnots("knots must be nondecreasing".into()));
        }
        let (lo, hi) = (knots[0], knots[knots.len() - 1]);
        if !(hi > lo) {
            return Err(GrowthError::InvalidKnots("empty knot span".into()));
        }
        let clamped = knots[..=degree].iter().all(|&k| k == lo) && knots[knots.len() - degree - 1..].iter().all(|&k| k == hi);
        if !clamped {
            return Err(GrowthError::InvalidKnots(format!("end knots must have multiplicity {}", degree + 1)));
        }
        let n_basis = knots.len() - degree - 1;
        Ok(SplineSpec { degree, n_basis, knots })
    }

    /// Clamped knots on `[lo, hi]` with interior knots evenly spaced so the
    /// basis has exactly `n_basis` functions.
    pub fn clamped_uniform(lo: f64, hi: f64, degree: usize, n_basis: usize) -> Result<Self, GrowthError> {
        if n_basis < degree + 1 {
            return Err(GrowthError::InvalidKnots(format!("n_basis {n_basis} < degree + 1")));
        }
        let interior = n_basis - degree - 1;
        let mut knots = vec![lo; degree + 1];
        for i in 1..=interior {
            knots.push(lo + (hi - lo) * i as f64 / (interior + 1) as f64);
        }
        knots.extend(std::iter::repeat(hi).take(degree + 1));
        SplineSpec::new(degree, knots)
    }

    /// The spline-link basis for a set of observed release dates: degree 5,
    /// six functions, span widened by 10% of the date range on each side.
    pub fn for_release_dates(dates: &[f64]) -> Result<Self, GrowthError> {
        let lo = dates.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = dates.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !(hi > lo) {
            return Err(GrowthError::InvalidKnots("release dates span an empty range".into()));
        }
        let pad = 0.1 * (hi - lo);
        SplineSpec::clamped_uniform(lo - pad, hi + pad, SPLINE_DEGREE, SPLINE_BASIS)
    }

    pub fn span(&self) -> (f64, f64) {
        (self.knots[0], self.knots[self.knots.len() - 1])
    }
}

/// Cox-de Boor evaluation of all basis functions at `d`. Points outside the
/// knot span are clamped to it.
pub fn bspline_basis(d: f64, spec: &SplineSpec) -> Vec<f64> {
    let t = &spec.knots;
    let p = spec.degree;
    let n = spec.n_basis;
    let (lo, hi) = spec.span();
    let x = d.clamp(lo, hi);

    // Index of the knot interval [t[mu], t[mu+1]) containing x; the right end
    // belongs to the last non-empty interval.
    let mu = if x >= hi {
        (0..t.len() - 1).rev().find(|&i| t[i] < t[i + 1]).unwrap()
    } else {
        (0..t.len() - 1).find(|&i| t[i] <= x && x < t[i + 1]).unwrap()
    };

    // Degree-0 indicators, then raise the degree in place.
    let mut basis = vec![0.0; t.len() - 1];
    basis[mu] = 1.0;
    for k in 1..=p {
        for i in 0..t.len() - 1 - k {
            let left = {
                let den = t[i + k] - t[i];
                if den > 0.0 {
                    (x - t[i]) / den * basis[i]
                } else {
                    0.0
                }
            };
            let right = {
                let den = t[i + k + 1] - t[i + 1];
                if den > 0.0 {
                    (t[i + k + 1] - x) / den * basis[i + 1]
                } else {
                    0.0
                }
            };
            basis[i] = left + right;
        }
    }
    basis.truncate(n);
    basis
}

fn check_coeffs(coeffs: &[f64], spec: &SplineSpec) -> Result<(), GrowthError> {
    if coeffs.len() != spec.n_basis {
        return Err(GrowthError::LengthMismatch { expected: spec.n_basis, got: coeffs.len() });
    }
    if let Some((index, &value)) = coeffs.iter().enumerate().find(|(_, c)| !(**c > 0.0)) {
        return Err(GrowthError::NonPositiveCoefficient { index, value });
    }
    Ok(())
}

/// `sum_i coeffs[i] * B_i(d)`; positive for positive coefficients.
pub fn spline_link(d: f64, coeffs: &[f64], spec: &SplineSpec) -> Result<f64, GrowthError> {
    check_coeffs(coeffs, spec)?;
    Ok(bspline_basis(d, spec).iter().zip(coeffs).map(|(b, c)| b * c).sum())
}

/// Multiplicative base x reasoning model parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GrowthParams {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Base link parameters: `(slope, intercept)` or spline coefficients.
    pub base: Vec<f64>,
    /// Reasoning link parameters, same layout as `base`.
    pub reasoning: Vec<f64>,
    pub link: LinkKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub spline: Option<SplineSpec>,
}

/// Gradient of [`model_horizon`] with respect to every parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct GrowthGradient {
    pub gamma1: f64,
    pub gamma2: f64,
    pub base: Vec<f64>,
    pub reasoning: Vec<f64>,
}

impl GrowthParams {
    pub fn sigmoid(gamma1: f64, gamma2: f64, base: [f64; 2], reasoning: [f64; 2]) -> Self {
        GrowthParams { gamma1, gamma2, base: base.to_vec(), reasoning: reasoning.to_vec(), link: LinkKind::Sigmoid, spline: None }
    }

    pub fn exponential(gamma1: f64, gamma2: f64, base: [f64; 2], reasoning: [f64; 2]) -> Self {
        GrowthParams { gamma1, gamma2, base: base.to_vec(), reasoning: reasoning.to_vec(), link: LinkKind::Exponential, spline: None }
    }

    pub fn bspline(gamma1: f64, gamma2: f64, base: Vec<f64>, reasoning: Vec<f64>, spec: SplineSpec) -> Self {
        GrowthParams { gamma1, gamma2, base, reasoning, link: LinkKind::Bspline, spline: Some(spec) }
    }

    /// Checks positivity and arity. `gamma2 = 0` is accepted (reasoning off).
    pub fn validate(&self) -> Result<(), GrowthError> {
        if !(self.gamma1 > 0.0) {
            return Err(GrowthError::DomainError(format!("gamma1 must be positive, got {}", self.gamma1)));
        }
        if !(self.gamma2 >= 0.0) {
            return Err(GrowthError::DomainError(format!("gamma2 must be non-negative, got {}", self.gamma2)));
        }
        match self.link {
            LinkKind::Sigmoid | LinkKind::Exponential => {
                for v in [&self.base, &self.reasoning] {
                    if v.len() != 2 {
                        return Err(GrowthError::LengthMismatch { expected: 2, got: v.len() });
                    }
                    check_slope(v[0])?;
                }
            }
            LinkKind::Bspline => {
                let spec = self.spline_spec()?;
                check_coeffs(&self.base, spec)?;
                check_coeffs(&self.reasoning, spec)?;
            }
        }
        Ok(())
    }

    fn spline_spec(&self) -> Result<&SplineSpec, GrowthError> {
        self.spline.as_ref().ok_or_else(|| GrowthError::InvalidKnots("spline link without a spline spec".into()))
    }

    fn link_eval(&self, d: f64, p: &[f64]) -> Result<f64, GrowthError> {
        match self.link {
            LinkKind::Sigmoid => sigmoid_link(d, pair(p)?),
            LinkKind::Exponential => exponential_link(d, pair(p)?),
            LinkKind::Bspline => spline_link(d, p, self.spline_spec()?),
        }
    }

    fn link_grad(&self, d: f64, p: &[f64]) -> Vec<f64> {
        match self.link {
            LinkKind::Sigmoid => sigmoid_link_grad(d, [p[0], p[1]]).to_vec(),
            LinkKind::Exponential => exponential_link_grad(d, [p[0], p[1]]).to_vec(),
            LinkKind::Bspline => bspline_basis(d, self.spline.as_ref().expect("validated")),
        }
    }

    /// Base capability `b(d)`.
    pub fn base_component(&self, d: f64) -> Result<f64, GrowthError> {
        self.link_eval(d, &self.base)
    }

    /// Reasoning capability `r(d)`.
    pub fn reasoning_component(&self, d: f64) -> Result<f64, GrowthError> {
        self.link_eval(d, &self.reasoning)
    }

    /// Date where the base sigmoid crosses its midpoint (sigmoid link only).
    pub fn base_inflection(&self) -> Option<f64> {
        (self.link == LinkKind::Sigmoid).then(|| -self.base[1] / self.base[0])
    }

    pub fn reasoning_inflection(&self) -> Option<f64> {
        (self.link == LinkKind::Sigmoid).then(|| -self.reasoning[1] / self.reasoning[0])
    }

    /// Supremum of the horizon over all dates, when bounded.
    pub fn upper_bound(&self, k_thinking: bool) -> Option<f64> {
        let reasoning = if k_thinking { self.gamma2 } else { 0.0 };
        match self.link {
            LinkKind::Sigmoid => Some(self.gamma1 * (1.0 + reasoning)),
            LinkKind::Exponential => None,
            LinkKind::Bspline => {
                let bmax = self.base.iter().copied().fold(0.0, f64::max);
                let rmax = self.reasoning.iter().copied().fold(0.0, f64::max);
                Some(self.gamma1 * bmax * (1.0 + reasoning * rmax))
            }
        }
    }
}

fn pair(p: &[f64]) -> Result<[f64; 2], GrowthError> {
    match p {
        [a, b] => Ok([*a, *b]),
        _ => Err(GrowthError::LengthMismatch { expected: 2, got: p.len() }),
    }
}

/// `gamma1 * b(d) * (1 + gamma2 * r(d) * k_thinking)`.
pub fn model_horizon(d: f64, k_thinking: bool, p: &GrowthParams) -> Result<f64, GrowthError> {
    p.validate()?;
    let b = p.base_component(d)?;
    if !k_thinking || p.gamma2 == 0.0 {
        return Ok(p.gamma1 * b);
    }
    let r = p.reasoning_component(d)?;
    Ok(p.gamma1 * b * (1.0 + p.gamma2 * r))
}

/// Parameter gradient of [`model_horizon`].
pub fn model_horizon_grad(d: f64, k_thinking: bool, p: &GrowthParams) -> Result<GrowthGradient, GrowthError> {
    p.validate()?;
    let b = p.base_component(d)?;
    let db = p.link_grad(d, &p.base);
    let n_r = p.reasoning.len();
    if !k_thinking {
        return Ok(GrowthGradient { gamma1: b, gamma2: 0.0, base: db.iter().map(|g| p.gamma1 * g).collect(), reasoning: vec![0.0; n_r] });
    }
    let r = p.reasoning_component(d)?;
    let dr = p.link_grad(d, &p.reasoning);
    let factor = 1.0 + p.gamma2 * r;
    Ok(GrowthGradient {
        gamma1: b * factor,
        gamma2: p.gamma1 * b * r,
        base: db.iter().map(|g| p.gamma1 * g * factor).collect(),
        reasoning: dr.iter().map(|g| p.gamma1 * b * p.gamma2 * g).collect(),
    })
}

/// `h = gamma * sigmoid(delta1 * d + delta2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SingleSigmoidParams {
    pub gamma: f64,
    pub delta1: f64,
    pub delta2: f64,
}

impl SingleSigmoidParams {
    pub fn validate(&self) -> Result<(), GrowthError> {
        if !(self.gamma > 0.0) {
            return Err(GrowthError::DomainError(format!("gamma must be positive, got {}", self.gamma)));
        }
        check_slope(self.delta1)
    }

    pub fn inflection(&self) -> f64 {
        -self.delta2 / self.delta1
    }
}

pub fn single_sigmoid_curve(d: f64, p: &SingleSigmoidParams) -> Result<f64, GrowthError> {
    p.validate()?;
    Ok(p.gamma * sigmoid(p.delta1 * d + p.delta2))
}

/// Gradient with respect to `(gamma, delta1, delta2)`.
pub fn single_sigmoid_grad(d: f64, p: &SingleSigmoidParams) -> [f64; 3] {
    let s = sigmoid(p.delta1 * d + p.delta2);
    let ds = p.gamma * s * (1.0 - s);
    [s, ds * d, ds]
}

/// Log-linear trend `h = exp(beta0 + beta1 * d)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpTrendParams {
    pub beta0: f64,
    pub beta1: f64,
}

pub fn metr_exponential(d: f64, p: &ExpTrendParams) -> Result<f64, GrowthError> {
    guarded_exp(p.beta0 + p.beta1 * d)
}

pub fn metr_exponential_grad(d: f64, p: &ExpTrendParams) -> [f64; 2] {
    let e = (p.beta0 + p.beta1 * d).exp();
    [e, e * d]
}

/// Doubling time in months for a growth rate in per-year units.
pub fn doubling_time(p: &ExpTrendParams) -> Result<f64, GrowthError> {
    if !(p.beta1 > 0.0) {
        return Err(GrowthError::NonPositiveSlope(p.beta1));
    }
    Ok(12.0 * std::f64::consts::LN_2 / p.beta1)
}
