//! Unconstrained minimizers used by every estimator in the crate.
//!
//! Two stages are provided: an Adam-style first-order descent with a
//! geometrically decaying step ([`adam`]) that is robust far from an optimum,
//! and limited-memory BFGS with a strong-Wolfe line search ([`lbfgs`]) that
//! polishes to a tight gradient tolerance. Objectives are closures returning
//! `(value, gradient)`; all problems here are small and dense, so plain
//! `Vec<f64>` is used throughout.

use std::collections::VecDeque;

use crate::numeric::inf_norm;

/// Result of a minimization run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub gradient: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl Minimum {
    pub fn gradient_norm(&self) -> f64 {
        inf_norm(&self.gradient)
    }
}

#[derive(Debug, Clone)]
pub struct LbfgsOptions {
    pub memory: usize,
    pub max_iterations: usize,
    /// Convergence when `max|g_i| <= gradient_tolerance * max(1, |f|)`.
    pub gradient_tolerance: f64,
}

impl Default for LbfgsOptions {
    fn default() -> Self {
        Self { memory: 10, max_iterations: 500, gradient_tolerance: 1e-8 }
    }
}

/// Converged in the scaled infinity norm used throughout the crate.
pub fn gradient_converged(value: f64, gradient: &[f64], tolerance: f64) -> bool {
    value.is_finite() && inf_norm(gradient) <= tolerance * value.abs().max(1.0)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, p: &[f64]) -> Vec<f64> {
    x.iter().zip(p).map(|(xi, pi)| xi + alpha * pi).collect()
}

struct Trial {
    alpha: f64,
    x: Vec<f64>,
    value: f64,
    gradient: Vec<f64>,
    slope: f64,
}

const C1: f64 = 1e-4;
const C2: f64 = 0.9;
const MAX_LINE_EVALS: usize = 40;

/// Approximate Wolfe conditions: near a minimum the Armijo test compares
/// values that differ only by round-off, so accept a step whose slope
/// has shrunk enough and whose value did not rise beyond that noise.
fn approx_wolfe(cur: &Trial, fx: f64, slope0: f64) -> bool {
    cur.value <= fx + 64.0 * f64::EPSILON * fx.abs().max(1.0) && cur.slope >= C2 * slope0 && cur.slope <= -0.8 * slope0
}

fn evaluate<F>(f: &mut F, x: &[f64], p: &[f64], alpha: f64) -> Trial
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let xt = axpy(x, alpha, p);
    let (mut value, gradient) = f(&xt);
    if !value.is_finite() || gradient.iter().any(|g| !g.is_finite()) {
        value = f64::INFINITY;
    }
    let slope = if value.is_finite() { dot(&gradient, p) } else { f64::NAN };
    Trial { alpha, x: xt, value, gradient, slope }
}

fn cubic_minimizer(a: f64, fa: f64, da: f64, b: f64, fb: f64, db: f64) -> Option<f64> {
    let d1 = da + db - 3.0 * (fa - fb) / (a - b);
    let disc = d1 * d1 - da * db;
    if !(disc >= 0.0) {
        return None;
    }
    let d2 = (b - a).signum() * disc.sqrt();
    let t = b - (b - a) * (db + d2 - d1) / (db - da + 2.0 * d2);
    t.is_finite().then_some(t)
}

/// Strong-Wolfe line search along `p`. Returns `None` if no step with
/// sufficient decrease was found.
fn line_search<F>(f: &mut F, x: &[f64], fx: f64, gx: &[f64], p: &[f64], alpha0: f64) -> Option<Trial>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let slope0 = dot(gx, p);
    if !(slope0 < 0.0) {
        return None;
    }
    let mut evals = 0;
    let mut prev = Trial { alpha: 0.0, x: x.to_vec(), value: fx, gradient: gx.to_vec(), slope: slope0 };
    let mut alpha = alpha0;
    let mut first = true;

    loop {
        if evals >= MAX_LINE_EVALS {
            return (prev.alpha > 0.0).then_some(prev);
        }
        let cur = evaluate(f, x, p, alpha);
        evals += 1;
        if !cur.value.is_finite() {
            // Step left the domain; shrink towards the last good point.
            alpha = prev.alpha + 0.25 * (alpha - prev.alpha);
            continue;
        }
        if cur.alpha > 0.0 && approx_wolfe(&cur, fx, slope0) && cur.value > fx + C1 * alpha * slope0 {
            return Some(cur);
        }
        if cur.value > fx + C1 * alpha * slope0 || (!first && cur.value >= prev.value) {
            return zoom(f, x, fx, slope0, p, prev, cur, evals);
        }
        if cur.slope.abs() <= -C2 * slope0 {
            return Some(cur);
        }
        if cur.slope >= 0.0 {
            return zoom(f, x, fx, slope0, p, cur, prev, evals);
        }
        first = false;
        alpha = (2.0 * alpha).min(prev.alpha.max(alpha) * 4.0 + 1.0);
        prev = cur;
    }
}

#[allow(clippy::too_many_arguments)]
fn zoom<F>(f: &mut F, x: &[f64], fx: f64, slope0: f64, p: &[f64], mut lo: Trial, mut hi: Trial, mut evals: usize) -> Option<Trial>
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    while evals < MAX_LINE_EVALS {
        let (a, b) = (lo.alpha, hi.alpha);
        let width = (b - a).abs();
        if width <= 1e-16 * a.abs().max(b.abs()).max(1e-300) {
            break;
        }
        let (left, right) = (a.min(b), a.max(b));
        let mut t = if hi.value.is_finite() {
            cubic_minimizer(a, lo.value, lo.slope, b, hi.value, hi.slope).unwrap_or(0.5 * (a + b))
        } else {
            0.5 * (a + b)
        };
        if t < left + 0.1 * width || t > right - 0.1 * width {
            t = 0.5 * (a + b);
        }
        let cur = evaluate(f, x, p, t);
        evals += 1;
        if cur.value.is_finite() && approx_wolfe(&cur, fx, slope0) {
            return Some(cur);
        }
        if !cur.value.is_finite() || cur.value > fx + C1 * t * slope0 || cur.value >= lo.value {
            hi = cur;
        } else {
            if cur.slope.abs() <= -C2 * slope0 {
                return Some(cur);
            }
            if cur.slope * (hi.alpha - lo.alpha) >= 0.0 {
                hi = lo;
            }
            lo = cur;
        }
    }
    (lo.alpha > 0.0).then_some(lo)
}

/// Limited-memory BFGS minimization from `x0`.
pub fn lbfgs<F>(mut f: F, x0: &[f64], options: &LbfgsOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    let mut x = x0.to_vec();
    let (mut fx, mut gx) = f(&x);
    let mut history: VecDeque<(Vec<f64>, Vec<f64>, f64)> = VecDeque::with_capacity(options.memory);
    let mut iterations = 0;

    if !fx.is_finite() {
        return Minimum { x, value: fx, gradient: gx, iterations, converged: false };
    }

    while iterations < options.max_iterations {
        if gradient_converged(fx, &gx, options.gradient_tolerance) {
            break;
        }
        iterations += 1;

        // Two-loop recursion.
        let mut q = gx.clone();
        let mut alphas = Vec::with_capacity(history.len());
        for (s, y, rho) in history.iter().rev() {
            let a = rho * dot(s, &q);
            for (qi, yi) in q.iter_mut().zip(y) {
                *qi -= a * yi;
            }
            alphas.push(a);
        }
        let scale = history
            .back()
            .map(|(s, y, _)| dot(s, y) / dot(y, y))
            .filter(|g| g.is_finite() && *g > 0.0)
            .unwrap_or_else(|| 1.0 / inf_norm(&gx).max(1.0));
        for qi in q.iter_mut() {
            *qi *= scale;
        }
        for ((s, y, rho), a) in history.iter().zip(alphas.iter().rev()) {
            let b = rho * dot(y, &q);
            for (qi, si) in q.iter_mut().zip(s) {
                *qi += (a - b) * si;
            }
        }
        let mut p: Vec<f64> = q.iter().map(|v| -v).collect();

        let mut step = line_search(&mut f, &x, fx, &gx, &p, 1.0);
        if step.is_none() && !history.is_empty() {
            // Curvature model went stale: restart from steepest descent.
            history.clear();
            let s = 1.0 / inf_norm(&gx).max(1.0);
            p = gx.iter().map(|g| -g * s).collect();
            step = line_search(&mut f, &x, fx, &gx, &p, 1.0);
        }
        let Some(trial) = step else { break };

        let s: Vec<f64> = trial.x.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = trial.gradient.iter().zip(&gx).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * dot(&s, &s).sqrt() * dot(&y, &y).sqrt() && sy > 0.0 {
            if history.len() == options.memory {
                history.pop_front();
            }
            history.push_back((s, y, 1.0 / sy));
        }
        let decrease = fx - trial.value;
        x = trial.x;
        fx = trial.value;
        gx = trial.gradient;
        if decrease.abs() <= f64::EPSILON * fx.abs().max(1.0) && history.is_empty() {
            break;
        }
    }

    let converged = gradient_converged(fx, &gx, options.gradient_tolerance);
    Minimum { x, value: fx, gradient: gx, iterations, converged }
}

#[derive(Debug, Clone)]
pub struct AdamOptions {
    pub steps: usize,
    pub initial_step: f64,
    /// Per-step multiplicative decay of the step size.
    pub decay: f64,
}

impl Default for AdamOptions {
    fn default() -> Self {
        Self { steps: 2000, initial_step: 1e-2, decay: 0.999 }
    }
}

/// First-order descent with bias-corrected moment estimates. Returns the
/// best iterate seen.
pub fn adam<F>(mut f: F, x0: &[f64], options: &AdamOptions) -> Minimum
where
    F: FnMut(&[f64]) -> (f64, Vec<f64>),
{
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    let n = x0.len();
    let mut x = x0.to_vec();
    let mut m = vec![0.0; n];
    let mut v = vec![0.0; n];
    let (f0, g0) = f(&x);
    let mut best = Minimum { x: x.clone(), value: f0, gradient: g0.clone(), iterations: 0, converged: false };
    if !f0.is_finite() {
        return best;
    }
    let mut g = g0;
    let mut lr = options.initial_step;

    for t in 1..=options.steps {
        for i in 0..n {
            m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
            v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
            let mh = m[i] / (1.0 - BETA1.powi(t as i32));
            let vh = v[i] / (1.0 - BETA2.powi(t as i32));
            x[i] -= lr * mh / (vh.sqrt() + EPS);
        }
        lr *= options.decay;
        let (fv, gv) = f(&x);
        if !fv.is_finite() || gv.iter().any(|gi| !gi.is_finite()) {
            // Fall back to the best point with a smaller step and fresh moments.
            x.clone_from(&best.x);
            g.clone_from(&best.gradient);
            m.iter_mut().for_each(|mi| *mi = 0.0);
            v.iter_mut().for_each(|vi| *vi = 0.0);
            lr *= 0.5;
            continue;
        }
        if fv < best.value {
            best = Minimum { x: x.clone(), value: fv, gradient: gv.clone(), iterations: t, converged: false };
        }
        g = gv;
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rosenbrock(x: &[f64]) -> (f64, Vec<f64>) {
        let (a, b) = (x[0], x[1]);
        let f = (1.0 - a).powi(2) + 100.0 * (b - a * a).powi(2);
        let g = vec![-2.0 * (1.0 - a) - 400.0 * a * (b - a * a), 200.0 * (b - a * a)];
        (f, g)
    }

    #[test]
    fn lbfgs_solves_rosenbrock() {
        let r = lbfgs(rosenbrock, &[-1.2, 1.0], &LbfgsOptions { max_iterations: 1000, ..Default::default() });
        assert!(r.converged, "{r:?}");
        assert!((r.x[0] - 1.0).abs() < 1e-6 && (r.x[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn lbfgs_quadratic_is_exact() {
        let quad = |x: &[f64]| {
            let f = 0.5 * (x[0] * x[0] + 10.0 * x[1] * x[1] + 100.0 * x[2] * x[2]) - x[0];
            (f, vec![x[0] - 1.0, 10.0 * x[1], 100.0 * x[2]])
        };
        let r = lbfgs(quad, &[3.0, -2.0, 1.0], &LbfgsOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 1.0).abs() < 1e-8);
    }

    #[test]
    fn lbfgs_recovers_from_infinite_values() {
        // ln barrier: infinite for x <= 0.
        let f = |x: &[f64]| {
            if x[0] <= 0.0 {
                (f64::INFINITY, vec![0.0])
            } else {
                (x[0] - 2.0 * x[0].ln(), vec![1.0 - 2.0 / x[0]])
            }
        };
        let r = lbfgs(f, &[0.1], &LbfgsOptions::default());
        assert!(r.converged);
        assert!((r.x[0] - 2.0).abs() < 1e-7);
    }

    #[test]
    fn adam_descends() {
        let r = adam(rosenbrock, &[-1.2, 1.0], &AdamOptions::default());
        assert!(r.value < rosenbrock(&[-1.2, 1.0]).0);
    }
}
