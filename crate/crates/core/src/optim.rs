//! Unconstrained minimisation of smooth convex objectives.
//!
//! The squared hinge makes every training objective in this crate once
//! differentiable with a piecewise-constant generalised Hessian. [`minimize`]
//! takes truncated Newton steps (conjugate gradient on the generalised Hessian)
//! and accepts a step only when the Armijo condition holds, so the objective
//! never increases between accepted iterates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub trait SmoothObjective {
    fn dim(&self) -> usize;

    /// Objective value and gradient at `w`.
    fn value_gradient(&self, w: &[f64]) -> (f64, Vec<f64>);

    /// Generalised Hessian at `w` applied to `v`.
    fn hessian_product(&self, w: &[f64], v: &[f64]) -> Vec<f64>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub max_iterations: usize,
    pub rel_objective_tolerance: f64,
    pub gradient_tolerance: f64,
    pub max_cg_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        SolverOptions {
            max_iterations: 200,
            rel_objective_tolerance: 1e-12,
            gradient_tolerance: 1e-6,
            max_cg_iterations: 250,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    ObjectiveStalled,
    MaxIterations,
    LineSearchFailed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingStats {
    pub iterations: usize,
    pub objective: f64,
    pub gradient_norm: f64,
    pub stop_reason: StopReason,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub weights: Vec<f64>,
    pub stats: TrainingStats,
    /// Objective at the start point followed by every accepted iterate.
    pub history: Vec<f64>,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

fn check_finite(f: f64, g: &[f64]) -> Result<()> {
    if !f.is_finite() {
        return Err(Error::NonFinite(format!("objective is {f}")));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("gradient has non-finite entries".into()));
    }
    Ok(())
}

/// Approximately solves `H p = -g` by conjugate gradient.
fn newton_direction<O: SmoothObjective>(
    obj: &O,
    w: &[f64],
    g: &[f64],
    max_iter: usize,
) -> Vec<f64> {
    let n = g.len();
    let gnorm = norm(g);
    let tol = gnorm * gnorm.sqrt().min(0.1);
    let mut x = vec![0.0; n];
    let mut r: Vec<f64> = g.iter().map(|v| -v).collect();
    let mut p = r.clone();
    let mut rr = dot(&r, &r);
    for _ in 0..max_iter {
        let hp = obj.hessian_product(w, &p);
        let curvature = dot(&p, &hp);
        if !(curvature > 1e-300) {
            break;
        }
        let alpha = rr / curvature;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * hp[i];
        }
        let rr_next = dot(&r, &r);
        if rr_next.sqrt() <= tol {
            break;
        }
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
    }
    if x.iter().all(|v| *v == 0.0) || !x.iter().all(|v| v.is_finite()) {
        return g.iter().map(|v| -v).collect();
    }
    x
}

/// Minimises `obj` starting from `w0`.
pub fn minimize<O: SmoothObjective>(
    obj: &O,
    w0: Vec<f64>,
    opts: &SolverOptions,
) -> Result<Solution> {
    if !(opts.gradient_tolerance > 0.0 && opts.rel_objective_tolerance > 0.0) {
        return Err(Error::InvalidParameter(
            "tolerances must be positive".into(),
        ));
    }
    Error::check_dim(obj.dim(), w0.len())?;
    let mut w = w0;
    let (mut f, mut g) = obj.value_gradient(&w);
    check_finite(f, &g)?;
    let mut history = vec![f];
    let mut iterations = 0;

    let stop_reason = loop {
        if norm(&g) <= opts.gradient_tolerance * (1.0 + f.abs()) {
            break StopReason::GradientTolerance;
        }
        if iterations >= opts.max_iterations {
            break StopReason::MaxIterations;
        }
        let mut direction = newton_direction(obj, &w, &g, opts.max_cg_iterations);
        let mut slope = dot(&g, &direction);
        if !(slope < 0.0) {
            direction = g.iter().map(|v| -v).collect();
            slope = -dot(&g, &g);
        }

        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let trial: Vec<f64> = w
                .iter()
                .zip(&direction)
                .map(|(wi, di)| wi + step * di)
                .collect();
            let (ft, gt) = obj.value_gradient(&trial);
            if ft.is_finite() && ft <= f + 1e-4 * step * slope {
                check_finite(ft, &gt)?;
                accepted = Some((trial, ft, gt));
                break;
            }
            step *= 0.5;
        }
        let Some((w_next, f_next, g_next)) = accepted else {
            break StopReason::LineSearchFailed;
        };
        let decrease = (f - f_next) / f.abs().max(f64::MIN_POSITIVE);
        w = w_next;
        f = f_next;
        g = g_next;
        history.push(f);
        iterations += 1;
        if decrease < opts.rel_objective_tolerance {
            break if norm(&g) <= opts.gradient_tolerance * (1.0 + f.abs()) {
                StopReason::GradientTolerance
            } else {
                StopReason::ObjectiveStalled
            };
        }
    };

    Ok(Solution {
        stats: TrainingStats {
            iterations,
            objective: f,
            gradient_norm: norm(&g),
            stop_reason,
        },
        weights: w,
        history,
    })
}
