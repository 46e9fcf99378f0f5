//! Bound-constrained Levenberg-Marquardt.
//!
//! The solver works on dimensionless variables `u = x / scale`. Jacobians come from
//! central differences with step `1e-6` in `u` (one-sided next to a bound), columns
//! evaluated in parallel and assembled in index order. Variables sitting on a bound
//! with the gradient pointing outward are frozen for that iteration.

use std::sync::atomic::{AtomicUsize, Ordering};

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const DIFF_STEP: f64 = 1e-6;
const LAMBDA_INIT: f64 = 1e-3;
const LAMBDA_MAX: f64 = 1e20;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Tolerances {
    /// Largest cosine between the residual vector and any Jacobian column.
    #[serde(default = "default_gtol")]
    pub gradient: f64,
    /// Relative step size in scaled variables.
    #[serde(default = "default_xtol")]
    pub step: f64,
    /// Relative reduction of the objective, actual and predicted.
    #[serde(default = "default_ftol")]
    pub objective: f64,
}

fn default_gtol() -> f64 {
    1e-10
}
fn default_xtol() -> f64 {
    1e-10
}
fn default_ftol() -> f64 {
    1e-12
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            gradient: default_gtol(),
            step: default_xtol(),
            objective: default_ftol(),
        }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("gradient tolerance", self.gradient), ("step tolerance", self.step), ("objective tolerance", self.objective)] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::invalid(name, format!("{v} must be finite and > 0")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Residual orthogonal to the feasible Jacobian columns (includes zero residual).
    Gradient,
    Step,
    Objective,
    /// Damping grew without bound: no trial step lowered the objective.
    NoImprovement,
    MaxIterations,
    /// Nothing to vary.
    NoFreeParameters,
}

impl Termination {
    pub fn converged(self) -> bool {
        self != Termination::MaxIterations
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub x: Vec<f64>,
    pub residuals: Vec<f64>,
    /// Sum of squared residuals.
    pub objective: f64,
    pub iterations: usize,
    pub evaluations: usize,
    pub termination: Termination,
    /// Objective at the start and after every accepted step.
    pub trace: Vec<f64>,
    /// Standard errors from `(JᵀJ)⁻¹ s²`, `s² = objective / (m − n)`.
    pub std_errors: Vec<Option<f64>>,
}

/// Box-constrained problem on `x`; `residuals` returns `None` where the model cannot
/// be evaluated, which rejects the trial point.
pub struct Problem<'a, F> {
    pub residuals: F,
    pub x0: &'a [f64],
    pub lower: &'a [f64],
    pub upper: &'a [f64],
    /// Typical magnitude of each variable; fixes the difference step.
    pub scale: &'a [f64],
}

struct Counted<'f, F> {
    f: &'f F,
    calls: AtomicUsize,
}

impl<F: Fn(&[f64]) -> Option<Vec<f64>> + Sync> Counted<'_, F> {
    fn eval_u(&self, u: &[f64], scale: &[f64]) -> Option<Vec<f64>> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let x: Vec<f64> = u.iter().zip(scale).map(|(a, s)| a * s).collect();
        (self.f)(&x).filter(|r| r.iter().all(|v| v.is_finite()))
    }
}

fn sum_sq(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn minimize<F>(problem: Problem<'_, F>, tol: &Tolerances, max_iterations: usize) -> Result<LmOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    tol.validate()?;
    let n = problem.x0.len();
    if problem.lower.len() != n || problem.upper.len() != n || problem.scale.len() != n {
        return Err(Error::invalid("fit problem", "bound and scale vectors must match the parameter count"));
    }
    let scale = problem.scale;
    if let Some(s) = scale.iter().find(|s| !(s.is_finite() && **s > 0.0)) {
        return Err(Error::invalid("parameter scale", format!("{s} must be finite and > 0")));
    }
    let lo: Vec<f64> = problem.lower.iter().zip(scale).map(|(l, s)| l / s).collect();
    let hi: Vec<f64> = problem.upper.iter().zip(scale).map(|(h, s)| h / s).collect();
    let mut u: Vec<f64> = problem.x0.iter().zip(scale).map(|(x, s)| x / s).collect();
    for i in 0..n {
        if !(lo[i] <= u[i] && u[i] <= hi[i]) {
            return Err(Error::invalid("initial value", format!("parameter {i} = {} outside its bounds", problem.x0[i])));
        }
    }
    let model = Counted {
        f: &problem.residuals,
        calls: AtomicUsize::new(0),
    };
    let mut r = model
        .eval_u(&u, scale)
        .ok_or_else(|| Error::invalid("initial values", "model cannot be evaluated at the starting point"))?;
    let mut cost = sum_sq(&r);
    let mut trace = vec![cost];
    let mut iterations = 0;
    let mut lambda = LAMBDA_INIT;
    let mut nu = 2.0;
    let mut diag = vec![0.0f64; n];

    let termination = 'outer: loop {
        if n == 0 {
            break Termination::NoFreeParameters;
        }
        if cost == 0.0 {
            break Termination::Gradient;
        }
        if iterations >= max_iterations {
            break Termination::MaxIterations;
        }
        let jac = jacobian(&model, &u, &r, &lo, &hi, scale);
        let m = r.len();
        let rv = DVector::from_column_slice(&r);
        let g = jac.tr_mul(&rv);
        let a = jac.tr_mul(&jac);

        let rnorm = rv.norm();
        let active: Vec<usize> = (0..n)
            .filter(|&i| {
                let col_norm = a[(i, i)].sqrt();
                let pinned_low = u[i] <= lo[i] && g[i] > 0.0;
                let pinned_high = u[i] >= hi[i] && g[i] < 0.0;
                col_norm > 0.0 && !pinned_low && !pinned_high
            })
            .collect();
        let gmax = active
            .iter()
            .map(|&i| (g[i] / (a[(i, i)].sqrt() * rnorm)).abs())
            .fold(0.0, f64::max);
        if active.is_empty() || gmax <= tol.gradient {
            break Termination::Gradient;
        }
        for &i in &active {
            diag[i] = diag[i].max(a[(i, i)]);
        }
        let k = active.len();
        let a_sub = DMatrix::from_fn(k, k, |p, q| a[(active[p], active[q])]);
        let g_sub = DVector::from_fn(k, |p, _| g[active[p]]);

        loop {
            let mut lhs = a_sub.clone();
            for p in 0..k {
                lhs[(p, p)] += lambda * diag[active[p]];
            }
            let Some(delta) = solve_spd(lhs, -&g_sub) else {
                lambda *= nu;
                nu *= 2.0;
                if lambda > LAMBDA_MAX {
                    break 'outer Termination::NoImprovement;
                }
                continue;
            };
            let mut trial = u.clone();
            for p in 0..k {
                let i = active[p];
                trial[i] = (u[i] + delta[p]).clamp(lo[i], hi[i]);
            }
            let step: Vec<f64> = (0..n).map(|i| trial[i] - u[i]).collect();
            let step_v = DVector::from_column_slice(&step);
            // predicted objective of the projected step under the linear model
            let jstep = &jac * &step_v;
            let predicted = cost - (&rv + &jstep).norm_squared();
            let outcome = model.eval_u(&trial, scale).map(|r_new| {
                let c = sum_sq(&r_new);
                (r_new, c)
            });
            match outcome {
                Some((r_new, cost_new)) if cost_new <= cost && predicted > 0.0 && step.iter().any(|s| *s != 0.0) => {
                    let actual = cost - cost_new;
                    let rho = actual / predicted;
                    let small_step = (0..n).all(|i| step[i].abs() <= tol.step * (trial[i].abs() + tol.step));
                    let small_drop = actual <= tol.objective * cost && predicted <= tol.objective * cost;
                    u = trial;
                    r = r_new;
                    cost = cost_new;
                    trace.push(cost);
                    iterations += 1;
                    lambda *= (1.0 - (2.0 * rho - 1.0).powi(3)).max(1.0 / 3.0);
                    nu = 2.0;
                    if small_drop {
                        break 'outer Termination::Objective;
                    }
                    if small_step {
                        break 'outer Termination::Step;
                    }
                    debug_assert_eq!(r.len(), m);
                    break;
                }
                _ => {
                    lambda *= nu;
                    nu *= 2.0;
                    if lambda > LAMBDA_MAX {
                        break 'outer Termination::NoImprovement;
                    }
                }
            }
        }
    };

    let std_errors = if n == 0 {
        Vec::new()
    } else {
        let jac = jacobian(&model, &u, &r, &lo, &hi, scale);
        standard_errors(&jac, cost, scale)
    };
    Ok(LmOutcome {
        x: u.iter().zip(scale).map(|(a, s)| a * s).collect(),
        residuals: r,
        objective: cost,
        iterations,
        evaluations: model.calls.load(Ordering::Relaxed),
        termination,
        trace,
        std_errors,
    })
}

fn solve_spd(lhs: DMatrix<f64>, rhs: DVector<f64>) -> Option<DVector<f64>> {
    match lhs.clone().cholesky() {
        Some(ch) => Some(ch.solve(&rhs)),
        None => lhs.lu().solve(&rhs),
    }
    .filter(|d| d.iter().all(|v| v.is_finite()))
}

fn jacobian<F>(model: &Counted<'_, F>, u: &[f64], r0: &[f64], lo: &[f64], hi: &[f64], scale: &[f64]) -> DMatrix<f64>
where
    F: Fn(&[f64]) -> Option<Vec<f64>> + Sync,
{
    let m = r0.len();
    let columns: Vec<Vec<f64>> = (0..u.len())
        .into_par_iter()
        .map(|j| {
            let h = DIFF_STEP * u[j].abs().max(1.0);
            let at = |x: f64| {
                let mut v = u.to_vec();
                v[j] = x;
                model.eval_u(&v, scale)
            };
            let up_ok = u[j] + h <= hi[j];
            let down_ok = u[j] - h >= lo[j];
            let central = if up_ok && down_ok {
                at(u[j] + h).zip(at(u[j] - h)).map(|(a, b)| diff(&a, &b, 2.0 * h))
            } else {
                None
            };
            central
                .or_else(|| up_ok.then(|| at(u[j] + h)).flatten().map(|a| diff(&a, r0, h)))
                .or_else(|| down_ok.then(|| at(u[j] - h)).flatten().map(|b| diff(r0, &b, h)))
                .unwrap_or_else(|| vec![0.0; m])
        })
        .collect();
    DMatrix::from_fn(m, u.len(), |i, j| columns[j][i])
}

fn diff(a: &[f64], b: &[f64], h: f64) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| (x - y) / h).collect()
}

fn standard_errors(jac: &DMatrix<f64>, cost: f64, scale: &[f64]) -> Vec<Option<f64>> {
    let (m, n) = jac.shape();
    if m <= n {
        return vec![None; n];
    }
    let s2 = cost / (m - n) as f64;
    let cov = jac.tr_mul(jac).try_inverse();
    (0..n)
        .map(|i| {
            let c = cov.as_ref()?[(i, i)];
            (c.is_finite() && c >= 0.0).then(|| (c * s2).sqrt() * scale[i])
        })
        .collect()
}
