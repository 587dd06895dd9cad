//! Damped Gauss-Newton (Levenberg-Marquardt) on a stacked residual vector.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::par::ExecPolicy;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmConfig {
    pub max_iter: usize,
    /// Stop when the sup-norm of the cost gradient falls below this.
    pub grad_tol: f64,
    /// Stop when an accepted step is shorter than `step_tol (1 + |theta|)`.
    pub step_tol: f64,
    /// Relative central-difference step for the Jacobian.
    pub fd_step: f64,
}

impl Default for LmConfig {
    fn default() -> Self {
        Self {
            max_iter: 200,
            grad_tol: 1e-8,
            step_tol: 1e-10,
            fd_step: 1e-6,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LmOutcome {
    pub theta: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Jacobian of the residual vector at `theta`.
    pub jacobian: DMatrix<f64>,
}

/// Residual map; `None` marks an infeasible point.
pub trait ResidualFn: Sync {
    fn eval(&self, theta: &[f64]) -> Option<Vec<f64>>;

    /// Analytic Jacobian at a feasible `theta`; `None` falls back to finite differences.
    fn jacobian(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
}

impl<F: Fn(&[f64]) -> Option<Vec<f64>> + Sync> ResidualFn for F {
    fn eval(&self, theta: &[f64]) -> Option<Vec<f64>> {
        self(theta)
    }
}

fn cost_of(r: &[f64]) -> f64 {
    r.iter().map(|v| v * v).sum()
}

pub fn fd_step(theta: &[f64], k: usize, rel: f64) -> f64 {
    rel * (1.0 + theta[k].abs())
}

/// Central-difference Jacobian; falls back to one-sided differences next to
/// the feasibility boundary.
pub fn jacobian(
    f: &dyn ResidualFn,
    theta: &[f64],
    r0: &[f64],
    rel: f64,
    policy: ExecPolicy,
) -> DMatrix<f64> {
    let m = r0.len();
    let cols = policy.map(theta.len(), |k| {
        let h = fd_step(theta, k, rel);
        let mut tp = theta.to_vec();
        let mut tm = theta.to_vec();
        tp[k] += h;
        tm[k] -= h;
        match (f.eval(&tp), f.eval(&tm)) {
            (Some(p), Some(q)) => p
                .iter()
                .zip(&q)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect::<Vec<f64>>(),
            (Some(p), None) => p.iter().zip(r0).map(|(a, b)| (a - b) / h).collect(),
            (None, Some(q)) => r0.iter().zip(&q).map(|(a, b)| (a - b) / h).collect(),
            (None, None) => vec![0.0; m],
        }
    });
    DMatrix::from_fn(m, theta.len(), |r, c| cols[c][r])
}

pub fn levenberg_marquardt(
    f: &dyn ResidualFn,
    theta0: &[f64],
    cfg: &LmConfig,
    policy: ExecPolicy,
) -> Option<LmOutcome> {
    let mut theta = theta0.to_vec();
    let mut r = f.eval(&theta)?;
    let mut cost = cost_of(&r);
    let p = theta.len();
    if p == 0 {
        return Some(LmOutcome {
            theta,
            cost,
            iterations: 0,
            converged: true,
            jacobian: DMatrix::zeros(r.len(), 0),
        });
    }
    let mut lambda = 1e-3;
    let jac = |theta: &[f64], r: &[f64]| {
        f.jacobian(theta)
            .unwrap_or_else(|| jacobian(f, theta, r, cfg.fd_step, policy))
    };
    let mut j = jac(&theta, &r);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iter {
        iterations += 1;
        let rv = DVector::from_column_slice(&r);
        let g = j.tr_mul(&rv);
        if 2.0 * g.amax() < cfg.grad_tol {
            converged = true;
            break;
        }
        let a = j.tr_mul(&j);
        let mut accepted = false;
        while lambda < 1e16 {
            let mut damped = a.clone();
            for k in 0..p {
                damped[(k, k)] += lambda * (a[(k, k)] + 1e-12);
            }
            let Some(step) = damped.cholesky().map(|c| c.solve(&(-&g))) else {
                lambda *= 10.0;
                continue;
            };
            let cand: Vec<f64> = theta.iter().zip(step.iter()).map(|(t, s)| t + s).collect();
            match f.eval(&cand) {
                Some(rc) if cost_of(&rc) < cost => {
                    let norm_t = theta.iter().map(|v| v * v).sum::<f64>().sqrt();
                    let small = step.norm() < cfg.step_tol * (1.0 + norm_t);
                    theta = cand;
                    r = rc;
                    cost = cost_of(&r);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if small {
                        converged = true;
                    }
                    break;
                }
                _ => {
                    if step.norm()
                        < cfg.step_tol * (1.0 + theta.iter().map(|v| v * v).sum::<f64>().sqrt())
                    {
                        // no downhill step exists at this resolution
                        converged = true;
                        break;
                    }
                    lambda *= 4.0;
                }
            }
        }
        if accepted {
            j = jac(&theta, &r);
        }
        if converged || !accepted {
            break;
        }
    }
    Some(LmOutcome {
        theta,
        cost,
        iterations,
        converged,
        jacobian: j,
    })
}
