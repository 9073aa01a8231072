use std::time::{Duration, Instant};

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use serde::{Deserialize, Serialize};

use super::{BlockSystem, FactorGraph};
use crate::error::{Error, Result};
use crate::gp_model::{SupportState, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LmConfig {
    pub lambda_init: f64,
    pub lambda_up: f64,
    pub lambda_down: f64,
    pub lambda_max: f64,
    /// Stop once an accepted step lowers the cost by less than this fraction.
    pub rel_tol: f64,
    /// Stop once the cost itself drops below this.
    pub abs_tol: f64,
    /// Stop once the largest update component is smaller than this.
    pub step_tol: f64,
    pub max_iters: usize,
}

impl Default for LmConfig {
    fn default() -> Self {
        LmConfig {
            lambda_init: 1e-4,
            lambda_up: 10.0,
            lambda_down: 10.0,
            lambda_max: 1e10,
            rel_tol: 1e-5,
            abs_tol: 1e-10,
            step_tol: 1e-10,
            max_iters: 100,
        }
    }
}

impl LmConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_init >= 0.0
            && self.lambda_up > 1.0
            && self.lambda_down > 1.0
            && self.lambda_max > 0.0
            && self.rel_tol >= 0.0
            && self.abs_tol >= 0.0
            && self.step_tol >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("bad solver configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    /// Linearizations performed.
    pub iterations: usize,
    /// Steps that lowered the cost.
    pub accepted: usize,
    pub initial_cost: f64,
    pub final_cost: f64,
    pub converged: bool,
    pub wall_time: Duration,
    /// Cost after each accepted step, starting with the initial cost.
    pub cost_trace: Vec<f64>,
}

/// Solves a symmetric positive-definite block-tridiagonal system by block
/// Cholesky. `upper[k]` is the block at row `k`, column `k + 1`. Returns
/// `None` when a pivot block is not positive definite.
pub fn solve_block_tridiagonal(
    diag: &[DMatrix<f64>],
    upper: &[DMatrix<f64>],
    rhs: &[DVector<f64>],
) -> Option<Vec<DVector<f64>>> {
    let k = diag.len();
    assert_eq!(rhs.len(), k);
    assert_eq!(upper.len(), k.saturating_sub(1));
    let mut lower: Vec<DMatrix<f64>> = Vec::with_capacity(k);
    // coupling[i] = L_i⁻¹ B_i
    let mut coupling: Vec<DMatrix<f64>> = Vec::with_capacity(k.saturating_sub(1));
    let mut y: Vec<DVector<f64>> = Vec::with_capacity(k);
    for i in 0..k {
        let mut s = diag[i].clone();
        let mut b = rhs[i].clone();
        if i > 0 {
            let c = &coupling[i - 1];
            s -= c.transpose() * c;
            b -= c.transpose() * &y[i - 1];
        }
        let l = Cholesky::<f64, Dyn>::new(s)?.l();
        y.push(l.solve_lower_triangular(&b)?);
        if i + 1 < k {
            coupling.push(l.solve_lower_triangular(&upper[i])?);
        }
        lower.push(l);
    }
    let mut x = vec![DVector::zeros(0); k];
    for i in (0..k).rev() {
        let mut b = y[i].clone();
        if i + 1 < k {
            b -= &coupling[i] * &x[i + 1];
        }
        x[i] = lower[i].transpose().solve_upper_triangular(&b)?;
    }
    Some(x)
}

/// Damped step `(H + λ·diag H) δ = −g` with pinned states held at zero.
fn damped_step(sys: &BlockSystem, pinned: &[bool], lambda: f64) -> Option<Vec<DVector<f64>>> {
    let dim = sys.diag[0].nrows();
    let mut diag = sys.diag.clone();
    let mut upper = sys.upper.clone();
    let mut rhs: Vec<DVector<f64>> = sys.gradient.iter().map(|g| -g).collect();
    for (k, d) in diag.iter_mut().enumerate() {
        if pinned[k] {
            *d = DMatrix::identity(dim, dim);
            rhs[k].fill(0.0);
            if k > 0 {
                upper[k - 1].fill(0.0);
            }
            if k < upper.len() {
                upper[k].fill(0.0);
            }
        } else {
            for i in 0..dim {
                d[(i, i)] *= 1.0 + lambda;
            }
        }
    }
    solve_block_tridiagonal(&diag, &upper, &rhs)
}

fn apply_step(traj: &Trajectory, step: &[DVector<f64>]) -> Result<Trajectory> {
    let states = traj
        .states
        .iter()
        .zip(step)
        .map(|(s, d)| SupportState::from_flat(s.time, &(s.flatten() + d)))
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(states)
}

fn numeric(message: String, last: Option<&Trajectory>) -> Error {
    Error::NumericFailure {
        message,
        last_iterate: last.map(|t| Box::new(t.clone())),
    }
}

/// Levenberg–Marquardt on the graph objective, starting from `init`.
pub fn solve(
    graph: &FactorGraph,
    init: &Trajectory,
    config: &LmConfig,
) -> Result<(Trajectory, SolveReport)> {
    let started = Instant::now();
    config.validate()?;
    graph.validate()?;
    let mut x = init.clone();
    let mut cost = graph.total_cost(&x)?;
    if !cost.is_finite() {
        return Err(numeric(format!("initial cost is {cost}"), None));
    }
    let mut report = SolveReport {
        iterations: 0,
        accepted: 0,
        initial_cost: cost,
        final_cost: cost,
        converged: false,
        wall_time: Duration::ZERO,
        cost_trace: vec![cost],
    };
    let mut lambda = config.lambda_init;

    'outer: while report.iterations < config.max_iters {
        if cost <= config.abs_tol {
            report.converged = true;
            break;
        }
        report.iterations += 1;
        let sys = graph.linearize(&x)?;
        if sys
            .gradient
            .iter()
            .any(|g| g.iter().any(|v| !v.is_finite()))
        {
            return Err(numeric("gradient is not finite".into(), Some(&x)));
        }
        // Newton decrement: the decrease the undamped model still promises.
        if let Some(gn) = damped_step(&sys, &graph.pinned, 0.0) {
            let promised = -0.5
                * sys
                    .gradient
                    .iter()
                    .zip(&gn)
                    .map(|(g, d)| g.dot(d))
                    .sum::<f64>();
            if promised < config.rel_tol * cost {
                report.converged = true;
                break;
            }
        }
        loop {
            let Some(step) = damped_step(&sys, &graph.pinned, lambda) else {
                lambda = (lambda * config.lambda_up).max(1e-12);
                if lambda > config.lambda_max {
                    break 'outer;
                }
                continue;
            };
            let largest = step.iter().map(|d| d.amax()).fold(0.0, f64::max);
            if largest < config.step_tol {
                report.converged = true;
                break 'outer;
            }
            let candidate = apply_step(&x, &step)?;
            let trial = match graph.total_cost(&candidate) {
                Ok(c) => Some(c),
                // A step that leaves the map is rejected like an uphill one.
                Err(Error::OutOfBounds { .. }) => None,
                Err(e) => return Err(e),
            };
            if let Some(c) = trial {
                if !c.is_finite() {
                    return Err(numeric(format!("trial cost is {c}"), Some(&x)));
                }
                if c < cost {
                    let drop = (cost - c) / cost.max(f64::MIN_POSITIVE);
                    x = candidate;
                    cost = c;
                    report.accepted += 1;
                    report.cost_trace.push(c);
                    lambda /= config.lambda_down;
                    if drop < config.rel_tol {
                        report.converged = true;
                        break 'outer;
                    }
                    break;
                }
            }
            lambda = (lambda * config.lambda_up).max(1e-12);
            if lambda > config.lambda_max {
                // No downhill step exists at any damping: a local minimum.
                report.converged = true;
                break 'outer;
            }
        }
    }
    report.final_cost = cost;
    report.wall_time = started.elapsed();
    Ok((x, report))
}
