//! Factor graph over the support states of a team trajectory.
//!
//! Factors touch either one support state (priors and direct likelihood
//! terms) or two consecutive ones (GP priors and interpolated likelihood
//! terms), which keeps the normal equations block-tridiagonal.

mod linearize;
mod solver;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::cost_factors::{chain_position_jacobian, CostTerm, FormationSpec, HingeParams};
use crate::environment::SignedDistanceGrid;
use crate::error::{Error, Result};
use crate::gp_model::{
    cov_inverse_coeffs, interpolate_coeffs, transition_coeffs, CoeffBlock, GpParams, SupportState,
    Trajectory,
};

pub use linearize::{BlockSystem, LinearizedFactor};
pub use solver::{solve, solve_block_tridiagonal, LmConfig, SolveReport};

/// Slack when testing whether a time falls inside a hold interval.
const TIME_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorRole {
    Start,
    Goal,
}

#[derive(Debug, Clone, PartialEq)]
pub enum FactorKind {
    /// Pulls one support state towards `target` (positions and velocities).
    Prior {
        role: PriorRole,
        target: DVector<f64>,
    },
    /// Links support state `key` to `key + 1`.
    GpPrior,
    Obstacle,
    Collision,
    /// Index into [`FactorGraph::formations`].
    Formation(usize),
}

impl FactorKind {
    pub fn label(&self) -> &'static str {
        match self {
            FactorKind::Prior {
                role: PriorRole::Start,
                ..
            } => "start-prior",
            FactorKind::Prior {
                role: PriorRole::Goal,
                ..
            } => "goal-prior",
            FactorKind::GpPrior => "gp-prior",
            FactorKind::Obstacle => "obstacle",
            FactorKind::Collision => "collision",
            FactorKind::Formation(_) => "formation",
        }
    }
}

/// One factor. `tau` is set for interpolated likelihood terms, which then
/// span `key` and `key + 1` like a GP prior.
#[derive(Debug, Clone, PartialEq)]
pub struct Factor {
    pub kind: FactorKind,
    pub key: usize,
    pub tau: Option<f64>,
    /// Isotropic standard deviation; unused by GP priors, which are weighted
    /// by the inverse process covariance.
    pub sigma: f64,
}

impl Factor {
    pub fn keys(&self) -> Vec<usize> {
        if self.is_binary() {
            vec![self.key, self.key + 1]
        } else {
            vec![self.key]
        }
    }

    pub fn is_binary(&self) -> bool {
        matches!(self.kind, FactorKind::GpPrior) || self.tau.is_some()
    }
}

#[derive(Debug, Clone)]
pub struct FactorGraph {
    pub support_times: Vec<f64>,
    pub num_robots: usize,
    pub qc_scale: f64,
    pub factors: Vec<Factor>,
    pub formations: Vec<FormationSpec>,
    pub hinge: HingeParams,
    pub sdf: Arc<SignedDistanceGrid>,
    /// Support states held fixed by the solver.
    pub pinned: Vec<bool>,
}

/// A formation to hold over `[start, end]`.
#[derive(Debug, Clone)]
pub struct Hold {
    pub formation: FormationSpec,
    pub start: f64,
    pub end: f64,
}

/// Everything needed to lay out a graph.
#[derive(Debug, Clone)]
pub struct GraphSetup {
    pub gp: GpParams,
    pub hinge: HingeParams,
    pub start: Vec<Vector2<f64>>,
    pub goal: Vec<Vector2<f64>>,
    /// `None` builds a graph without formation terms.
    pub holds: Option<Vec<Hold>>,
    pub interpolation_points: usize,
    pub start_sigma: f64,
    pub goal_sigma: f64,
    pub sdf: Arc<SignedDistanceGrid>,
}

/// Default standard deviation of the start prior.
pub const START_SIGMA: f64 = 1e-6;
/// Default standard deviation of the goal prior.
pub const GOAL_SIGMA: f64 = 1e-3;

fn rest_target(positions: &[Vector2<f64>]) -> DVector<f64> {
    let n = positions.len();
    let mut v = DVector::zeros(4 * n);
    for (i, p) in positions.iter().enumerate() {
        v[2 * i] = p.x;
        v[2 * i + 1] = p.y;
    }
    v
}

/// Lays out the factor graph and the straight-line initialization.
pub fn build_graph(setup: &GraphSetup) -> Result<(FactorGraph, Trajectory)> {
    let n = setup.gp.num_robots;
    let times = &setup.gp.support_times;
    let k_count = times.len();
    let (t0, t_end) = (times[0], times[k_count - 1]);
    setup.hinge.validate()?;
    if setup.start.len() != n || setup.goal.len() != n {
        return Err(Error::invalid(format!(
            "expected {n} start and goal positions, got {} and {}",
            setup.start.len(),
            setup.goal.len()
        )));
    }
    if !(setup.start_sigma > 0.0 && setup.goal_sigma > 0.0) {
        return Err(Error::invalid("prior sigmas must be positive"));
    }

    let mut formations = Vec::new();
    let mut windows = Vec::new();
    if let Some(holds) = &setup.holds {
        if holds.is_empty() {
            return Err(Error::invalid("formation plan is empty"));
        }
        for (i, h) in holds.iter().enumerate() {
            if !(h.start <= h.end) || h.start < t0 - TIME_TOL || h.end > t_end + TIME_TOL {
                return Err(Error::invalid(format!(
                    "hold interval [{}, {}] outside [{t0}, {t_end}]",
                    h.start, h.end
                )));
            }
            if i > 0 && h.start < holds[i - 1].end {
                return Err(Error::invalid(format!(
                    "hold intervals [{}, {}] and [{}, {}] overlap",
                    holds[i - 1].start,
                    holds[i - 1].end,
                    h.start,
                    h.end
                )));
            }
            if h.formation.assignment.num_robots() != n {
                return Err(Error::invalid(format!(
                    "hold {i} assigns {} robots, team has {n}",
                    h.formation.assignment.num_robots()
                )));
            }
            formations.push(h.formation.clone());
            windows.push((h.start, h.end));
        }
    }
    let formation_at = |t: f64| {
        windows
            .iter()
            .position(|&(a, b)| t >= a - TIME_TOL && t <= b + TIME_TOL)
    };

    let hinge = setup.hinge;
    let mut factors = Vec::new();
    factors.push(Factor {
        kind: FactorKind::Prior {
            role: PriorRole::Start,
            target: rest_target(&setup.start),
        },
        key: 0,
        tau: None,
        sigma: setup.start_sigma,
    });
    factors.push(Factor {
        kind: FactorKind::Prior {
            role: PriorRole::Goal,
            target: rest_target(&setup.goal),
        },
        key: k_count - 1,
        tau: None,
        sigma: setup.goal_sigma,
    });

    let likelihood = |key: usize, tau: Option<f64>, t: f64, factors: &mut Vec<Factor>| {
        factors.push(Factor {
            kind: FactorKind::Obstacle,
            key,
            tau,
            sigma: hinge.sigma_obs,
        });
        if n >= 2 {
            factors.push(Factor {
                kind: FactorKind::Collision,
                key,
                tau,
                sigma: hinge.sigma_col,
            });
        }
        if let Some(f) = formation_at(t) {
            factors.push(Factor {
                kind: FactorKind::Formation(f),
                key,
                tau,
                sigma: hinge.sigma_form,
            });
        }
    };

    for k in 0..k_count {
        likelihood(k, None, times[k], &mut factors);
        if k + 1 == k_count {
            break;
        }
        factors.push(Factor {
            kind: FactorKind::GpPrior,
            key: k,
            tau: None,
            sigma: 1.0,
        });
        let span = times[k + 1] - times[k];
        for j in 1..=setup.interpolation_points {
            let tau = times[k] + span * j as f64 / (setup.interpolation_points + 1) as f64;
            likelihood(k, Some(tau), tau, &mut factors);
        }
    }

    let graph = FactorGraph {
        support_times: times.clone(),
        num_robots: n,
        qc_scale: setup.gp.qc_scale,
        factors,
        formations,
        hinge,
        sdf: Arc::clone(&setup.sdf),
        pinned: vec![false; k_count],
    };
    let init = straight_line(&setup.start, &setup.goal, times)?;
    Ok((graph, init))
}

/// Constant-velocity straight lines from `start` to `goal` for every robot.
pub fn straight_line(
    start: &[Vector2<f64>],
    goal: &[Vector2<f64>],
    times: &[f64],
) -> Result<Trajectory> {
    let (t0, t1) = (times[0], times[times.len() - 1]);
    let duration = t1 - t0;
    let velocities: Vec<Vector2<f64>> = start
        .iter()
        .zip(goal)
        .map(|(s, g)| (g - s) / duration)
        .collect();
    let states = times
        .iter()
        .map(|&t| {
            let positions = start
                .iter()
                .zip(&velocities)
                .map(|(s, v)| s + v * (t - t0))
                .collect();
            SupportState::new(t, positions, velocities.clone())
        })
        .collect::<Result<Vec<_>>>()?;
    Trajectory::new(states)
}

/// Residual and Jacobian blocks of one factor, before whitening.
pub(crate) struct RawFactor {
    pub value: DVector<f64>,
    pub blocks: Vec<(usize, DMatrix<f64>)>,
}

impl FactorGraph {
    pub fn num_states(&self) -> usize {
        self.support_times.len()
    }

    pub fn state_dim(&self) -> usize {
        4 * self.num_robots
    }

    /// Checks key ranges and the one-GP-prior-per-interval topology.
    pub fn validate(&self) -> Result<()> {
        let k = self.num_states();
        let mut gp_links = vec![0usize; k.saturating_sub(1)];
        for f in &self.factors {
            if f.keys().iter().any(|&key| key >= k) {
                return Err(Error::invalid(format!(
                    "{} factor references missing support state {}",
                    f.kind.label(),
                    f.key
                )));
            }
            if let FactorKind::Formation(i) = f.kind {
                if i >= self.formations.len() {
                    return Err(Error::invalid(format!("formation {i} does not exist")));
                }
            }
            if let Some(tau) = f.tau {
                if !(tau > self.support_times[f.key] && tau < self.support_times[f.key + 1]) {
                    return Err(Error::invalid(format!(
                        "interpolation time {tau} outside interval {}",
                        f.key
                    )));
                }
            }
            if f.kind == FactorKind::GpPrior {
                gp_links[f.key] += 1;
            }
        }
        if let Some(i) = gp_links.iter().position(|&c| c != 1) {
            return Err(Error::invalid(format!(
                "support states {i} and {} are linked by {} GP priors",
                i + 1,
                gp_links[i]
            )));
        }
        if self.pinned.len() != k {
            return Err(Error::invalid(
                "pinned mask length differs from support count",
            ));
        }
        Ok(())
    }

    pub(crate) fn check_trajectory(&self, traj: &Trajectory) -> Result<()> {
        if traj.len() != self.num_states() || traj.num_robots() != self.num_robots {
            return Err(Error::invalid(format!(
                "trajectory has {} states of {} robots, graph expects {} of {}",
                traj.len(),
                traj.num_robots(),
                self.num_states(),
                self.num_robots
            )));
        }
        Ok(())
    }

    /// Likelihood term a factor evaluates, if any.
    pub fn cost_term(&self, kind: &FactorKind) -> Option<CostTerm<'_>> {
        match kind {
            FactorKind::Obstacle => Some(CostTerm::Obstacle {
                sdf: &self.sdf,
                eps: self.hinge.eps_obs,
            }),
            FactorKind::Collision => Some(CostTerm::Collision {
                eps: self.hinge.eps_col,
            }),
            FactorKind::Formation(i) => Some(CostTerm::Formation {
                spec: &self.formations[*i],
                eps: self.hinge.eps_form,
            }),
            _ => None,
        }
    }

    /// Upper-triangular factor `U` of the weight, `W = Uᵀ U`, for GP priors.
    pub(crate) fn gp_whitener(&self, key: usize) -> CoeffBlock {
        let dt = self.support_times[key + 1] - self.support_times[key];
        let w = cov_inverse_coeffs(dt, self.qc_scale).0;
        // 2x2 Cholesky W = L Lᵀ; U = Lᵀ.
        let l00 = w[(0, 0)].sqrt();
        let l10 = w[(1, 0)] / l00;
        let l11 = (w[(1, 1)] - l10 * l10).sqrt();
        CoeffBlock(nalgebra::Matrix2::new(l00, l10, 0.0, l11))
    }

    /// Unwhitened residual and Jacobian blocks of one factor.
    pub(crate) fn raw_factor(
        &self,
        f: &Factor,
        traj: &Trajectory,
        jacobians: bool,
    ) -> Result<RawFactor> {
        let states = &traj.states;
        let dim = self.state_dim();
        match &f.kind {
            FactorKind::Prior { target, .. } => {
                let value = states[f.key].flatten() - target;
                let blocks = if jacobians {
                    vec![(f.key, DMatrix::identity(dim, dim))]
                } else {
                    Vec::new()
                };
                Ok(RawFactor { value, blocks })
            }
            FactorKind::GpPrior => {
                let dt = self.support_times[f.key + 1] - self.support_times[f.key];
                let phi = transition_coeffs(dt);
                let value = phi.apply(&states[f.key].flatten()) - states[f.key + 1].flatten();
                let blocks = if jacobians {
                    vec![
                        (f.key, phi.to_matrix(self.num_robots)),
                        (f.key + 1, -DMatrix::identity(dim, dim)),
                    ]
                } else {
                    Vec::new()
                };
                Ok(RawFactor { value, blocks })
            }
            kind => {
                let term = self.cost_term(kind).expect("likelihood factor");
                match f.tau {
                    None => {
                        let r = term.evaluate(&states[f.key])?;
                        Ok(RawFactor {
                            value: r.value,
                            blocks: vec![(f.key, r.jacobian)],
                        })
                    }
                    Some(tau) => {
                        let (prev, next) = (&states[f.key], &states[f.key + 1]);
                        let (state, lambda, psi) = interpolate_coeffs(prev, next, tau)?;
                        let r = term.evaluate(&state)?;
                        let blocks = if jacobians {
                            vec![
                                (f.key, chain_position_jacobian(&r.jacobian, &lambda)),
                                (f.key + 1, chain_position_jacobian(&r.jacobian, &psi)),
                            ]
                        } else {
                            Vec::new()
                        };
                        Ok(RawFactor {
                            value: r.value,
                            blocks,
                        })
                    }
                }
            }
        }
    }

    /// `½ rᵀ W r` of one factor.
    pub fn factor_cost(&self, f: &Factor, traj: &Trajectory) -> Result<f64> {
        let raw = self.raw_factor(f, traj, false)?;
        Ok(match f.kind {
            FactorKind::GpPrior => {
                let u = self.gp_whitener(f.key);
                0.5 * u.apply(&raw.value).norm_squared()
            }
            _ => 0.5 * raw.value.norm_squared() / (f.sigma * f.sigma),
        })
    }

    /// Objective `Σ ½ rᵀ W r` over all factors.
    pub fn total_cost(&self, traj: &Trajectory) -> Result<f64> {
        self.check_trajectory(traj)?;
        let mut total = 0.0;
        for f in &self.factors {
            total += self.factor_cost(f, traj)?;
        }
        Ok(total)
    }

    /// Cost split by factor label.
    pub fn cost_breakdown(&self, traj: &Trajectory) -> Result<Vec<(&'static str, f64)>> {
        self.check_trajectory(traj)?;
        let mut out: Vec<(&'static str, f64)> = Vec::new();
        for f in &self.factors {
            let c = self.factor_cost(f, traj)?;
            let label = f.kind.label();
            match out.iter_mut().find(|(l, _)| *l == label) {
                Some(entry) => entry.1 += c,
                None => out.push((label, c)),
            }
        }
        Ok(out)
    }

    /// Number of factors with the given label, split into direct and
    /// interpolated.
    pub fn count(&self, label: &str) -> (usize, usize) {
        self.factors
            .iter()
            .filter(|f| f.kind.label() == label)
            .fold((0, 0), |(d, i), f| {
                if f.tau.is_some() {
                    (d, i + 1)
                } else {
                    (d + 1, i)
                }
            })
    }

    /// Replaces the goal prior target.
    pub fn set_goal(&mut self, goal: &[Vector2<f64>]) -> Result<()> {
        if goal.len() != self.num_robots {
            return Err(Error::invalid("goal count differs from team size"));
        }
        let target = rest_target(goal);
        let mut found = false;
        for f in &mut self.factors {
            if let FactorKind::Prior {
                role: PriorRole::Goal,
                target: t,
            } = &mut f.kind
            {
                *t = target.clone();
                found = true;
            }
        }
        if !found {
            return Err(Error::invalid("graph has no goal prior"));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests;
