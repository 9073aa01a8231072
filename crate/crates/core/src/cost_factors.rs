//! Hinge-loss residuals with analytic Jacobians.
//!
//! Every Jacobian is taken with respect to the flattened team state
//! `[x_1 .. x_N, v_1 .. v_N]`; all three costs depend on positions only.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::{Deserialize, Serialize};

use crate::environment::SignedDistanceGrid;
use crate::error::{Error, Result};
use crate::gp_model::{interpolate_coeffs, CoeffBlock, SupportState};
use crate::task_assignment::{AssignmentMatrix, FormationShape};

/// Separation below which two robots count as coincident.
const COINCIDENT: f64 = 1e-9;

/// Thresholds and noise levels of the three likelihood terms. A larger sigma
/// means a weaker term.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HingeParams {
    pub eps_obs: f64,
    pub eps_col: f64,
    pub eps_form: f64,
    pub sigma_obs: f64,
    pub sigma_col: f64,
    pub sigma_form: f64,
}

impl HingeParams {
    pub fn validate(&self) -> Result<()> {
        let eps = [self.eps_obs, self.eps_col, self.eps_form];
        let sig = [self.sigma_obs, self.sigma_col, self.sigma_form];
        if eps.iter().any(|e| !(*e >= 0.0)) {
            return Err(Error::invalid("hinge thresholds must be non-negative"));
        }
        if sig.iter().any(|s| !(*s > 0.0)) {
            return Err(Error::invalid("hinge sigmas must be positive"));
        }
        Ok(())
    }
}

/// A rectangular formation to hold: shape, spacing, orientation, and who
/// stands where.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FormationSpec {
    pub shape: FormationShape,
    pub spacing: f64,
    pub heading: f64,
    pub assignment: AssignmentMatrix,
}

impl FormationSpec {
    pub fn new(spacing: f64, heading: f64, assignment: AssignmentMatrix) -> Result<Self> {
        if !(spacing > 0.0) {
            return Err(Error::invalid(format!(
                "formation spacing must be positive, got {spacing}"
            )));
        }
        Ok(Self {
            shape: assignment.shape(),
            spacing,
            heading,
            assignment,
        })
    }

    /// Robot holding the upper-left slot, or the first real robot in reading
    /// order when that slot is virtual.
    pub fn origin_robot(&self) -> Option<(usize, (usize, usize))> {
        let cols = self.shape.cols;
        self.assignment
            .slots()
            .iter()
            .enumerate()
            .find_map(|(i, s)| s.map(|id| (id, (i / cols, i % cols))))
    }

    /// Expected displacement of `robot` from the origin robot.
    pub fn expected_offset(&self, robot: usize) -> Option<Vector2<f64>> {
        let (_, (r0, c0)) = self.origin_robot()?;
        let (r, c) = self.assignment.slot_of(robot)?;
        let (dr, dc) = (r as f64 - r0 as f64, c as f64 - c0 as f64);
        Some(
            nalgebra::Rotation2::new(self.heading)
                * Vector2::new(dc * self.spacing, -dr * self.spacing),
        )
    }

    /// Distance of every non-origin robot from its expected place relative
    /// to the origin robot, in robot-id order.
    pub fn deviations(&self, positions: &[Vector2<f64>]) -> Result<Vec<(usize, f64)>> {
        let (origin, _) = self
            .origin_robot()
            .ok_or_else(|| Error::invalid("formation has no real robot"))?;
        let mut out = Vec::with_capacity(positions.len().saturating_sub(1));
        for (i, p) in positions.iter().enumerate() {
            if i == origin {
                continue;
            }
            let offset = self
                .expected_offset(i)
                .ok_or_else(|| Error::invalid(format!("robot {i} has no formation slot")))?;
            out.push((i, (p - positions[origin] - offset).norm()));
        }
        Ok(out)
    }
}

/// Residual vector and its Jacobian (`rows = residual length`, `cols = 4N`).
#[derive(Debug, Clone)]
pub struct Residual {
    pub value: DVector<f64>,
    pub jacobian: DMatrix<f64>,
}

impl Residual {
    fn zeros(rows: usize, num_robots: usize) -> Self {
        Residual {
            value: DVector::zeros(rows),
            jacobian: DMatrix::zeros(rows, 4 * num_robots),
        }
    }

    fn set_position_row(&mut self, row: usize, robot: usize, grad: Vector2<f64>) {
        self.jacobian[(row, 2 * robot)] = grad.x;
        self.jacobian[(row, 2 * robot + 1)] = grad.y;
    }
}

/// `max(0, eps - d_o(x_i))` per robot.
pub fn obstacle_residual(
    state: &SupportState,
    sdf: &SignedDistanceGrid,
    eps_obs: f64,
) -> Result<Residual> {
    let n = state.num_robots();
    let mut out = Residual::zeros(n, n);
    for (i, p) in state.positions.iter().enumerate() {
        let (d, grad) = sdf.query(p)?;
        if d < eps_obs {
            out.value[i] = eps_obs - d;
            out.set_position_row(i, i, -grad);
        }
    }
    Ok(out)
}

/// Number of unordered robot pairs.
pub fn pair_count(num_robots: usize) -> usize {
    num_robots * num_robots.saturating_sub(1) / 2
}

/// `max(0, eps - |x_i - x_j|)` for every pair `i < j`, in lexicographic order.
pub fn collision_residual(state: &SupportState, eps_col: f64) -> Result<Residual> {
    let n = state.num_robots();
    if n < 2 {
        return Err(Error::invalid(
            "collision residual needs at least two robots",
        ));
    }
    let mut out = Residual::zeros(pair_count(n), n);
    let mut row = 0;
    for i in 0..n {
        for j in i + 1..n {
            let diff = state.positions[i] - state.positions[j];
            let dist = diff.norm();
            if dist < eps_col {
                let dir = if dist < COINCIDENT {
                    Vector2::new(1.0, 0.0)
                } else {
                    diff / dist
                };
                out.value[row] = eps_col - dist;
                out.set_position_row(row, i, -dir);
                out.set_position_row(row, j, dir);
            }
            row += 1;
        }
    }
    Ok(out)
}

/// `max(0, d_f - eps)` for every robot except the formation origin.
pub fn formation_residual(
    state: &SupportState,
    spec: &FormationSpec,
    eps_form: f64,
) -> Result<Residual> {
    let n = state.num_robots();
    let (origin, _) = spec
        .origin_robot()
        .ok_or_else(|| Error::invalid("formation has no real robot"))?;
    if spec.assignment.num_robots() != n {
        return Err(Error::invalid(format!(
            "formation assigns {} robots, state has {n}",
            spec.assignment.num_robots()
        )));
    }
    let mut out = Residual::zeros(n - 1, n);
    let x0 = state.positions[origin];
    let mut row = 0;
    for (i, p) in state.positions.iter().enumerate() {
        if i == origin {
            continue;
        }
        let offset = spec
            .expected_offset(i)
            .ok_or_else(|| Error::invalid(format!("robot {i} has no formation slot")))?;
        let err = p - x0 - offset;
        let d = err.norm();
        if d > eps_form {
            let dir = err / d;
            out.value[row] = d - eps_form;
            out.set_position_row(row, i, dir);
            out.set_position_row(row, origin, -dir);
        }
        row += 1;
    }
    Ok(out)
}

/// One likelihood term with the data it needs.
#[derive(Debug, Clone, Copy)]
pub enum CostTerm<'a> {
    Obstacle {
        sdf: &'a SignedDistanceGrid,
        eps: f64,
    },
    Collision {
        eps: f64,
    },
    Formation {
        spec: &'a FormationSpec,
        eps: f64,
    },
}

impl CostTerm<'_> {
    pub fn evaluate(&self, state: &SupportState) -> Result<Residual> {
        match *self {
            CostTerm::Obstacle { sdf, eps } => obstacle_residual(state, sdf, eps),
            CostTerm::Collision { eps } => collision_residual(state, eps),
            CostTerm::Formation { spec, eps } => formation_residual(state, spec, eps),
        }
    }
}

/// Residual at an in-between time with its Jacobians chained to both
/// bracketing support states.
#[derive(Debug, Clone)]
pub struct InterpolatedResidual {
    pub value: DVector<f64>,
    pub jac_prev: DMatrix<f64>,
    pub jac_next: DMatrix<f64>,
}

/// `J * [[a I, b I], [c I, d I]]` for a position-only `J`.
pub(crate) fn chain_position_jacobian(j: &DMatrix<f64>, coeffs: &CoeffBlock) -> DMatrix<f64> {
    let m = j.ncols() / 2;
    let jp = j.columns(0, m);
    let mut out = DMatrix::zeros(j.nrows(), j.ncols());
    out.columns_mut(0, m).copy_from(&(jp * coeffs.0[(0, 0)]));
    out.columns_mut(m, m).copy_from(&(jp * coeffs.0[(0, 1)]));
    out
}

pub fn interpolated_residual(
    term: &CostTerm<'_>,
    prev: &SupportState,
    next: &SupportState,
    tau: f64,
) -> Result<InterpolatedResidual> {
    if !(tau > prev.time && tau < next.time) {
        return Err(Error::invalid(format!(
            "interpolated factor time {tau} not strictly inside ({}, {})",
            prev.time, next.time
        )));
    }
    let (state, lambda, psi) = interpolate_coeffs(prev, next, tau)?;
    let base = term.evaluate(&state)?;
    Ok(InterpolatedResidual {
        jac_prev: chain_position_jacobian(&base.jacobian, &lambda),
        jac_next: chain_position_jacobian(&base.jacobian, &psi),
        value: base.value,
    })
}
