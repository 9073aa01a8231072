//! Replanning after a goal change or newly seen obstacles.
//!
//! The executed prefix (support states up to the change time) is frozen and
//! the rest is re-solved starting from the previous solution.

use std::sync::Arc;
use std::time::Duration;

use nalgebra::{DVector, Vector2};

use crate::environment::{build_sdf, OccupancyGrid};
use crate::error::{Error, Result};
use crate::factor_graph::{solve, straight_line, FactorGraph, SolveReport};
use crate::global_planner::FormationPlan;
use crate::gp_model::Trajectory;
use crate::pipeline::PlanResult;
use crate::scenario::Scenario;
use crate::task_assignment::{goals_from_assignment, AssignmentMatrix};

/// A solved problem that can be updated in place.
#[derive(Debug, Clone)]
pub struct PlanSession {
    pub scenario: Scenario,
    pub grid: OccupancyGrid,
    pub plan: FormationPlan,
    pub graph: FactorGraph,
    pub solution: Trajectory,
    /// Assignment and heading of the goal formation.
    pub goal_assignment: AssignmentMatrix,
    pub goal_heading: f64,
    pub goals: Vec<Vector2<f64>>,
    pub history: Vec<SolveReport>,
}

impl PlanSession {
    pub fn from_result(result: &PlanResult) -> Self {
        let last = result.plan.entries.last().expect("plan has entries");
        PlanSession {
            scenario: result.scenario.clone(),
            grid: result.map.grid.clone(),
            plan: result.plan.clone(),
            graph: result.graph.clone(),
            solution: result.trajectory.clone(),
            goal_assignment: result.assignments.last().expect("non-empty").clone(),
            goal_heading: last.formation.heading,
            goals: result.goals.clone(),
            history: vec![result.report.clone()],
        }
    }

    /// Index of the last support state at or before `change_time`.
    pub fn freeze_index(&self, change_time: f64) -> Result<usize> {
        let times = &self.graph.support_times;
        let (t0, t1) = (times[0], times[times.len() - 1]);
        if !(change_time >= t0 && change_time < t1) {
            return Err(Error::invalid(format!(
                "change time {change_time} outside [{t0}, {t1})"
            )));
        }
        Ok(times
            .iter()
            .rposition(|&t| t <= change_time + 1e-9)
            .expect("change time is at or after the first support time"))
    }

    fn freeze(&mut self, change_time: f64) -> Result<usize> {
        let k = self.freeze_index(change_time)?;
        for p in &mut self.graph.pinned[..=k] {
            *p = true;
        }
        Ok(k)
    }

    /// Cost and gradient at the current solution.
    fn local_model(&self) -> Result<(f64, Vec<DVector<f64>>)> {
        let sys = self.graph.linearize(&self.solution)?;
        Ok((sys.cost, sys.gradient))
    }

    /// Re-solves unless the update left the local model untouched, in which
    /// case the previous solver verdict still holds and nothing moves.
    fn resolve(&mut self, before: (f64, Vec<DVector<f64>>)) -> Result<&SolveReport> {
        if self.local_model()? == before {
            let cost = before.0;
            let converged = self.history.last().is_some_and(|r| r.converged);
            self.history.push(SolveReport {
                iterations: 0,
                accepted: 0,
                initial_cost: cost,
                final_cost: cost,
                converged,
                wall_time: Duration::ZERO,
                cost_trace: vec![cost],
            });
            return Ok(self.history.last().expect("just pushed"));
        }
        let (solution, report) = solve(&self.graph, &self.solution, &self.scenario.lm)?;
        self.solution = solution;
        self.history.push(report);
        Ok(self.history.last().expect("just pushed"))
    }

    /// Solves the current (already modified) problem without the previous
    /// solution: the fresh-plan initialization (straight lines from the start
    /// positions to the goals) with frozen states overwritten by their values.
    /// Leaves the session untouched.
    pub fn cold_solve(&self) -> Result<(Trajectory, SolveReport)> {
        let start = &self.solution.states[0].positions;
        let mut init = straight_line(start, &self.goals, &self.graph.support_times)?;
        for (k, state) in init.states.iter_mut().enumerate() {
            if self.graph.pinned[k] {
                *state = self.solution.states[k].clone();
            }
        }
        solve(&self.graph, &init, &self.scenario.lm)
    }
}

/// Moves the team goal at `change_time` and re-solves from the current
/// solution. Support states up to the change time stay exactly as they were.
pub fn replan_goal(
    session: &mut PlanSession,
    new_goal: Vector2<f64>,
    change_time: f64,
) -> Result<&SolveReport> {
    let before = session.local_model()?;
    session.freeze(change_time)?;
    let shape = session.goal_assignment.shape();
    let spacing = session.scenario.spacing;
    let anchor = new_goal - shape.center_offset(spacing, session.goal_heading);
    let goals = goals_from_assignment(
        &session.goal_assignment,
        shape,
        spacing,
        anchor,
        session.goal_heading,
    )?;
    session.graph.set_goal(&goals)?;
    session.goals = goals;
    session.resolve(before)
}

/// Marks `cells` occupied, rebuilds the distance field and re-solves.
pub fn replan_obstacle<'a>(
    session: &'a mut PlanSession,
    cells: &[(usize, usize)],
    change_time: f64,
) -> Result<&'a SolveReport> {
    let (w, h) = (session.grid.width, session.grid.height);
    if let Some(&(ix, iy)) = cells.iter().find(|&&(ix, iy)| ix >= w || iy >= h) {
        return Err(Error::invalid(format!(
            "cell ({ix}, {iy}) outside the {w}x{h} map"
        )));
    }
    let before = session.local_model()?;
    session.freeze(change_time)?;
    if !cells.is_empty() {
        for &(ix, iy) in cells {
            session.grid.set_occupied(ix, iy, true);
        }
        session.graph.sdf = Arc::new(build_sdf(&session.grid));
    }
    session.resolve(before)
}
