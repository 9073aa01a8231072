//! End-to-end run: map preparation, formation planning, task assignment and
//! trajectory optimization, each timed separately.

use std::sync::Arc;
use std::time::{Duration, Instant};

use nalgebra::Vector2;
use serde::{Serialize, Serializer};

use crate::cost_factors::FormationSpec;
use crate::environment::{build_sdf, FreeSpaceIndex, OccupancyGrid, SignedDistanceGrid};
use crate::error::{Result, Stage};
use crate::factor_graph::{build_graph, solve, FactorGraph, GraphSetup, Hold, SolveReport};
use crate::global_planner::{plan_formations, FormationPlan, GlobalPlan, PlanEntry};
use crate::gp_model::{GpParams, Trajectory};
use crate::scenario::Scenario;
use crate::task_assignment::{assign_transition, goals_from_assignment, AssignmentMatrix};

fn millis<S: Serializer>(d: &Duration, s: S) -> std::result::Result<S::Ok, S::Error> {
    s.serialize_f64(d.as_secs_f64() * 1e3)
}

/// Wall time per stage, serialized in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct StageTimings {
    #[serde(serialize_with = "millis")]
    pub map_preparation: Duration,
    #[serde(serialize_with = "millis")]
    pub formation_planning: Duration,
    #[serde(serialize_with = "millis")]
    pub task_assignment: Duration,
    #[serde(serialize_with = "millis")]
    pub trajectory_optimization: Duration,
}

impl StageTimings {
    /// Planning, assignment and optimization; map preparation is excluded.
    pub fn total(&self) -> Duration {
        self.formation_planning + self.task_assignment + self.trajectory_optimization
    }
}

/// Maps derived from the scenario: raw occupancy, the inflated copy used for
/// corridor search, and the signed distance field of the raw map.
#[derive(Debug, Clone)]
pub struct PreparedMap {
    pub grid: OccupancyGrid,
    pub free: FreeSpaceIndex,
    pub sdf: Arc<SignedDistanceGrid>,
}

pub fn prepare_map(scenario: &Scenario) -> Result<PreparedMap> {
    let grid = scenario.occupancy()?;
    let free = FreeSpaceIndex::new(grid.inflate(scenario.inflation));
    let sdf = Arc::new(build_sdf(&grid));
    Ok(PreparedMap { grid, free, sdf })
}

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct PlanResult {
    pub scenario: Scenario,
    pub map: PreparedMap,
    /// Corridors and shapes when the formation was planned from the map.
    pub global: Option<GlobalPlan>,
    pub plan: FormationPlan,
    /// Starting block, one matrix per plan entry, then the goal formation.
    pub assignments: Vec<AssignmentMatrix>,
    pub start: Vec<Vector2<f64>>,
    pub goals: Vec<Vector2<f64>>,
    pub graph: FactorGraph,
    pub initial: Trajectory,
    pub trajectory: Trajectory,
    pub report: SolveReport,
    pub timings: StageTimings,
}

/// Graph inputs for a scenario and plan. Clearances are measured between
/// robot surfaces: the obstacle threshold grows by one radius, the pairwise
/// threshold by two.
pub fn graph_setup(
    scenario: &Scenario,
    plan: &FormationPlan,
    start: Vec<Vector2<f64>>,
    goals: Vec<Vector2<f64>>,
    sdf: Arc<SignedDistanceGrid>,
) -> Result<GraphSetup> {
    let mut hinge = scenario.hinge();
    hinge.eps_obs += scenario.robot_radius;
    hinge.eps_col += 2.0 * scenario.robot_radius;
    let holds = plan
        .entries
        .iter()
        .map(|e| Hold {
            formation: e.formation.clone(),
            start: e.hold.0,
            end: e.hold.1,
        })
        .collect();
    Ok(GraphSetup {
        gp: GpParams::uniform(
            scenario.qc_scale,
            scenario.num_robots,
            scenario.total_time,
            scenario.num_support_states,
        )?,
        hinge,
        start,
        goal: goals,
        holds: Some(holds),
        interpolation_points: scenario.interpolation_points,
        start_sigma: scenario.start_sigma,
        goal_sigma: scenario.goal_sigma,
        sdf,
    })
}

pub fn run_pipeline(scenario: &Scenario) -> Result<PlanResult> {
    scenario.validate()?;
    let mut timings = StageTimings::default();

    let clock = Instant::now();
    let map = prepare_map(scenario).map_err(|e| e.in_stage(Stage::MapPreparation))?;
    timings.map_preparation = clock.elapsed();

    let clock = Instant::now();
    let fixed = scenario.fixed_shape()?;
    let global = match fixed {
        Some(_) => None,
        None => {
            let path = scenario.planning_path()?;
            Some(
                plan_formations(
                    &map.free,
                    &path,
                    scenario.num_robots,
                    scenario.spacing,
                    scenario.tau,
                    scenario.total_time,
                )
                .map_err(|e| e.in_stage(Stage::FormationPlanning))?,
            )
        }
    };
    timings.formation_planning = clock.elapsed();

    let clock = Instant::now();
    let assign = || -> Result<_> {
        let (shapes, headings, holds) = match (&global, fixed) {
            (Some(g), _) => (g.shapes.clone(), g.headings(), g.holds.clone()),
            (None, Some(shape)) => (
                vec![shape],
                vec![scenario.heading],
                vec![(0.0, scenario.total_time)],
            ),
            (None, None) => unreachable!("either planned or fixed"),
        };
        let (start, first) = scenario.start_positions(headings[0])?;
        let mut chain = vec![first];
        let mut entries = Vec::with_capacity(shapes.len());
        for (i, shape) in shapes.iter().enumerate() {
            let next = assign_transition(chain.last().expect("non-empty"), *shape)?;
            entries.push(PlanEntry {
                formation: FormationSpec::new(scenario.spacing, headings[i], next.clone())?,
                hold: holds[i],
                corridor: global.as_ref().map(|g| g.corridors[i]),
            });
            chain.push(next);
        }
        let last = chain.last().expect("non-empty").clone();
        let heading = *headings.last().expect("non-empty");
        let anchor = scenario.goal_point() - last.shape().center_offset(scenario.spacing, heading);
        let goals = goals_from_assignment(&last, last.shape(), scenario.spacing, anchor, heading)?;
        chain.push(last);
        let plan = FormationPlan {
            entries,
            tau: if global.is_some() { scenario.tau } else { 0.0 },
            total_time: scenario.total_time,
        };
        plan.validate()?;
        Ok((plan, chain, start, goals))
    };
    let (plan, assignments, start, goals) =
        assign().map_err(|e| e.in_stage(Stage::TaskAssignment))?;
    timings.task_assignment = clock.elapsed();

    let clock = Instant::now();
    let optimize = || -> Result<_> {
        let setup = graph_setup(
            scenario,
            &plan,
            start.clone(),
            goals.clone(),
            Arc::clone(&map.sdf),
        )?;
        let (graph, initial) = build_graph(&setup)?;
        let (trajectory, report) = solve(&graph, &initial, &scenario.lm)?;
        Ok((graph, initial, trajectory, report))
    };
    let (graph, initial, trajectory, report) =
        optimize().map_err(|e| e.in_stage(Stage::TrajectoryOptimization))?;
    timings.trajectory_optimization = clock.elapsed();

    Ok(PlanResult {
        scenario: scenario.clone(),
        map,
        global,
        plan,
        assignments,
        start,
        goals,
        graph,
        initial,
        trajectory,
        report,
        timings,
    })
}
