//! Builds the factor graph for a two-robot crossing around a block and
//! solves it, printing the cost per factor kind before and after.

use std::sync::Arc;

use gp_formation::cost_factors::HingeParams;
use gp_formation::environment::{build_sdf, OccupancyGrid};
use gp_formation::factor_graph::{
    build_graph, solve, GraphSetup, LmConfig, GOAL_SIGMA, START_SIGMA,
};
use gp_formation::gp_model::GpParams;
use nalgebra::Vector2;

fn main() -> gp_formation::Result<()> {
    let mut grid = OccupancyGrid::new(Vector2::zeros(), 0.1, 60, 40)?;
    for ix in 27..33 {
        for iy in 8..19 {
            grid.set_occupied(ix, iy, true);
        }
    }
    let setup = GraphSetup {
        gp: GpParams::uniform(1.0, 2, 10.0, 11)?,
        hinge: HingeParams {
            eps_obs: 0.3,
            eps_col: 0.3,
            eps_form: 0.01,
            sigma_obs: 0.1,
            sigma_col: 0.1,
            sigma_form: 0.3,
        },
        start: vec![Vector2::new(0.5, 1.8), Vector2::new(0.5, 2.2)],
        goal: vec![Vector2::new(5.5, 2.2), Vector2::new(5.5, 1.8)],
        holds: None,
        interpolation_points: 4,
        start_sigma: START_SIGMA,
        goal_sigma: GOAL_SIGMA,
        sdf: Arc::new(build_sdf(&grid)),
    };
    let (graph, init) = build_graph(&setup)?;
    let (sol, report) = solve(&graph, &init, &LmConfig::default())?;
    println!(
        "{} factors, {} states",
        graph.factors.len(),
        graph.num_states()
    );
    for ((kind, before), (_, after)) in graph
        .cost_breakdown(&init)?
        .iter()
        .zip(graph.cost_breakdown(&sol)?)
    {
        println!("{kind:>12}: {before:12.4e} -> {after:10.4e}");
    }
    println!(
        "{} iterations ({} accepted) in {:.2} ms",
        report.iterations,
        report.accepted,
        report.wall_time.as_secs_f64() * 1e3
    );
    for s in &sol.states {
        let (a, b) = (s.positions[0], s.positions[1]);
        println!(
            "t={:4.1}  ({:5.2}, {:5.2})  ({:5.2}, {:5.2})",
            s.time, a.x, a.y, b.x, b.y
        );
    }
    Ok(())
}
