//! Goal mirrored at t = 7 s: warm-started re-solve against a cold start.

use gp_formation::pipeline::run_pipeline;
use gp_formation::replanner::{replan_goal, PlanSession};
use gp_formation::scenario::Scenario;
use nalgebra::Vector2;

fn main() -> gp_formation::Result<()> {
    let s = Scenario::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/scenarios/four_robots.toml"
    ))?;
    let result = run_pipeline(&s)?;
    let mut session = PlanSession::from_result(&result);
    let warm = replan_goal(&mut session, Vector2::new(4.2, 3.0), 7.0)?.clone();
    let (_, cold) = session.cold_solve()?;
    println!(
        "warm start: {} accepted, cost {:.4}",
        warm.accepted, warm.final_cost
    );
    println!(
        "cold start: {} accepted, cost {:.4}",
        cold.accepted, cold.final_cost
    );
    let frozen = session.freeze_index(7.0)?;
    let same = result.trajectory.states[..=frozen] == session.solution.states[..=frozen];
    println!("states up to t = 7 s unchanged: {same}");
    for s in &session.solution.states[frozen..] {
        let c = s.positions.iter().sum::<Vector2<f64>>() / s.positions.len() as f64;
        println!("t={:4.1}  center ({:5.2}, {:5.2})", s.time, c.x, c.y);
    }
    Ok(())
}
