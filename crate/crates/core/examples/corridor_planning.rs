//! Corridors, formations and hold intervals through a width-varying corridor.

use gp_formation::environment::FreeSpaceIndex;
use gp_formation::global_planner::plan_formations;
use gp_formation::scenario::Scenario;

fn main() -> gp_formation::Result<()> {
    let s = Scenario::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/scenarios/ten_robots.toml"
    ))?;
    let free = FreeSpaceIndex::new(s.occupancy()?.inflate(s.inflation));
    let path = s.planning_path()?;
    let plan = plan_formations(&free, &path, s.num_robots, s.spacing, s.tau, s.total_time)?;
    for (i, c) in plan.corridors.iter().enumerate() {
        println!(
            "segment {i}: half-width {:.2} m, offset {:+.2} m -> {} held [{:.2}, {:.2}] s",
            c.half_width, c.offset, plan.shapes[i], plan.holds[i].0, plan.holds[i].1
        );
    }
    let pts: Vec<String> = plan
        .updated_path
        .points()
        .iter()
        .map(|p| format!("({:.2}, {:.2})", p.x, p.y))
        .collect();
    println!("updated path: {}", pts.join(" "));
    Ok(())
}
