//! Degree-7 polynomial fit of the six-robot plan.

use gp_formation::pipeline::run_pipeline;
use gp_formation::polynomial::{fit_polynomials, max_deviation, subdivided_boundaries};
use gp_formation::scenario::Scenario;

fn main() -> gp_formation::Result<()> {
    let s = Scenario::load(concat!(
        env!("CARGO_MANIFEST_DIR"),
        "/scenarios/six_robots.toml"
    ))?;
    let r = run_pipeline(&s)?;
    for pieces in [1, 2, 4] {
        let b = subdivided_boundaries(&r.graph.support_times, pieces);
        let segs = fit_polynomials(&r.trajectory, &b)?;
        println!(
            "{pieces} per interval: {} segments, max gap to the GP mean {:.4} m",
            segs.len(),
            max_deviation(&r.trajectory, &segs, 100)?
        );
    }
    let segs = fit_polynomials(
        &r.trajectory,
        &subdivided_boundaries(&r.graph.support_times, 2),
    )?;
    let first = &segs[0];
    println!(
        "robot 0, [{}, {}] s, x coefficients: {:.4?}",
        first.t0, first.t1, first.x
    );
    Ok(())
}
