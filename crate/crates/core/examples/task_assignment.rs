//! Formation changes by diagonal cuts, including a team with a vacancy.

use gp_formation::task_assignment::{assign_transition, AssignmentMatrix, FormationShape};

fn main() -> gp_formation::Result<()> {
    for (n, chain) in [(8, ["4x2", "2x4", "1x8"]), (7, ["4x2", "2x4", "4x2"])] {
        let shapes: Vec<FormationShape> = chain.iter().map(|s| s.parse().unwrap()).collect();
        let mut current = AssignmentMatrix::identity(shapes[0], n)?;
        println!("{n} robots, {}:\n{current}", shapes[0]);
        for &shape in &shapes[1..] {
            current = assign_transition(&current, shape)?;
            println!("-> {shape}:\n{current}");
        }
    }
    Ok(())
}
