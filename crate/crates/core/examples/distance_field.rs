//! Occupancy grid, inflation and the signed distance field.

use gp_formation::environment::{build_sdf, OccupancyGrid};
use nalgebra::Vector2;

fn main() -> gp_formation::Result<()> {
    let grid = OccupancyGrid::from_ascii(
        "\
..........
..........
...###....
...###....
..........
..........",
        0.5,
        Vector2::zeros(),
    )?;
    let sdf = build_sdf(&grid);
    for iy in (0..grid.height).rev() {
        let row: Vec<String> = (0..grid.width)
            .map(|ix| format!("{:5.2}", sdf.value(ix, iy)))
            .collect();
        println!("{}", row.join(" "));
    }
    for p in [
        Vector2::new(0.4, 0.4),
        Vector2::new(2.0, 1.6),
        Vector2::new(4.6, 2.9),
    ] {
        let (d, g) = sdf.query(&p)?;
        println!(
            "at ({:.1}, {:.1}): d = {d:.3}, grad = ({:.3}, {:.3})",
            p.x, p.y, g.x, g.y
        );
    }
    let inflated = grid.inflate(0.5);
    println!(
        "occupied cells: {} raw, {} inflated by 0.5 m",
        grid.occupied_count(),
        inflated.occupied_count()
    );
    Ok(())
}
