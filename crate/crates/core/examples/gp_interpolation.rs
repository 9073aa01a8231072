//! Constant-velocity GP prior: covariance blocks, prior error and the
//! interpolated mean between two support states.

use gp_formation::gp_model::{gp_cov, gp_prior_error, interpolate, SupportState};
use nalgebra::Vector2;

fn main() -> gp_formation::Result<()> {
    let q = gp_cov(1.0, 1.0, 1)?;
    println!("covariance over 1 s (x-axis rows of [p, v]):");
    println!(
        "  [{:.4} {:.4}]\n  [{:.4} {:.4}]",
        q[(0, 0)],
        q[(0, 2)],
        q[(2, 0)],
        q[(2, 2)]
    );

    let a = SupportState::new(
        0.0,
        vec![Vector2::new(0.0, 0.0)],
        vec![Vector2::new(1.0, 0.0)],
    )?;
    let b = SupportState::new(
        2.0,
        vec![Vector2::new(2.0, 1.0)],
        vec![Vector2::new(1.0, 0.0)],
    )?;
    println!("prior error: {:?}", gp_prior_error(&a, &b)?.as_slice());

    for i in 0..=8 {
        let t = 0.25 * i as f64;
        let s = interpolate(&a, &b, t)?.state;
        let (p, v) = (s.positions[0], s.velocities[0]);
        println!(
            "t={t:4.2}  p=({:6.3}, {:6.3})  v=({:6.3}, {:6.3})",
            p.x, p.y, v.x, v.y
        );
    }
    Ok(())
}
