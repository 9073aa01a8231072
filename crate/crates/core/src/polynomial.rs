//! Degree-7 piecewise polynomials through the optimized support states.
//!
//! Each segment matches position and velocity of the support states at its
//! ends; acceleration and jerk are continuous across interior boundaries;
//! the remaining freedom minimizes integrated squared snap. That is an
//! equality-constrained quadratic, solved through its KKT system.

use nalgebra::{DMatrix, DVector, Vector2};
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gp_model::{SupportState, Trajectory};

pub const DEGREE: usize = 7;
const NC: usize = DEGREE + 1;

/// One robot's polynomial over `[t0, t1]`, coefficients in powers of the
/// local time `t - t0`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolySegment {
    pub robot: usize,
    pub index: usize,
    pub t0: f64,
    pub t1: f64,
    pub x: [f64; NC],
    pub y: [f64; NC],
}

fn falling(k: usize, m: usize) -> f64 {
    (0..m).map(|i| (k - i) as f64).product()
}

impl PolySegment {
    /// Derivative of the given order at absolute time `t`.
    pub fn derivative(&self, t: f64, order: usize) -> Vector2<f64> {
        let s = t - self.t0;
        // Horner on the shifted coefficients.
        let eval = |c: &[f64; NC]| {
            let mut acc = 0.0;
            for k in (order..NC).rev() {
                acc = acc * s + falling(k, order) * c[k];
            }
            acc
        };
        Vector2::new(eval(&self.x), eval(&self.y))
    }

    pub fn position(&self, t: f64) -> Vector2<f64> {
        self.derivative(t, 0)
    }

    pub fn velocity(&self, t: f64) -> Vector2<f64> {
        self.derivative(t, 1)
    }

    pub fn contains(&self, t: f64) -> bool {
        t >= self.t0 && t <= self.t1
    }
}

/// Position of `robot` at `t` from a fitted set.
pub fn evaluate(segments: &[PolySegment], robot: usize, t: f64) -> Option<Vector2<f64>> {
    segments
        .iter()
        .find(|s| s.robot == robot && s.contains(t))
        .map(|s| s.position(t))
}

/// KKT matrix for segments of the given durations, in normalized time.
fn kkt_matrix(spans: &[f64]) -> DMatrix<f64> {
    let segs = spans.len();
    let n = NC * segs;
    let m = 4 * segs + 2 * (segs - 1);
    let mut k = DMatrix::zeros(n + m, n + m);
    for (s, &h) in spans.iter().enumerate() {
        let scale = h.powi(-7);
        for a in 4..NC {
            for b in 4..NC {
                k[(NC * s + a, NC * s + b)] =
                    scale * falling(a, 4) * falling(b, 4) / (a + b - 7) as f64;
            }
        }
    }
    let mut row = n;
    let mut constrain = |k: &mut DMatrix<f64>, entries: &[(usize, f64)]| {
        for &(col, v) in entries {
            k[(row, col)] = v;
            k[(col, row)] = v;
        }
        row += 1;
    };
    for (s, &h) in spans.iter().enumerate() {
        let base = NC * s;
        let at_end = |order: usize| -> Vec<(usize, f64)> {
            (order..NC)
                .map(|j| (base + j, falling(j, order) / h.powi(order as i32)))
                .collect()
        };
        constrain(&mut k, &[(base, 1.0)]);
        constrain(&mut k, &[(base + 1, 1.0 / h)]);
        constrain(&mut k, &at_end(0));
        constrain(&mut k, &at_end(1));
        if s + 1 < segs {
            let next = NC * (s + 1);
            let hn = spans[s + 1];
            for order in [2usize, 3] {
                let mut e = at_end(order);
                e.push((next + order, -falling(order, order) / hn.powi(order as i32)));
                constrain(&mut k, &e);
            }
        }
    }
    k
}

/// Fits every robot with segments split at `boundaries`, which must increase
/// from the first to the last support time. Boundary states come from the GP
/// interpolation, which is exact at support times.
pub fn fit_polynomials(traj: &Trajectory, boundaries: &[f64]) -> Result<Vec<PolySegment>> {
    if boundaries.len() < 2 {
        return Err(Error::invalid("need at least two segment boundaries"));
    }
    if boundaries.windows(2).any(|w| !(w[1] > w[0])) {
        return Err(Error::invalid("segment boundaries must increase"));
    }
    let (first, last) = (boundaries[0], boundaries[boundaries.len() - 1]);
    if (first - traj.start_time()).abs() > 1e-9 || (last - traj.end_time()).abs() > 1e-9 {
        return Err(Error::invalid("segments must span the whole trajectory"));
    }
    let states: Vec<SupportState> = boundaries
        .iter()
        .map(|&t| traj.sample(t.clamp(traj.start_time(), traj.end_time())))
        .collect::<Result<_>>()?;
    let spans: Vec<f64> = states.windows(2).map(|w| w[1].time - w[0].time).collect();
    let segs = spans.len();
    let n = NC * segs;
    let lu = kkt_matrix(&spans).lu();

    let mut out = Vec::with_capacity(traj.num_robots() * segs);
    for robot in 0..traj.num_robots() {
        let mut coeffs = [vec![[0.0; NC]; segs], vec![[0.0; NC]; segs]];
        for (axis, store) in coeffs.iter_mut().enumerate() {
            let mut rhs = DVector::zeros(n + 4 * segs + 2 * (segs - 1));
            let mut row = n;
            for s in 0..segs {
                let (a, b) = (&states[s], &states[s + 1]);
                rhs[row] = a.positions[robot][axis];
                rhs[row + 1] = a.velocities[robot][axis];
                rhs[row + 2] = b.positions[robot][axis];
                rhs[row + 3] = b.velocities[robot][axis];
                row += if s + 1 < segs { 6 } else { 4 };
            }
            let sol = lu
                .solve(&rhs)
                .ok_or_else(|| numeric("polynomial KKT system is singular"))?;
            if sol.iter().any(|v| !v.is_finite()) {
                return Err(numeric("polynomial fit produced non-finite coefficients"));
            }
            for (s, c) in store.iter_mut().enumerate() {
                for k in 0..NC {
                    // Normalized time u = s / h, so c_k u^k = (c_k / h^k) s^k.
                    c[k] = sol[NC * s + k] / spans[s].powi(k as i32);
                }
            }
        }
        let [xs, ys] = coeffs;
        for s in 0..segs {
            out.push(PolySegment {
                robot,
                index: s,
                t0: states[s].time,
                t1: states[s + 1].time,
                x: xs[s],
                y: ys[s],
            });
        }
    }
    Ok(out)
}

fn numeric(msg: &str) -> Error {
    Error::NumericFailure {
        message: msg.into(),
        last_iterate: None,
    }
}

/// Boundaries at every support time, each interval split into `pieces`
/// equal segments.
pub fn subdivided_boundaries(support_times: &[f64], pieces: usize) -> Vec<f64> {
    let pieces = pieces.max(1);
    let mut out = Vec::with_capacity((support_times.len().saturating_sub(1)) * pieces + 1);
    for w in support_times.windows(2) {
        for j in 0..pieces {
            out.push(w[0] + (w[1] - w[0]) * j as f64 / pieces as f64);
        }
    }
    out.extend(support_times.last());
    out
}

/// Largest gap between the fitted curves and the GP trajectory over
/// `count` uniform times.
pub fn max_deviation(traj: &Trajectory, segments: &[PolySegment], count: usize) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for t in crate::export::uniform_times(traj, count) {
        let s = traj.sample(t)?;
        for (robot, p) in s.positions.iter().enumerate() {
            let q = evaluate(segments, robot, t)
                .ok_or_else(|| Error::invalid(format!("no segment covers t = {t}")))?;
            worst = worst.max((p - q).norm());
        }
    }
    Ok(worst)
}
