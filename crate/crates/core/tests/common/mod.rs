//! Independent oracles shared by the integration suites and the acceptance gate.
#![allow(dead_code)]

use std::ops::AddAssign;
use std::sync::Arc;

use gp_formation::cost_factors::{FormationSpec, HingeParams};
use gp_formation::environment::{
    build_sdf, no_obstacle_distance, OccupancyGrid, SignedDistanceGrid,
};
use gp_formation::factor_graph::{build_graph, Factor, FactorGraph, FactorKind, GraphSetup, Hold};
use gp_formation::gp_model::{gp_cov, interpolate, transition, GpParams, SupportState, Trajectory};
use gp_formation::task_assignment::{AssignmentMatrix, FormationShape};
use nalgebra::{DMatrix, DVector, Vector2};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

/// `[[a I, b I], [c I, d I]]` with `I` of size `2n`.
pub fn kron(a: f64, b: f64, c: f64, d: f64, n: usize) -> DMatrix<f64> {
    let m = 2 * n;
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    for i in 0..m {
        out[(i, i)] = a;
        out[(i, m + i)] = b;
        out[(m + i, i)] = c;
        out[(m + i, m + i)] = d;
    }
    out
}

/// Integral of `Φ(dt - s) L Qc Lᵀ Φ(dt - s)ᵀ` over `[0, dt]` by Simpson's rule,
/// exact here because the integrand is quadratic in `s`.
pub fn integrated_cov(dt: f64, qc: f64, n: usize) -> DMatrix<f64> {
    let integrand = |s: f64| {
        let r = dt - s;
        kron(qc * r * r, qc * r, qc * r, qc, n)
    };
    (integrand(0.0) + integrand(dt / 2.0) * 4.0 + integrand(dt)) * (dt / 6.0)
}

pub fn random_grid(rng: &mut ChaCha8Rng, max_side: usize) -> OccupancyGrid {
    let w = rng.random_range(1..=max_side);
    let h = rng.random_range(1..=max_side);
    let cell = [0.05, 0.1, 0.25, 1.0][rng.random_range(0..4)];
    let density = rng.random_range(0.0..0.6);
    let mut g =
        OccupancyGrid::new(Vector2::new(rng.random_range(-3.0..3.0), -1.0), cell, w, h).unwrap();
    for iy in 0..h {
        for ix in 0..w {
            if rng.random_bool(density) {
                g.set_occupied(ix, iy, true);
            }
        }
    }
    g
}

/// Nearest-center distance by scanning every cell of the opposite kind.
pub fn brute_sdf(g: &OccupancyGrid) -> Vec<f64> {
    let sentinel = no_obstacle_distance(g);
    let mut out = Vec::with_capacity(g.width * g.height);
    for iy in 0..g.height {
        for ix in 0..g.width {
            let occ = g.is_occupied(ix, iy);
            let mut best: Option<usize> = None;
            for jy in 0..g.height {
                for jx in 0..g.width {
                    if g.is_occupied(jx, jy) != occ {
                        let d2 = ix.abs_diff(jx).pow(2) + iy.abs_diff(jy).pow(2);
                        best = Some(best.map_or(d2, |b| b.min(d2)));
                    }
                }
            }
            let d = best.map_or(sentinel, |d2| (d2 as f64).sqrt() * g.cell_size);
            out.push(if occ { -d } else { d });
        }
    }
    out
}

pub fn shapes(max_slots: usize) -> Vec<FormationShape> {
    let mut out = vec![];
    for rows in 1..=max_slots {
        for cols in 1..=max_slots / rows {
            out.push(FormationShape::new(rows, cols).unwrap());
        }
    }
    out
}

/// Robots 0.. in reading order over the slots whose bit in `mask` is clear.
pub fn padded(shape: FormationShape, mask: u32) -> AssignmentMatrix {
    let mut next = 0;
    let slots = (0..shape.slots())
        .map(|i| {
            if mask >> i & 1 == 1 {
                None
            } else {
                next += 1;
                Some(next - 1)
            }
        })
        .collect();
    AssignmentMatrix::new(shape, slots).unwrap()
}

pub fn is_bijection(m: &AssignmentMatrix, n: usize) -> bool {
    let mut seen = vec![false; n];
    for id in m.slots().iter().flatten() {
        if *id >= n || seen[*id] {
            return false;
        }
        seen[*id] = true;
    }
    seen.iter().all(|&s| s)
}

/// Slot displacement `(Δcol, −Δrow)` of every robot against the team mean.
pub fn coherent(from: &AssignmentMatrix, to: &AssignmentMatrix) -> bool {
    let n = from.num_robots();
    let moves: Vec<Vector2<f64>> = (0..n)
        .map(|r| {
            let (r0, c0) = from.slot_of(r).unwrap();
            let (r1, c1) = to.slot_of(r).unwrap();
            Vector2::new(c1 as f64 - c0 as f64, r0 as f64 - r1 as f64)
        })
        .collect();
    let mean = moves.iter().sum::<Vector2<f64>>() / n as f64;
    moves.iter().all(|m| m.dot(&mean) >= -1e-12)
}

pub const KINK: f64 = 1e-4;

pub fn blocks_map() -> SignedDistanceGrid {
    let mut g = OccupancyGrid::new(Vector2::zeros(), 0.1, 80, 60).unwrap();
    for (x0, x1, y0, y1) in [(20, 28, 10, 25), (45, 60, 30, 36), (30, 34, 44, 52)] {
        for ix in x0..x1 {
            for iy in y0..y1 {
                g.set_occupied(ix, iy, true);
            }
        }
    }
    build_sdf(&g)
}

pub fn line_formation(n: usize) -> FormationSpec {
    let shape = FormationShape::new(1, n).unwrap();
    FormationSpec::new(0.6, 0.4, AssignmentMatrix::identity(shape, n).unwrap()).unwrap()
}

pub fn random_traj(rng: &mut ChaCha8Rng, times: &[f64], n: usize) -> Trajectory {
    let states = times
        .iter()
        .map(|&t| {
            let p = (0..n)
                .map(|_| Vector2::new(rng.random_range(1.5..6.5), rng.random_range(1.5..4.5)))
                .collect();
            let v = (0..n)
                .map(|_| Vector2::new(rng.random_range(-0.5..0.5), rng.random_range(-0.5..0.5)))
                .collect();
            SupportState::new(t, p, v).unwrap()
        })
        .collect();
    Trajectory::new(states).unwrap()
}

pub fn graph(
    n: usize,
    k: usize,
    n_ip: usize,
    sdf: Arc<SignedDistanceGrid>,
    prior_sigma: (f64, f64),
) -> (FactorGraph, Trajectory) {
    let gp = GpParams::uniform(1.0, n, 3.0, k).unwrap();
    let start = (0..n)
        .map(|i| Vector2::new(2.0, 2.0 + 0.7 * i as f64))
        .collect();
    let goal = (0..n)
        .map(|i| Vector2::new(6.0, 2.0 + 0.7 * i as f64))
        .collect();
    build_graph(&GraphSetup {
        gp,
        hinge: HingeParams {
            eps_obs: 0.5,
            eps_col: 1.2,
            eps_form: 0.05,
            sigma_obs: 0.1,
            sigma_col: 0.2,
            sigma_form: 0.3,
        },
        start,
        goal,
        holds: Some(vec![Hold {
            formation: line_formation(n),
            start: 0.5,
            end: 2.5,
        }]),
        interpolation_points: n_ip,
        start_sigma: prior_sigma.0,
        goal_sigma: prior_sigma.1,
        sdf,
    })
    .unwrap()
}

/// State a factor evaluates its likelihood at.
pub fn evaluated_state(f: &Factor, traj: &Trajectory) -> SupportState {
    match f.tau {
        Some(t) => {
            interpolate(&traj.states[f.key], &traj.states[f.key + 1], t)
                .unwrap()
                .state
        }
        None => traj.states[f.key].clone(),
    }
}

/// Whether the factor is evaluated within `KINK` of a point where its
/// residual is not differentiable: a hinge threshold, a zero-length
/// difference, or a node line of the bilinear distance field.
pub fn near_kink(g: &FactorGraph, f: &Factor, traj: &Trajectory) -> bool {
    let s = evaluated_state(f, traj);
    let h = &g.hinge;
    match &f.kind {
        FactorKind::Obstacle => s.positions.iter().any(|p| {
            let (d, _) = g.sdf.query(p).unwrap();
            let cs = g.sdf.cell_size;
            let node = |c: f64, o: f64| {
                let u = (c - o) / cs - 0.5;
                (u - u.round()).abs() * cs < KINK
            };
            (d - h.eps_obs).abs() < KINK || node(p.x, g.sdf.origin.x) || node(p.y, g.sdf.origin.y)
        }),
        FactorKind::Collision => {
            let p = &s.positions;
            (0..p.len()).any(|i| {
                (i + 1..p.len()).any(|j| {
                    let d = (p[i] - p[j]).norm();
                    d < KINK || (d - h.eps_col).abs() < KINK
                })
            })
        }
        FactorKind::Formation(i) => g.formations[*i]
            .deviations(&s.positions)
            .unwrap()
            .iter()
            .any(|&(_, d)| d < KINK || (d - h.eps_form).abs() < KINK),
        _ => false,
    }
}

pub fn perturbed(traj: &Trajectory, key: usize, comp: usize, h: f64) -> Trajectory {
    let mut out = traj.clone();
    let s = &traj.states[key];
    let mut flat = s.flatten();
    flat[comp] += h;
    out.states[key] = SupportState::from_flat(s.time, &flat).unwrap();
    out
}

/// Largest column-wise relative gap between the analytic Jacobian blocks and
/// central differences of the whitened residual.
pub fn jacobian_gap(g: &FactorGraph, f: &Factor, traj: &Trajectory) -> f64 {
    let lin = g.linearize_factor(f, traj).unwrap();
    let h = 1e-6;
    let mut worst: f64 = 0.0;
    for (key, block) in &lin.blocks {
        for c in 0..block.ncols() {
            let plus = g
                .linearize_factor(f, &perturbed(traj, *key, c, h))
                .unwrap()
                .residual;
            let minus = g
                .linearize_factor(f, &perturbed(traj, *key, c, -h))
                .unwrap()
                .residual;
            let fd = (plus - minus) / (2.0 * h);
            let an = block.column(c);
            worst = worst.max((&fd - an).norm() / an.norm().max(1.0));
        }
    }
    worst
}

/// Dense whitened least squares of the priors-only problem, assembled from
/// the transition and covariance matrices directly.
pub fn dense_linear_solution(
    times: &[f64],
    start: &[Vector2<f64>],
    goal: &[Vector2<f64>],
    start_sigma: f64,
    goal_sigma: f64,
) -> DVector<f64> {
    let n = start.len();
    let d = 4 * n;
    let k = times.len();
    let rest = |p: &[Vector2<f64>]| {
        let mut v = DVector::zeros(d);
        for (i, q) in p.iter().enumerate() {
            v[2 * i] = q.x;
            v[2 * i + 1] = q.y;
        }
        v
    };
    let mut h = DMatrix::zeros(k * d, k * d);
    let mut b = DVector::zeros(k * d);
    let mut add = |keys: &[usize], a: &[DMatrix<f64>], w: &DMatrix<f64>, target: &DVector<f64>| {
        // Residual a·x_keys − target with information w.
        for (i, &ki) in keys.iter().enumerate() {
            let ati = a[i].transpose() * w;
            b.rows_mut(ki * d, d).add_assign(&(&ati * target));
            for (j, &kj) in keys.iter().enumerate() {
                let blk = &ati * &a[j];
                let mut v = h.view_mut((ki * d, kj * d), (d, d));
                v += blk;
            }
        }
    };
    let eye = DMatrix::<f64>::identity(d, d);
    add(
        &[0],
        std::slice::from_ref(&eye),
        &(eye.clone() / (start_sigma * start_sigma)),
        &rest(start),
    );
    add(
        &[k - 1],
        std::slice::from_ref(&eye),
        &(eye.clone() / (goal_sigma * goal_sigma)),
        &rest(goal),
    );
    for i in 0..k - 1 {
        let dt = times[i + 1] - times[i];
        let phi = transition(dt, n).unwrap();
        let qinv = gp_cov(dt, 1.0, n).unwrap().try_inverse().unwrap();
        add(&[i, i + 1], &[phi, -eye.clone()], &qinv, &DVector::zeros(d));
    }
    h.lu().solve(&b).unwrap()
}
