use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};

use super::*;
use crate::environment::{build_sdf, OccupancyGrid};
use crate::task_assignment::{AssignmentMatrix, FormationShape};

fn open_sdf() -> Arc<SignedDistanceGrid> {
    let g = OccupancyGrid::new(Vector2::new(-1.0, -1.0), 0.1, 60, 40).unwrap();
    Arc::new(build_sdf(&g))
}

fn hinge() -> HingeParams {
    HingeParams {
        eps_obs: 0.1,
        eps_col: 0.2,
        eps_form: 0.01,
        sigma_obs: 0.05,
        sigma_col: 0.05,
        sigma_form: 0.05,
    }
}

fn setup(n: usize, k: usize, n_ip: usize) -> GraphSetup {
    let start: Vec<_> = (0..n).map(|i| Vector2::new(0.0, 0.5 * i as f64)).collect();
    let goal: Vec<_> = start.iter().map(|p| p + Vector2::new(3.0, 0.0)).collect();
    GraphSetup {
        gp: GpParams::uniform(1.0, n, 10.0, k).unwrap(),
        hinge: hinge(),
        start,
        goal,
        holds: None,
        interpolation_points: n_ip,
        start_sigma: START_SIGMA,
        goal_sigma: GOAL_SIGMA,
        sdf: open_sdf(),
    }
}

fn line_spec(n: usize) -> FormationSpec {
    let shape = FormationShape::new(n, 1).unwrap();
    FormationSpec::new(0.5, 0.0, AssignmentMatrix::identity(shape, n).unwrap()).unwrap()
}

#[test]
fn single_robot_counts() {
    let (g, init) = build_graph(&setup(1, 6, 0)).unwrap();
    assert_eq!(g.count("start-prior"), (1, 0));
    assert_eq!(g.count("goal-prior"), (1, 0));
    assert_eq!(g.count("gp-prior"), (5, 0));
    assert_eq!(g.count("obstacle"), (6, 0));
    assert_eq!(g.count("collision"), (0, 0));
    assert_eq!(init.len(), 6);
    g.validate().unwrap();
}

#[test]
fn interpolated_counts_and_formation_window() {
    let mut s = setup(3, 11, 4);
    s.holds = Some(vec![Hold {
        formation: line_spec(3),
        start: 2.0,
        end: 5.0,
    }]);
    let (g, _) = build_graph(&s).unwrap();
    assert_eq!(g.count("obstacle"), (11, 40));
    assert_eq!(g.count("collision"), (11, 40));
    // Support times 2,3,4,5 plus 4 interpolated points in each of 3 intervals.
    assert_eq!(g.count("formation"), (4, 12));
}

#[test]
fn rejects_bad_plans() {
    let mut s = setup(2, 5, 0);
    s.holds = Some(Vec::new());
    assert!(build_graph(&s).is_err());
    s.holds = Some(vec![
        Hold {
            formation: line_spec(2),
            start: 0.0,
            end: 5.0,
        },
        Hold {
            formation: line_spec(2),
            start: 4.0,
            end: 8.0,
        },
    ]);
    assert!(build_graph(&s).is_err());
    s.holds = Some(vec![Hold {
        formation: line_spec(3),
        start: 0.0,
        end: 5.0,
    }]);
    assert!(build_graph(&s).is_err());
}

#[test]
fn validate_catches_missing_gp_link() {
    let (mut g, _) = build_graph(&setup(1, 4, 0)).unwrap();
    let i = g
        .factors
        .iter()
        .position(|f| f.kind == FactorKind::GpPrior)
        .unwrap();
    g.factors.remove(i);
    assert!(g.validate().is_err());
}

#[test]
fn block_solver_matches_dense() {
    let d = 3;
    let k = 4;
    // Random-looking SPD block-tridiagonal matrix built as AᵀA + I.
    let mut a = DMatrix::zeros(k * d, k * d);
    for i in 0..k * d {
        for j in 0..k * d {
            if (i / d).abs_diff(j / d) <= 1 {
                a[(i, j)] = ((i * 7 + j * 3) % 11) as f64 / 11.0 - 0.4;
            }
        }
    }
    // Keep the product tridiagonal by only using a lower-bidiagonal factor.
    for i in 0..k * d {
        for j in 0..k * d {
            if i / d < j / d {
                a[(i, j)] = 0.0;
            }
        }
    }
    let h = a.transpose() * &a + DMatrix::identity(k * d, k * d);
    let b = DVector::from_fn(k * d, |i, _| (i as f64).sin());
    let diag: Vec<_> = (0..k)
        .map(|i| h.view((i * d, i * d), (d, d)).into_owned())
        .collect();
    let upper: Vec<_> = (0..k - 1)
        .map(|i| h.view((i * d, (i + 1) * d), (d, d)).into_owned())
        .collect();
    let rhs: Vec<_> = (0..k).map(|i| b.rows(i * d, d).into_owned()).collect();
    let x = solve_block_tridiagonal(&diag, &upper, &rhs).unwrap();
    let dense = h.lu().solve(&b).unwrap();
    for (i, xi) in x.iter().enumerate() {
        assert!((xi - dense.rows(i * d, d)).amax() < 1e-10);
    }
}

#[test]
fn gradient_matches_finite_differences() {
    let mut s = setup(2, 4, 2);
    s.start[1] = Vector2::new(0.0, 0.15);
    s.holds = Some(vec![Hold {
        formation: line_spec(2),
        start: 0.0,
        end: 10.0,
    }]);
    s.start_sigma = 0.1;
    s.goal_sigma = 0.1;
    let (g, mut traj) = build_graph(&s).unwrap();
    // Perturb velocities so nothing sits at a kink.
    for (k, st) in traj.states.iter_mut().enumerate() {
        st.velocities[0].y += 0.03 * k as f64;
        st.positions[1].x += 0.02 * k as f64;
    }
    let sys = g.linearize(&traj).unwrap();
    let grad = sys.dense_gradient();
    let h = 1e-6;
    let base: Vec<DVector<f64>> = traj.states.iter().map(|s| s.flatten()).collect();
    let dim = g.state_dim();
    for k in 0..traj.len() {
        for i in 0..dim {
            let shifted = |delta: f64| {
                let mut t = traj.clone();
                let mut v = base[k].clone();
                v[i] += delta;
                t.states[k] = SupportState::from_flat(t.states[k].time, &v).unwrap();
                g.total_cost(&t).unwrap()
            };
            let fd = (shifted(h) - shifted(-h)) / (2.0 * h);
            let an = grad[k * dim + i];
            assert!(
                (fd - an).abs() <= 1e-4 * (1.0 + an.abs()),
                "state {k} component {i}: fd {fd} vs {an}"
            );
        }
    }
    assert!((sys.cost - g.total_cost(&traj).unwrap()).abs() < 1e-9 * (1.0 + sys.cost));
}

#[test]
fn linear_problem_single_step() {
    let (g, init) = build_graph(&setup(1, 6, 0)).unwrap();
    let config = LmConfig {
        lambda_init: 0.0,
        ..LmConfig::default()
    };
    let (sol, report) = solve(&g, &init, &config).unwrap();
    assert_eq!(report.accepted, 1);
    assert!(report.converged);
    // A second solve from the optimum takes no step.
    let (_, again) = solve(&g, &sol, &config).unwrap();
    assert_eq!(again.accepted, 0);
}

#[test]
fn zero_budget_returns_init() {
    let (g, init) = build_graph(&setup(2, 5, 1)).unwrap();
    let config = LmConfig {
        max_iters: 0,
        ..LmConfig::default()
    };
    let (sol, report) = solve(&g, &init, &config).unwrap();
    assert_eq!(sol, init);
    assert!(!report.converged);
    assert_eq!(report.iterations, 0);
}

#[test]
fn pinned_states_do_not_move() {
    let (mut g, init) = build_graph(&setup(2, 6, 1)).unwrap();
    let (first, _) = solve(&g, &init, &LmConfig::default()).unwrap();
    g.pinned[0] = true;
    g.pinned[1] = true;
    let moved: Vec<_> = first.states[5]
        .positions
        .iter()
        .map(|p| p + Vector2::new(0.0, 1.0))
        .collect();
    g.set_goal(&moved).unwrap();
    let (sol, report) = solve(&g, &first, &LmConfig::default()).unwrap();
    assert!(report.accepted > 0);
    assert_eq!(sol.states[0], first.states[0]);
    assert_eq!(sol.states[1], first.states[1]);
    assert_ne!(sol.states[3], first.states[3]);
}

#[test]
fn cost_trace_never_increases() {
    let mut s = setup(3, 8, 3);
    s.start = vec![
        Vector2::new(0.0, 0.0),
        Vector2::new(0.0, 0.1),
        Vector2::new(0.0, 0.2),
    ];
    s.goal = vec![
        Vector2::new(3.0, 0.2),
        Vector2::new(3.0, 0.1),
        Vector2::new(3.0, 0.0),
    ];
    let (g, init) = build_graph(&s).unwrap();
    let (_, report) = solve(&g, &init, &LmConfig::default()).unwrap();
    assert!(report.cost_trace.windows(2).all(|w| w[1] <= w[0]));
    assert!(report.final_cost < report.initial_cost);
}
