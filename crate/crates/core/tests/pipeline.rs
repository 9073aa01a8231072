use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use gp_formation::export::{parse_samples_csv, sample_trajectory, write_outputs, Sample};
use gp_formation::pipeline::{run_pipeline, PlanResult};
use gp_formation::polynomial::{fit_polynomials, max_deviation, subdivided_boundaries};
use gp_formation::replanner::{replan_goal, replan_obstacle, PlanSession};
use gp_formation::scenario::Scenario;
use nalgebra::Vector2;
use serde_json::Value;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("scenarios")
        .join(format!("{name}.toml"))
}

fn scenario(name: &str) -> Scenario {
    Scenario::load(scenario_path(name)).unwrap()
}

fn plan(name: &str) -> PlanResult {
    run_pipeline(&scenario(name)).unwrap()
}

fn max_state_gap(
    a: &gp_formation::gp_model::Trajectory,
    b: &gp_formation::gp_model::Trajectory,
) -> f64 {
    a.states
        .iter()
        .zip(&b.states)
        .map(|(x, y)| (x.flatten() - y.flatten()).amax())
        .fold(0.0, f64::max)
}

#[test]
fn omitted_keys_take_the_published_defaults() {
    let minimal = r#"
        name = "minimal"
        num_robots = 6
        start_center = [1.0, 0.0]
        goal = [8.0, 0.0]
        [map]
        kind = "corridor"
        cell_size = 0.05
        sections = [{ length = 10.0, width = 3.0 }]
    "#;
    let s = Scenario::from_toml(minimal).unwrap();
    assert_eq!(s.spacing, 0.5);
    assert_eq!(s.inflation, 0.3);
    assert_eq!(s.tau, 2.0);
    assert_eq!(s.total_time, 10.0);
    assert_eq!(s.num_support_states, 11);
    assert_eq!(s.qc_scale, 1.0);
    assert_eq!(s.eps_obs, 0.2);
    assert_eq!(s.eps_col, 0.2);
    assert_eq!(s.eps_form, 0.01);
    assert_eq!(s.robot_radius, 0.05);

    // Noise levels per team size.
    for (n, expected) in [
        (4, (0.1, 0.1, 0.3)),
        (6, (0.4, 0.4, 0.02)),
        (10, (0.4, 0.4, 0.005)),
    ] {
        let text = minimal.replace("num_robots = 6", &format!("num_robots = {n}"));
        let h = Scenario::from_toml(&text).unwrap().hinge();
        assert_eq!(
            (h.sigma_obs, h.sigma_col, h.sigma_form),
            expected,
            "{n} robots"
        );
    }
}

#[test]
fn empty_team_is_rejected() {
    let text = r#"
        name = "nobody"
        num_robots = 0
        goal = [8.0, 0.0]
        [map]
        kind = "corridor"
        cell_size = 0.05
        sections = [{ length = 10.0, width = 3.0 }]
    "#;
    let err = Scenario::from_toml(text).unwrap_err();
    assert_eq!(err.exit_code(), 2);
}

fn entries(r: &PlanResult) -> Vec<(String, (f64, f64))> {
    r.plan
        .entries
        .iter()
        .map(|e| (e.formation.shape.to_string(), e.hold))
        .collect()
}

#[test]
fn six_robot_plan() {
    let r = plan("six_robots");
    assert_eq!(
        entries(&r),
        vec![
            ("3x2".to_string(), (1.0, 2.0)),
            ("2x3".to_string(), (4.0, 7.0)),
            ("6x1".to_string(), (9.0, 10.0)),
        ]
    );
}

#[test]
fn ten_robot_plan() {
    let r = plan("ten_robots");
    assert_eq!(
        entries(&r),
        vec![
            ("5x2".to_string(), (1.0, 2.0)),
            ("2x5".to_string(), (4.0, 7.0)),
            ("10x1".to_string(), (9.0, 10.0)),
        ]
    );
}

#[test]
fn four_robot_square_is_held_for_the_whole_mission() {
    let r = plan("four_robots");
    assert_eq!(entries(&r), vec![("2x2".to_string(), (0.0, 10.0))]);
}

#[test]
fn stage_report_has_three_stages_and_total() {
    let r = plan("six_robots");
    let t = r.timings;
    assert_eq!(
        t.total(),
        t.formation_planning + t.task_assignment + t.trajectory_optimization
    );
    let json: Value = serde_json::to_value(t).unwrap();
    for key in [
        "formation_planning",
        "task_assignment",
        "trajectory_optimization",
    ] {
        assert!(json[key].as_f64().unwrap() >= 0.0, "{key}");
    }
}

fn read_dir_sorted(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let p = e.unwrap().path();
            (
                p.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&p).unwrap(),
            )
        })
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_export_identical_bytes() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    write_outputs(&plan("six_robots"), a.path(), true).unwrap();
    write_outputs(&plan("six_robots"), b.path(), true).unwrap();
    let (fa, fb) = (read_dir_sorted(a.path()), read_dir_sorted(b.path()));
    let names: Vec<_> = fa.iter().map(|(n, _)| n.as_str()).collect();
    for expected in [
        "trajectory.csv",
        "metrics.json",
        "plan.json",
        "plot.svg",
        "timings.json",
    ] {
        assert!(names.contains(&expected), "{names:?}");
    }
    assert_eq!(fa.len(), fb.len());
    for ((na, ca), (nb, cb)) in fa.iter().zip(&fb) {
        assert_eq!(na, nb);
        if na != "timings.json" {
            assert!(ca == cb, "{na} differs between runs");
        }
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let err = write_outputs(&plan("four_robots"), &blocker.join("out"), false).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

/// Formation error recomputed from the exported samples and plan report:
/// every robot against the robot in the first real slot.
fn hold_error(frame: &[Vector2<f64>], assignment: &[Vec<i64>], heading: f64, spacing: f64) -> f64 {
    let slots: Vec<(usize, usize, usize)> = assignment
        .iter()
        .enumerate()
        .flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, id)| **id >= 0)
                .map(move |(c, id)| (*id as usize, r, c))
        })
        .collect();
    let (origin, r0, c0) = slots[0];
    let (s, c) = heading.sin_cos();
    slots
        .iter()
        .map(|&(id, r, col)| {
            let (dx, dy) = (
                (col as f64 - c0 as f64) * spacing,
                -(r as f64 - r0 as f64) * spacing,
            );
            let expected = Vector2::new(c * dx - s * dy, s * dx + c * dy);
            (frame[id] - frame[origin] - expected).norm()
        })
        .fold(0.0, f64::max)
}

#[test]
fn exported_metrics_match_recomputation_from_files() {
    for name in ["four_robots", "six_robots", "ten_robots"] {
        let r = plan(name);
        let dir = tempfile::tempdir().unwrap();
        write_outputs(&r, dir.path(), false).unwrap();
        let samples: Vec<Sample> =
            parse_samples_csv(&fs::read_to_string(dir.path().join("trajectory.csv")).unwrap())
                .unwrap();
        let metrics: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("metrics.json")).unwrap())
                .unwrap();
        let report: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("plan.json")).unwrap())
                .unwrap();

        let n = r.scenario.num_robots;
        assert_eq!(samples.len() % n, 0);
        let frames: Vec<(f64, Vec<Vector2<f64>>)> = samples
            .chunks(n)
            .map(|c| (c[0].t, c.iter().map(|s| Vector2::new(s.x, s.y)).collect()))
            .collect();
        assert_eq!(
            metrics["samples_per_robot"].as_u64().unwrap() as usize,
            frames.len()
        );

        // Uniform sample times.
        let dt = frames[1].0 - frames[0].0;
        for w in frames.windows(2) {
            assert!((w[1].0 - w[0].0 - dt).abs() < 2e-6);
        }

        let mut min_pair = f64::INFINITY;
        let mut min_obs = f64::INFINITY;
        for (_, ps) in &frames {
            for i in 0..n {
                min_obs = min_obs.min(r.map.sdf.query(&ps[i]).unwrap().0);
                for j in i + 1..n {
                    min_pair = min_pair.min((ps[i] - ps[j]).norm());
                }
            }
        }
        assert_eq!(
            metrics["min_pair_distance"].as_f64().unwrap(),
            min_pair,
            "{name}"
        );
        assert_eq!(
            metrics["min_obstacle_distance"].as_f64().unwrap(),
            min_obs,
            "{name}"
        );

        let holds = metrics["holds"].as_array().unwrap();
        let entries = report["entries"].as_array().unwrap();
        assert_eq!(holds.len(), entries.len());
        for (h, e) in holds.iter().zip(entries) {
            let (a, b) = (
                e["hold"][0].as_f64().unwrap(),
                e["hold"][1].as_f64().unwrap(),
            );
            let assignment: Vec<Vec<i64>> =
                serde_json::from_value(e["assignment"].clone()).unwrap();
            let heading = e["heading"].as_f64().unwrap();
            let worst = frames
                .iter()
                .filter(|(t, _)| *t >= a - 1e-9 && *t <= b + 1e-9)
                .map(|(_, ps)| hold_error(ps, &assignment, heading, r.scenario.spacing))
                .fold(0.0, f64::max);
            let got = h["max_error"].as_f64().unwrap();
            assert!(
                (got - worst).abs() < 1e-12,
                "{name} {a}-{b}: {got} vs {worst}"
            );
        }
    }
}

#[test]
fn empty_obstacle_update_changes_nothing() {
    let r = plan("four_robots");
    let mut session = PlanSession::from_result(&r);
    let before = session.solution.clone();
    let cost_before = session.graph.total_cost(&before).unwrap();
    let report = replan_obstacle(&mut session, &[], 3.0).unwrap().clone();
    assert!((report.final_cost - cost_before).abs() < 1e-9);
    assert_eq!(report.accepted, 0);
    assert_eq!(max_state_gap(&before, &session.solution), 0.0);
}

#[test]
fn same_goal_is_a_fixed_point() {
    let r = plan("four_robots");
    let goal = r.scenario.goal_point();
    let mut session = PlanSession::from_result(&r);
    let cost_before = session.graph.total_cost(&session.solution).unwrap();
    let report = replan_goal(&mut session, goal, 7.0).unwrap();
    assert!(report.accepted <= 1);
    assert!(
        (report.final_cost - cost_before).abs() < 1e-9,
        "{}",
        report.final_cost - cost_before
    );
}

#[test]
fn distant_obstacle_leaves_the_solution_in_place() {
    let r = plan("four_robots");
    let mut session = PlanSession::from_result(&r);
    let before = session.solution.clone();
    let cost_before = session.graph.total_cost(&before).unwrap();
    let rel_tol = session.scenario.lm.rel_tol;
    let report = replan_obstacle(&mut session, &[(99, 0), (98, 0), (99, 1)], 3.0).unwrap();
    assert!((report.final_cost - cost_before).abs() <= rel_tol * cost_before);
}

#[test]
fn obstacle_on_the_path_is_avoided() {
    let r = plan("four_robots");
    let mut session = PlanSession::from_result(&r);
    let p = session.solution.sample(6.0).unwrap().positions[0];
    let g = &session.grid;
    let ix = ((p.x - g.origin.x) / g.cell_size) as usize;
    let iy = ((p.y - g.origin.y) / g.cell_size) as usize;
    let cells: Vec<(usize, usize)> = (ix - 1..=ix + 1)
        .flat_map(|x| (iy - 1..=iy + 1).map(move |y| (x, y)))
        .collect();
    replan_obstacle(&mut session, &cells, 3.0).unwrap();
    assert!(
        session.graph.sdf.query(&p).unwrap().0 < 0.0,
        "cells cover the old position"
    );

    let samples = sample_trajectory(&session.solution, 100).unwrap();
    let worst = samples
        .iter()
        .map(|s| session.graph.sdf.query(&Vector2::new(s.x, s.y)).unwrap().0)
        .fold(f64::INFINITY, f64::min);
    assert!(worst >= 0.0, "min signed distance {worst}");
}

#[test]
fn obstacle_outside_the_map_is_rejected() {
    let r = plan("four_robots");
    let mut session = PlanSession::from_result(&r);
    let w = session.grid.width;
    assert_eq!(
        replan_obstacle(&mut session, &[(w, 0)], 3.0)
            .unwrap_err()
            .exit_code(),
        2
    );
}

#[test]
fn replan_time_outside_the_mission_is_rejected() {
    let r = plan("four_robots");
    let mut session = PlanSession::from_result(&r);
    let goal = r.scenario.goal_point();
    for t in [-0.5, 10.0, 12.0] {
        assert_eq!(
            replan_goal(&mut session, goal, t).unwrap_err().exit_code(),
            2,
            "t = {t}"
        );
    }
}

#[test]
fn polynomials_follow_the_bundled_trajectories() {
    for name in ["four_robots", "six_robots", "ten_robots"] {
        let r = plan(name);
        let bounds = subdivided_boundaries(&r.graph.support_times, r.scenario.poly_pieces);
        let segs = fit_polynomials(&r.trajectory, &bounds).unwrap();
        let gap = max_deviation(&r.trajectory, &segs, 100).unwrap();
        assert!(gap < 0.05, "{name}: {gap}");
    }
}

fn cli(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_gp-formation"))
        .args(args)
        .output()
        .unwrap()
}

fn write_scenario(dir: &Path, text: &str) -> String {
    let p = dir.join("scenario.toml");
    fs::write(&p, text).unwrap();
    p.to_string_lossy().into_owned()
}

#[test]
fn cli_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let out = out.to_str().unwrap();

    let ok = cli(&[
        "plan",
        scenario_path("four_robots").to_str().unwrap(),
        "--out",
        out,
    ]);
    assert_eq!(
        ok.status.code(),
        Some(0),
        "{}",
        String::from_utf8_lossy(&ok.stderr)
    );
    assert!(Path::new(out).join("trajectory.csv").exists());

    let missing = cli(&["plan", "/nonexistent/scenario.toml", "--out", out]);
    assert_eq!(missing.status.code(), Some(2));

    let invalid = write_scenario(
        dir.path(),
        "name = \"x\"\nnum_robots = 0\ngoal = [1.0, 0.0]\n[map]\nkind = \"corridor\"\ncell_size = 0.05\nsections = [{ length = 5.0, width = 3.0 }]\n",
    );
    assert_eq!(
        cli(&["plan", &invalid, "--out", out]).status.code(),
        Some(2)
    );

    // A corridor narrower than the inflation leaves no free space.
    let narrow = write_scenario(
        dir.path(),
        "name = \"x\"\nnum_robots = 4\nstart_center = [0.5, 0.0]\ngoal = [4.5, 0.0]\n[map]\nkind = \"corridor\"\ncell_size = 0.05\nsections = [{ length = 5.0, width = 0.4 }]\n",
    );
    assert_eq!(cli(&["plan", &narrow, "--out", out]).status.code(), Some(3));

    let assign = cli(&["assign", "--from", "4x2", "--to", "2x4", "--n", "8"]);
    assert_eq!(assign.status.code(), Some(0));
    let text = String::from_utf8_lossy(&assign.stdout);
    let rows: Vec<Vec<&str>> = text
        .lines()
        .map(|l| l.split_whitespace().collect())
        .collect();
    assert!(
        rows.contains(&vec!["0", "2", "1", "3"]) && rows.contains(&vec!["4", "6", "5", "7"]),
        "{text}"
    );

    let bad_shape = cli(&["assign", "--from", "4x2", "--to", "2x2", "--n", "8"]);
    assert_eq!(bad_shape.status.code(), Some(2));
}
