//! Sampled trajectories, metrics, plan reports and plots.
//!
//! Metrics are computed from the samples as written (6 decimals), so a
//! reader of the CSV can reproduce them.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::Vector2;
use serde::Serialize;

use crate::environment::{OccupancyGrid, SignedDistanceGrid};
use crate::error::{Error, Result};
use crate::global_planner::{Corridor, FormationPlan};
use crate::gp_model::Trajectory;
use crate::pipeline::PlanResult;
use crate::polynomial::{fit_polynomials, subdivided_boundaries, PolySegment};

pub const CSV_HEADER: &str = "t,robot,x,y,vx,vy";

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Sample {
    pub t: f64,
    pub robot: usize,
    pub x: f64,
    pub y: f64,
    pub vx: f64,
    pub vy: f64,
}

/// `count` uniform times spanning the trajectory, both ends included.
pub fn uniform_times(traj: &Trajectory, count: usize) -> Vec<f64> {
    let (a, b) = (traj.start_time(), traj.end_time());
    if count < 2 {
        return vec![a];
    }
    (0..count)
        .map(|i| {
            if i + 1 == count {
                b
            } else {
                a + (b - a) * i as f64 / (count - 1) as f64
            }
        })
        .collect()
}

/// GP-interpolated samples at `count` uniform times, ordered by time then robot.
pub fn sample_trajectory(traj: &Trajectory, count: usize) -> Result<Vec<Sample>> {
    let mut out = Vec::with_capacity(count * traj.num_robots());
    for t in uniform_times(traj, count) {
        let s = traj.sample(t)?;
        for (robot, (p, v)) in s.positions.iter().zip(&s.velocities).enumerate() {
            out.push(Sample {
                t,
                robot,
                x: p.x,
                y: p.y,
                vx: v.x,
                vy: v.y,
            });
        }
    }
    Ok(out)
}

/// Formats `v` with 6 decimals, never printing `-0.000000`.
fn fixed6(v: f64) -> String {
    let s = format!("{v:.6}");
    if s.trim_start_matches('-')
        .bytes()
        .all(|b| b == b'0' || b == b'.')
    {
        s.trim_start_matches('-').to_string()
    } else {
        s
    }
}

pub fn samples_csv(samples: &[Sample]) -> String {
    let mut out = String::with_capacity(48 * (samples.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in samples {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{}",
            fixed6(s.t),
            s.robot,
            fixed6(s.x),
            fixed6(s.y),
            fixed6(s.vx),
            fixed6(s.vy)
        );
    }
    out
}

pub fn parse_samples_csv(text: &str) -> Result<Vec<Sample>> {
    let mut lines = text.lines();
    if lines.next() != Some(CSV_HEADER) {
        return Err(Error::invalid(format!(
            "sample file must start with {CSV_HEADER:?}"
        )));
    }
    lines
        .enumerate()
        .filter(|(_, l)| !l.is_empty())
        .map(|(i, line)| {
            let bad = || Error::invalid(format!("malformed sample on line {}: {line:?}", i + 2));
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 6 {
                return Err(bad());
            }
            let num = |k: usize| f[k].parse::<f64>().map_err(|_| bad());
            Ok(Sample {
                t: num(0)?,
                robot: f[1].parse().map_err(|_| bad())?,
                x: num(2)?,
                y: num(3)?,
                vx: num(4)?,
                vy: num(5)?,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HoldMetric {
    pub formation: String,
    pub start: f64,
    pub end: f64,
    /// Largest distance of any robot from its slot relative to the origin robot.
    pub max_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Metrics {
    pub samples_per_robot: usize,
    pub min_pair_distance: f64,
    pub min_obstacle_distance: f64,
    pub holds: Vec<HoldMetric>,
}

impl Metrics {
    pub fn max_formation_error(&self) -> f64 {
        self.holds.iter().map(|h| h.max_error).fold(0.0, f64::max)
    }
}

/// Groups samples by time: one position list per time stamp.
fn frames(samples: &[Sample]) -> Result<Vec<(f64, Vec<Vector2<f64>>)>> {
    let mut out: Vec<(f64, Vec<Vector2<f64>>)> = Vec::new();
    for s in samples {
        match out.last_mut() {
            Some((t, ps)) if *t == s.t => {
                if s.robot != ps.len() {
                    return Err(Error::invalid(format!(
                        "robot ids out of order at t = {}",
                        s.t
                    )));
                }
                ps.push(Vector2::new(s.x, s.y));
            }
            _ => {
                if s.robot != 0 {
                    return Err(Error::invalid(format!(
                        "samples at t = {} skip robot 0",
                        s.t
                    )));
                }
                out.push((s.t, vec![Vector2::new(s.x, s.y)]));
            }
        }
    }
    Ok(out)
}

/// Clearance, separation and formation error over the samples.
pub fn compute_metrics(
    samples: &[Sample],
    sdf: &SignedDistanceGrid,
    plan: &FormationPlan,
) -> Result<Metrics> {
    let frames = frames(samples)?;
    let mut min_pair = f64::INFINITY;
    let mut min_obs = f64::INFINITY;
    let mut holds: Vec<HoldMetric> = plan
        .entries
        .iter()
        .map(|e| HoldMetric {
            formation: e.formation.shape.to_string(),
            start: e.hold.0,
            end: e.hold.1,
            max_error: 0.0,
        })
        .collect();
    for (t, ps) in &frames {
        for (i, p) in ps.iter().enumerate() {
            min_obs = min_obs.min(sdf.query(p)?.0);
            for q in &ps[i + 1..] {
                min_pair = min_pair.min((p - q).norm());
            }
        }
        for (entry, metric) in plan.entries.iter().zip(&mut holds) {
            if *t >= entry.hold.0 - 1e-9 && *t <= entry.hold.1 + 1e-9 {
                for (_, d) in entry.formation.deviations(ps)? {
                    metric.max_error = metric.max_error.max(d);
                }
            }
        }
    }
    Ok(Metrics {
        samples_per_robot: frames.len(),
        min_pair_distance: min_pair,
        min_obstacle_distance: min_obs,
        holds,
    })
}

#[derive(Debug, Clone, Serialize)]
struct CorridorReport {
    start: [f64; 2],
    end: [f64; 2],
    half_width: f64,
    offset: f64,
    heading: f64,
}

impl From<&Corridor> for CorridorReport {
    fn from(c: &Corridor) -> Self {
        CorridorReport {
            start: [c.start.x, c.start.y],
            end: [c.end.x, c.end.y],
            half_width: c.half_width,
            offset: c.offset,
            heading: c.heading(),
        }
    }
}

#[derive(Debug, Clone, Serialize)]
struct EntryReport {
    formation: String,
    hold: [f64; 2],
    heading: f64,
    assignment: Vec<Vec<i64>>,
    corridor: Option<CorridorReport>,
}

#[derive(Debug, Clone, Serialize)]
struct SolverReport {
    iterations: usize,
    accepted_steps: usize,
    initial_cost: f64,
    final_cost: f64,
    converged: bool,
}

#[derive(Debug, Clone, Serialize)]
struct PlanReport {
    scenario: String,
    num_robots: usize,
    total_time: f64,
    tau: f64,
    start_assignment: Vec<Vec<i64>>,
    entries: Vec<EntryReport>,
    goal_assignment: Vec<Vec<i64>>,
    updated_path: Option<Vec<[f64; 2]>>,
    goals: Vec<[f64; 2]>,
    solver: SolverReport,
}

/// Plan report as pretty JSON; virtual robots appear as -1.
pub fn plan_report_json(result: &PlanResult) -> String {
    let report = PlanReport {
        scenario: result.scenario.name.clone(),
        num_robots: result.scenario.num_robots,
        total_time: result.plan.total_time,
        tau: result.plan.tau,
        start_assignment: result.assignments[0].to_rows(),
        entries: result
            .plan
            .entries
            .iter()
            .map(|e| EntryReport {
                formation: e.formation.shape.to_string(),
                hold: [e.hold.0, e.hold.1],
                heading: e.formation.heading,
                assignment: e.formation.assignment.to_rows(),
                corridor: e.corridor.as_ref().map(CorridorReport::from),
            })
            .collect(),
        goal_assignment: result.assignments.last().expect("non-empty").to_rows(),
        updated_path: result
            .global
            .as_ref()
            .map(|g| g.updated_path.points().iter().map(|p| [p.x, p.y]).collect()),
        goals: result.goals.iter().map(|p| [p.x, p.y]).collect(),
        solver: SolverReport {
            iterations: result.report.iterations,
            accepted_steps: result.report.accepted,
            initial_cost: result.report.initial_cost,
            final_cost: result.report.final_cost,
            converged: result.report.converged,
        },
    };
    serde_json::to_string_pretty(&report).expect("report serializes") + "\n"
}

const PALETTE: [&str; 10] = [
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
    "#bcbd22", "#17becf",
];

/// Plot of obstacles, corridors and per-robot paths. The y axis points up.
pub fn svg_plot(
    grid: &OccupancyGrid,
    corridors: &[Corridor],
    samples: &[Sample],
    num_robots: usize,
) -> String {
    let scale = 60.0;
    let max = grid.extent_max();
    let (w, h) = (
        (max.x - grid.origin.x) * scale,
        (max.y - grid.origin.y) * scale,
    );
    let px = |p: Vector2<f64>| ((p.x - grid.origin.x) * scale, (max.y - p.y) * scale);
    let mut out = String::new();
    let _ = writeln!(
        out,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{w:.0}" height="{h:.0}" viewBox="0 0 {w:.2} {h:.2}">"#
    );
    let _ = writeln!(out, r#"<rect width="100%" height="100%" fill="white"/>"#);
    // One rectangle per horizontal run of occupied cells.
    let cs = grid.cell_size * scale;
    for iy in 0..grid.height {
        let mut ix = 0;
        while ix < grid.width {
            if !grid.is_occupied(ix, iy) {
                ix += 1;
                continue;
            }
            let run = (ix..grid.width)
                .take_while(|&j| grid.is_occupied(j, iy))
                .count();
            let (x, y) = (ix as f64 * cs, h - (iy + 1) as f64 * cs);
            let _ = writeln!(
                out,
                r##"<rect x="{x:.2}" y="{y:.2}" width="{:.2}" height="{cs:.2}" fill="#444"/>"##,
                run as f64 * cs
            );
            ix += run;
        }
    }
    for c in corridors {
        let pts: Vec<String> = c
            .rect()
            .corners()
            .iter()
            .map(|p| {
                let (x, y) = px(*p);
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let _ = writeln!(
            out,
            r##"<polygon points="{}" fill="#9ecae1" fill-opacity="0.3" stroke="#3182bd" stroke-dasharray="4 3"/>"##,
            pts.join(" ")
        );
    }
    for robot in 0..num_robots {
        let pts: Vec<String> = samples
            .iter()
            .filter(|s| s.robot == robot)
            .map(|s| {
                let (x, y) = px(Vector2::new(s.x, s.y));
                format!("{x:.2},{y:.2}")
            })
            .collect();
        let color = PALETTE[robot % PALETTE.len()];
        let _ = writeln!(
            out,
            r#"<polyline points="{}" fill="none" stroke="{color}" stroke-width="2"/>"#,
            pts.join(" ")
        );
        if let (Some(first), Some(last)) = (pts.first(), pts.last()) {
            for (p, fill) in [(first, "white"), (last, color)] {
                let (x, y) = p.split_once(',').expect("formatted pair");
                let _ = writeln!(
                    out,
                    r#"<circle cx="{x}" cy="{y}" r="4" fill="{fill}" stroke="{color}"/>"#
                );
            }
        }
    }
    out.push_str("</svg>\n");
    out
}

pub fn poly_csv(segments: &[PolySegment]) -> String {
    let mut out = String::from("robot,segment,t0,t1,axis,c0,c1,c2,c3,c4,c5,c6,c7\n");
    for s in segments {
        for (axis, c) in [("x", &s.x), ("y", &s.y)] {
            let coeffs: Vec<String> = c.iter().map(|v| format!("{v:.9e}")).collect();
            let _ = writeln!(
                out,
                "{},{},{},{},{axis},{}",
                s.robot,
                s.index,
                fixed6(s.t0),
                fixed6(s.t1),
                coeffs.join(",")
            );
        }
    }
    out
}

/// Files written by [`write_outputs`].
#[derive(Debug, Clone)]
pub struct Written {
    pub files: Vec<PathBuf>,
    pub metrics: Metrics,
}

fn write(dir: &Path, name: &str, contents: &str, files: &mut Vec<PathBuf>) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, contents)?;
    files.push(path);
    Ok(())
}

/// Writes samples, metrics, plan report, plot and timings into `dir`, plus
/// polynomial coefficients when `poly` is set. Everything except
/// `timings.json` is deterministic.
pub fn write_outputs(result: &PlanResult, dir: &Path, poly: bool) -> Result<Written> {
    fs::create_dir_all(dir)?;
    let samples = sample_trajectory(&result.trajectory, result.scenario.export_samples)?;
    let csv = samples_csv(&samples);
    let printed = parse_samples_csv(&csv)?;
    let metrics = compute_metrics(&printed, &result.map.sdf, &result.plan)?;
    let corridors: Vec<Corridor> = result
        .global
        .as_ref()
        .map(|g| g.corridors.clone())
        .unwrap_or_default();

    let mut files = Vec::new();
    write(dir, "trajectory.csv", &csv, &mut files)?;
    write(
        dir,
        "metrics.json",
        &(serde_json::to_string_pretty(&metrics).expect("metrics serialize") + "\n"),
        &mut files,
    )?;
    write(dir, "plan.json", &plan_report_json(result), &mut files)?;
    write(
        dir,
        "plot.svg",
        &svg_plot(
            &result.map.grid,
            &corridors,
            &printed,
            result.scenario.num_robots,
        ),
        &mut files,
    )?;
    write(
        dir,
        "timings.json",
        &(serde_json::to_string_pretty(&result.timings).expect("timings serialize") + "\n"),
        &mut files,
    )?;
    if poly {
        let segments = fit_polynomials(
            &result.trajectory,
            &subdivided_boundaries(&result.graph.support_times, result.scenario.poly_pieces),
        )?;
        write(dir, "polynomials.csv", &poly_csv(&segments), &mut files)?;
    }
    Ok(Written { files, metrics })
}
