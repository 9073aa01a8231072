use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Parser, Subcommand};
use nalgebra::Vector2;

use gp_formation::export::{write_outputs, Written};
use gp_formation::pipeline::{run_pipeline, PlanResult, StageTimings};
use gp_formation::replanner::{replan_goal, replan_obstacle, PlanSession};
use gp_formation::scenario::Scenario;
use gp_formation::task_assignment::{assign_transition, AssignmentMatrix, FormationShape};
use gp_formation::{Error, Result};

#[derive(Parser)]
#[command(version, about = "Formation trajectories for teams of planar robots")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Plan a scenario and write trajectory, metrics, plan report and plot.
    Plan {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Also write degree-7 polynomial coefficients.
        #[arg(long)]
        poly: bool,
    },
    /// Plan, then change the goal or add obstacles at a given time and re-solve.
    Replan {
        scenario: PathBuf,
        /// New team goal as `x,y`; defaults to the scenario's replan table.
        #[arg(long, value_parser = parse_point)]
        new_goal: Option<Vector2<f64>>,
        /// Change time in seconds.
        #[arg(long)]
        at: Option<f64>,
        /// Map cell `ix,iy` that becomes occupied (repeatable).
        #[arg(long = "add-obstacle", value_parser = parse_cell)]
        add_obstacle: Vec<(usize, usize)>,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Print the assignment for a formation change of a block-filled team.
    Assign {
        #[arg(long)]
        from: FormationShape,
        #[arg(long)]
        to: FormationShape,
        #[arg(long)]
        n: usize,
    },
    /// Run the pipeline repeatedly and print median stage times.
    Bench {
        scenario: PathBuf,
        #[arg(long, default_value_t = 10)]
        repeat: usize,
    },
    /// Like `plan`, with `--poly` to add the polynomial coefficient file.
    Export {
        scenario: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
        #[arg(long)]
        poly: bool,
    },
}

fn parse_point(s: &str) -> std::result::Result<Vector2<f64>, String> {
    let (x, y) = s.split_once(',').ok_or("expected x,y")?;
    let x: f64 = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y: f64 = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok(Vector2::new(x, y))
}

fn parse_cell(s: &str) -> std::result::Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or("expected ix,iy")?;
    let x = x.trim().parse().map_err(|e| format!("{e}"))?;
    let y = y.trim().parse().map_err(|e| format!("{e}"))?;
    Ok((x, y))
}

fn ms(d: Duration) -> f64 {
    d.as_secs_f64() * 1e3
}

fn print_written(w: &Written) {
    let m = &w.metrics;
    println!("min pairwise distance  {:.4} m", m.min_pair_distance);
    println!("min obstacle distance  {:.4} m", m.min_obstacle_distance);
    println!("max formation error    {:.4} m", m.max_formation_error());
    for f in &w.files {
        println!("wrote {}", f.display());
    }
}

fn print_plan(r: &PlanResult) {
    for e in &r.plan.entries {
        println!(
            "formation {} held [{:.2}, {:.2}] s",
            e.formation.assignment.shape(),
            e.hold.0,
            e.hold.1
        );
    }
    println!(
        "optimization: {} iterations, {} accepted, cost {:.6e} -> {:.6e}",
        r.report.iterations, r.report.accepted, r.report.initial_cost, r.report.final_cost
    );
}

fn plan(path: &Path, out: &Path, poly: bool) -> Result<()> {
    let scenario = Scenario::load(path)?;
    let result = run_pipeline(&scenario)?;
    print_plan(&result);
    print_written(&write_outputs(&result, out, poly)?);
    Ok(())
}

fn replan(
    path: &Path,
    new_goal: Option<Vector2<f64>>,
    at: Option<f64>,
    cells: &[(usize, usize)],
    out: &Path,
) -> Result<()> {
    let scenario = Scenario::load(path)?;
    let table = scenario.replan.clone();
    let at = at
        .or(table.as_ref().map(|t| t.at))
        .ok_or_else(|| Error::InvalidArgument("no change time: pass --at".into()))?;
    let new_goal = new_goal.or_else(|| {
        table
            .as_ref()
            .and_then(|t| t.new_goal)
            .map(|g| Vector2::new(g[0], g[1]))
    });
    let mut cells = cells.to_vec();
    if cells.is_empty() {
        if let Some(t) = &table {
            cells = t.add_cells.iter().map(|c| (c[0], c[1])).collect();
        }
    }
    if new_goal.is_none() && cells.is_empty() {
        return Err(Error::InvalidArgument(
            "nothing to change: pass --new-goal or --add-obstacle".into(),
        ));
    }

    let mut result = run_pipeline(&scenario)?;
    print_plan(&result);
    let mut session = PlanSession::from_result(&result);
    if !cells.is_empty() {
        let r = replan_obstacle(&mut session, &cells, at)?;
        println!(
            "obstacle replan at {at} s: {} iterations, {} accepted, {:.3} ms",
            r.iterations,
            r.accepted,
            ms(r.wall_time)
        );
    }
    if let Some(goal) = new_goal {
        let r = replan_goal(&mut session, goal, at)?;
        println!(
            "goal replan at {at} s: {} iterations, {} accepted, {:.3} ms",
            r.iterations,
            r.accepted,
            ms(r.wall_time)
        );
    }
    let (_, cold) = session.cold_solve()?;
    println!(
        "cold start on the same problem: {} iterations, {} accepted, {:.3} ms",
        cold.iterations,
        cold.accepted,
        ms(cold.wall_time)
    );

    result.trajectory = session.solution;
    result.goals = session.goals;
    result.map.sdf = session.graph.sdf.clone();
    result.map.grid = session.grid;
    result.graph = session.graph;
    print_written(&write_outputs(&result, out, false)?);
    Ok(())
}

fn assign(from: FormationShape, to: FormationShape, n: usize) -> Result<()> {
    let old = AssignmentMatrix::identity(from, n)?;
    let new = assign_transition(&old, to)?;
    println!("{from}:\n{old}");
    println!("{to}:\n{new}");
    Ok(())
}

fn median(mut v: Vec<Duration>) -> Duration {
    v.sort();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

fn bench(path: &Path, repeat: usize) -> Result<()> {
    if repeat == 0 {
        return Err(Error::InvalidArgument("--repeat must be at least 1".into()));
    }
    let scenario = Scenario::load(path)?;
    let runs: Vec<StageTimings> = (0..repeat)
        .map(|_| run_pipeline(&scenario).map(|r| r.timings))
        .collect::<Result<_>>()?;
    let col = |f: fn(&StageTimings) -> Duration| median(runs.iter().map(f).collect());
    println!(
        "{} ({} robots), median of {repeat} runs",
        scenario.name, scenario.num_robots
    );
    println!("{:<26}{:>12}", "stage", "time (ms)");
    println!(
        "{:<26}{:>12.4}",
        "formation planning",
        ms(col(|t| t.formation_planning))
    );
    println!(
        "{:<26}{:>12.4}",
        "task assignment",
        ms(col(|t| t.task_assignment))
    );
    println!(
        "{:<26}{:>12.4}",
        "trajectory optimization",
        ms(col(|t| t.trajectory_optimization))
    );
    println!("{:<26}{:>12.4}", "total", ms(col(StageTimings::total)));
    println!(
        "{:<26}{:>12.4}",
        "(map preparation)",
        ms(col(|t| t.map_preparation))
    );
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let outcome = match cli.command {
        Command::Plan {
            scenario,
            out,
            poly,
        } => plan(&scenario, &out, poly),
        Command::Export {
            scenario,
            out,
            poly,
        } => plan(&scenario, &out, poly),
        Command::Replan {
            scenario,
            new_goal,
            at,
            add_obstacle,
            out,
        } => replan(&scenario, new_goal, at, &add_obstacle, &out),
        Command::Assign { from, to, n } => assign(from, to, n),
        Command::Bench { scenario, repeat } => bench(&scenario, repeat),
    };
    match outcome {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
