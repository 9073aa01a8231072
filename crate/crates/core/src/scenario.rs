//! Scenario files: TOML with flat mission keys plus one `[map]` table.
//!
//! Omitted keys take the defaults below; noise levels default per team size.

use std::fs;
use std::path::Path;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::cost_factors::HingeParams;
use crate::environment::OccupancyGrid;
use crate::error::{Error, Result};
use crate::factor_graph::{LmConfig, GOAL_SIGMA, START_SIGMA};
use crate::global_planner::PiecewisePath;
use crate::task_assignment::{AssignmentMatrix, FormationShape};

fn default_total_time() -> f64 {
    10.0
}
fn default_support_states() -> usize {
    11
}
fn default_interpolation_points() -> usize {
    4
}
fn default_spacing() -> f64 {
    0.5
}
fn default_inflation() -> f64 {
    0.3
}
fn default_tau() -> f64 {
    2.0
}
fn default_one() -> f64 {
    1.0
}
fn default_radius() -> f64 {
    0.05
}
fn default_eps_clearance() -> f64 {
    0.2
}
fn default_eps_form() -> f64 {
    0.01
}
fn default_start_sigma() -> f64 {
    START_SIGMA
}
fn default_goal_sigma() -> f64 {
    GOAL_SIGMA
}
fn default_poly_pieces() -> usize {
    2
}
fn default_samples() -> usize {
    101
}
fn default_wall() -> f64 {
    0.5
}

/// `(sigma_obs, sigma_col, sigma_form)` used when a scenario names none:
/// the 4-, 6- and 10-robot settings, picked by the nearest team size.
pub fn default_sigmas(num_robots: usize) -> (f64, f64, f64) {
    match num_robots {
        0..=4 => (0.1, 0.1, 0.3),
        5..=7 => (0.4, 0.4, 0.02),
        _ => (0.4, 0.4, 0.005),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorridorSection {
    pub length: f64,
    pub width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum MapSpec {
    /// Straight corridor along +x, centered on `y = 0`, made of sections of
    /// varying width. Everything outside the sections is wall.
    Corridor {
        cell_size: f64,
        sections: Vec<CorridorSection>,
        /// Wall thickness beyond the widest section.
        #[serde(default = "default_wall")]
        wall: f64,
    },
    /// ASCII occupancy rows, first row on top; `.` free, `#` occupied.
    Grid {
        cell_size: f64,
        #[serde(default)]
        origin: [f64; 2],
        rows: String,
    },
}

/// A goal change or obstacle to replay against a solved plan.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplanSpec {
    pub at: f64,
    #[serde(default)]
    pub new_goal: Option<[f64; 2]>,
    /// Map cells `[ix, iy]` that become occupied.
    #[serde(default)]
    pub add_cells: Vec<[usize; 2]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: String,
    pub num_robots: usize,
    /// Team goal: center of the final formation.
    pub goal: [f64; 2],
    /// Explicit start positions, one per robot.
    #[serde(default)]
    pub start: Option<Vec<[f64; 2]>>,
    /// Center of the starting block when `start` is omitted.
    #[serde(default)]
    pub start_center: Option<[f64; 2]>,
    /// Shape of the starting block; robots fill it in reading order.
    #[serde(default)]
    pub start_formation: Option<String>,
    /// Holds this formation for the whole mission instead of planning one
    /// per corridor section.
    #[serde(default)]
    pub formation: Option<String>,
    /// Formation heading in radians for fixed-formation missions.
    #[serde(default)]
    pub heading: f64,
    /// Interior path points for planning on grid maps.
    #[serde(default)]
    pub waypoints: Vec<[f64; 2]>,

    #[serde(default = "default_total_time")]
    pub total_time: f64,
    #[serde(default = "default_support_states")]
    pub num_support_states: usize,
    #[serde(default = "default_interpolation_points")]
    pub interpolation_points: usize,
    #[serde(default = "default_spacing")]
    pub spacing: f64,
    #[serde(default = "default_inflation")]
    pub inflation: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_one")]
    pub qc_scale: f64,
    #[serde(default = "default_radius")]
    pub robot_radius: f64,
    #[serde(default = "default_eps_clearance")]
    pub eps_obs: f64,
    #[serde(default = "default_eps_clearance")]
    pub eps_col: f64,
    #[serde(default = "default_eps_form")]
    pub eps_form: f64,
    #[serde(default)]
    pub sigma_obs: Option<f64>,
    #[serde(default)]
    pub sigma_col: Option<f64>,
    #[serde(default)]
    pub sigma_form: Option<f64>,
    #[serde(default = "default_start_sigma")]
    pub start_sigma: f64,
    #[serde(default = "default_goal_sigma")]
    pub goal_sigma: f64,
    /// Uniform samples written to the trajectory export.
    #[serde(default = "default_samples")]
    pub export_samples: usize,
    /// Polynomial segments per support interval in the coefficient export.
    #[serde(default = "default_poly_pieces")]
    pub poly_pieces: usize,
    #[serde(default)]
    pub lm: LmConfig,
    pub map: MapSpec,
    #[serde(default)]
    pub replan: Option<ReplanSpec>,
}

fn scenario_err(msg: impl Into<String>) -> Error {
    Error::Scenario(msg.into())
}

fn vec2(p: [f64; 2]) -> Vector2<f64> {
    Vector2::new(p[0], p[1])
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).map_err(|e| scenario_err(e.to_string()))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)
            .map_err(|e| scenario_err(format!("cannot read {}: {e}", path.display())))?;
        let mut s = Self::from_toml(&text)?;
        if s.name.is_empty() {
            s.name = path
                .file_stem()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default();
        }
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_robots == 0 {
            return Err(scenario_err("num_robots must be at least 1"));
        }
        if self.num_support_states < 2 {
            return Err(scenario_err("num_support_states must be at least 2"));
        }
        if self.export_samples < 2 {
            return Err(scenario_err("export_samples must be at least 2"));
        }
        if self.poly_pieces == 0 {
            return Err(scenario_err("poly_pieces must be at least 1"));
        }
        let positive = [
            ("total_time", self.total_time),
            ("spacing", self.spacing),
            ("qc_scale", self.qc_scale),
            ("eps_form", self.eps_form),
            ("start_sigma", self.start_sigma),
            ("goal_sigma", self.goal_sigma),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(scenario_err(format!("{name} must be positive, got {v}")));
            }
        }
        let non_negative = [
            ("inflation", self.inflation),
            ("tau", self.tau),
            ("robot_radius", self.robot_radius),
            ("eps_obs", self.eps_obs),
            ("eps_col", self.eps_col),
        ];
        for (name, v) in non_negative {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(scenario_err(format!(
                    "{name} must be non-negative, got {v}"
                )));
            }
        }
        self.hinge()
            .validate()
            .map_err(|e| scenario_err(e.to_string()))?;
        self.lm
            .validate()
            .map_err(|e| scenario_err(e.to_string()))?;
        match &self.start {
            Some(s) if s.len() != self.num_robots => {
                return Err(scenario_err(format!(
                    "{} start positions for {} robots",
                    s.len(),
                    self.num_robots
                )))
            }
            None if self.start_center.is_none() => {
                return Err(scenario_err("give either start or start_center"))
            }
            _ => {}
        }
        if let Some(f) = &self.formation {
            self.parse_shape(f)?;
        }
        if self.start.is_none() {
            self.start_shape()?;
        }
        match &self.map {
            MapSpec::Corridor {
                cell_size,
                sections,
                wall,
            } => {
                if !(*cell_size > 0.0) || !(*wall >= 0.0) {
                    return Err(scenario_err(
                        "corridor cell_size must be positive, wall non-negative",
                    ));
                }
                if sections.is_empty() {
                    return Err(scenario_err("corridor map needs at least one section"));
                }
                if sections.iter().any(|s| !(s.length > 0.0 && s.width > 0.0)) {
                    return Err(scenario_err(
                        "corridor sections need positive length and width",
                    ));
                }
            }
            MapSpec::Grid { cell_size, .. } => {
                if !(*cell_size > 0.0) {
                    return Err(scenario_err("grid cell_size must be positive"));
                }
            }
        }
        if let Some(r) = &self.replan {
            if !(r.at >= 0.0 && r.at < self.total_time) {
                return Err(scenario_err(format!(
                    "replan time {} outside [0, {})",
                    r.at, self.total_time
                )));
            }
        }
        Ok(())
    }

    fn parse_shape(&self, text: &str) -> Result<FormationShape> {
        let shape: FormationShape = text
            .parse()
            .map_err(|e: Error| scenario_err(e.to_string()))?;
        if shape.slots() < self.num_robots {
            return Err(scenario_err(format!(
                "formation {shape} has room for {} robots, team has {}",
                shape.slots(),
                self.num_robots
            )));
        }
        Ok(shape)
    }

    /// Fixed formation, if the scenario names one.
    pub fn fixed_shape(&self) -> Result<Option<FormationShape>> {
        self.formation
            .as_deref()
            .map(|f| self.parse_shape(f))
            .transpose()
    }

    /// Shape of the starting block: `start_formation`, else the fixed
    /// formation, else a single row.
    pub fn start_shape(&self) -> Result<FormationShape> {
        match (&self.start_formation, &self.formation) {
            (Some(f), _) | (None, Some(f)) => self.parse_shape(f),
            (None, None) => FormationShape::new(1, self.num_robots),
        }
    }

    pub fn hinge(&self) -> HingeParams {
        let (so, sc, sf) = default_sigmas(self.num_robots);
        HingeParams {
            eps_obs: self.eps_obs,
            eps_col: self.eps_col,
            eps_form: self.eps_form,
            sigma_obs: self.sigma_obs.unwrap_or(so),
            sigma_col: self.sigma_col.unwrap_or(sc),
            sigma_form: self.sigma_form.unwrap_or(sf),
        }
    }

    pub fn goal_point(&self) -> Vector2<f64> {
        vec2(self.goal)
    }

    /// Start positions indexed by robot id, with the starting assignment.
    pub fn start_positions(&self, heading: f64) -> Result<(Vec<Vector2<f64>>, AssignmentMatrix)> {
        let shape = self.start_shape()?;
        let assignment = AssignmentMatrix::identity(shape, self.num_robots)?;
        if let Some(s) = &self.start {
            return Ok((s.iter().copied().map(vec2).collect(), assignment));
        }
        let center = vec2(self.start_center.expect("validated"));
        let anchor = center - shape.center_offset(self.spacing, heading);
        let positions = crate::task_assignment::goals_from_assignment(
            &assignment,
            shape,
            self.spacing,
            anchor,
            heading,
        )?;
        Ok((positions, assignment))
    }

    /// Team center at the start.
    pub fn start_point(&self) -> Vector2<f64> {
        match (&self.start_center, &self.start) {
            (Some(c), _) => vec2(*c),
            (None, Some(s)) => s.iter().map(|p| vec2(*p)).sum::<Vector2<f64>>() / s.len() as f64,
            (None, None) => Vector2::zeros(),
        }
    }

    /// Occupancy grid of the map (not inflated).
    pub fn occupancy(&self) -> Result<OccupancyGrid> {
        match &self.map {
            MapSpec::Grid {
                cell_size,
                origin,
                rows,
            } => OccupancyGrid::from_ascii(rows, *cell_size, vec2(*origin))
                .map_err(|e| scenario_err(e.to_string())),
            MapSpec::Corridor {
                cell_size,
                sections,
                wall,
            } => {
                let cs = *cell_size;
                let cells = |len: f64| (len / cs).round() as usize;
                let widest = sections.iter().map(|s| s.width).fold(0.0, f64::max);
                let half_height = cells(0.5 * widest + wall);
                let height = 2 * half_height;
                let mut bounds = Vec::with_capacity(sections.len());
                let mut x = 0;
                for s in sections {
                    x += cells(s.length);
                    bounds.push((x, cells(0.5 * s.width)));
                }
                let width = x;
                if width == 0 || height == 0 {
                    return Err(scenario_err("corridor map has no cells"));
                }
                let origin = Vector2::new(0.0, -(half_height as f64) * cs);
                let mut grid = OccupancyGrid::new(origin, cs, width, height)
                    .map_err(|e| scenario_err(e.to_string()))?;
                let mut section = 0;
                for ix in 0..width {
                    while ix >= bounds[section].0 {
                        section += 1;
                    }
                    let half = bounds[section].1;
                    for iy in 0..height {
                        // Rows are counted outward from the centerline.
                        let from_center = if iy >= half_height {
                            iy - half_height
                        } else {
                            half_height - 1 - iy
                        };
                        grid.set_occupied(ix, iy, from_center >= half);
                    }
                }
                Ok(grid)
            }
        }
    }

    /// Path the global planner follows: start center, breakpoints, goal.
    /// On corridor maps each breakpoint sits where the inflated free width
    /// changes, i.e. the narrower section is extended by the inflation.
    pub fn planning_path(&self) -> Result<PiecewisePath> {
        let mut points = vec![self.start_point()];
        match &self.map {
            MapSpec::Corridor { sections, .. } => {
                let mut x = 0.0;
                for pair in sections.windows(2) {
                    x += pair[0].length;
                    if pair[1].width < pair[0].width {
                        points.push(Vector2::new(x - self.inflation, 0.0));
                    } else if pair[1].width > pair[0].width {
                        points.push(Vector2::new(x + self.inflation, 0.0));
                    }
                }
            }
            MapSpec::Grid { .. } => points.extend(self.waypoints.iter().copied().map(vec2)),
        }
        points.push(self.goal_point());
        PiecewisePath::new(points).map_err(|e| scenario_err(e.to_string()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        num_robots = 2
        goal = [4.0, 0.0]
        start_center = [0.5, 0.0]
        [map]
        kind = "grid"
        cell_size = 0.5
        rows = """
        ..........
        ..........
        """
    "#;

    #[test]
    fn defaults_fill_in() {
        let s = Scenario::from_toml(MINIMAL).unwrap();
        assert_eq!(s.total_time, 10.0);
        assert_eq!(s.num_support_states, 11);
        assert_eq!(s.interpolation_points, 4);
        assert_eq!((s.spacing, s.inflation, s.tau), (0.5, 0.3, 2.0));
        assert_eq!((s.eps_obs, s.eps_col, s.eps_form), (0.2, 0.2, 0.01));
        assert_eq!(s.robot_radius, 0.05);
        assert_eq!(s.qc_scale, 1.0);
        let h = s.hinge();
        assert_eq!((h.sigma_obs, h.sigma_col, h.sigma_form), (0.1, 0.1, 0.3));
        assert_eq!(s.lm, LmConfig::default());
    }

    #[test]
    fn sigma_defaults_by_team_size() {
        assert_eq!(default_sigmas(6), (0.4, 0.4, 0.02));
        assert_eq!(default_sigmas(10), (0.4, 0.4, 0.005));
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            Scenario::from_toml(&MINIMAL.replace("num_robots = 2", "num_robots = 0")),
            Err(Error::Scenario(_))
        ));
        assert!(Scenario::from_toml(&MINIMAL.replace("goal", "gaol")).is_err());
        assert!(Scenario::from_toml(&format!("{MINIMAL}\nnum_support_states = 1")).is_err());
    }

    #[test]
    fn corridor_map_walls() {
        let s = Scenario::from_toml(
            r#"
            num_robots = 1
            goal = [2.5, 0.0]
            start_center = [0.5, 0.0]
            inflation = 0.2
            [map]
            kind = "corridor"
            cell_size = 0.1
            wall = 0.2
            sections = [{ length = 1.0, width = 1.0 }, { length = 2.0, width = 0.6 }]
            "#,
        )
        .unwrap();
        let g = s.occupancy().unwrap();
        assert_eq!((g.width, g.height), (30, 14));
        // First section: free rows within 0.5 of the centerline.
        let free_rows = |ix| (0..g.height).filter(|&iy| !g.is_occupied(ix, iy)).count();
        assert_eq!(free_rows(5), 10);
        assert_eq!(free_rows(15), 6);
        let path = s.planning_path().unwrap();
        assert_eq!(path.points().len(), 3);
        assert!((path.points()[1].x - 0.8).abs() < 1e-12);
    }
}
