//! Formation planning through width-varying corridors: safe rectangles per
//! path segment, the widest rectangular formation each admits, breakpoint
//! adjustment so transitions happen in the wider section, and a hold-time
//! schedule.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::cost_factors::FormationSpec;
use crate::environment::{FreeSpaceIndex, Rect};
use crate::error::{Error, Result};
use crate::task_assignment::FormationShape;

const LEN_TOL: f64 = 1e-9;

/// Polyline `p_0 -> ... -> p_M` followed by the team's formation center.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PiecewisePath {
    points: Vec<Vector2<f64>>,
}

impl PiecewisePath {
    pub fn new(points: Vec<Vector2<f64>>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::invalid("a path needs at least two points"));
        }
        if let Some(i) = points
            .windows(2)
            .position(|w| (w[1] - w[0]).norm() <= LEN_TOL)
        {
            return Err(Error::invalid(format!(
                "path points {i} and {} coincide",
                i + 1
            )));
        }
        if points.iter().any(|p| !(p.x.is_finite() && p.y.is_finite())) {
            return Err(Error::invalid("path points must be finite"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[Vector2<f64>] {
        &self.points
    }

    pub fn num_segments(&self) -> usize {
        self.points.len() - 1
    }

    pub fn segment(&self, i: usize) -> (Vector2<f64>, Vector2<f64>) {
        (self.points[i], self.points[i + 1])
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.points
            .windows(2)
            .map(|w| (w[1] - w[0]).norm())
            .collect()
    }
}

/// Obstacle-free rectangle around one path segment.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Corridor {
    pub start: Vector2<f64>,
    pub end: Vector2<f64>,
    pub half_width: f64,
    /// Sideways shift of the rectangle, positive to the left of travel.
    pub offset: f64,
}

impl Corridor {
    pub fn length(&self) -> f64 {
        (self.end - self.start).norm()
    }

    pub fn heading(&self) -> f64 {
        let d = self.end - self.start;
        d.y.atan2(d.x)
    }

    pub fn rect(&self) -> Rect {
        Rect::from_segment(self.start, self.end, self.half_width, self.offset)
    }
}

/// Largest number of robots a corridor can hold side by side.
fn robots_across(half_width: f64, d0: f64) -> usize {
    ((2.0 * half_width / d0) + LEN_TOL).floor() as usize + 1
}

/// Widest free rectangle containing segment `a -> b`. Starts from the width
/// of an `N`-robot column and, at each width, tries sideways shifts of one
/// cell at a time (left, right, further left, ...) before shrinking by a cell.
pub fn construct_rsfc(
    free: &FreeSpaceIndex,
    a: Vector2<f64>,
    b: Vector2<f64>,
    num_robots: usize,
    d0: f64,
) -> Result<Corridor> {
    if num_robots == 0 || !(d0 > 0.0) {
        return Err(Error::invalid(
            "corridor search needs robots and a positive spacing",
        ));
    }
    if (b - a).norm() <= LEN_TOL {
        return Err(Error::invalid("corridor segment has zero length"));
    }
    let cell = free.grid().cell_size;
    let min_half = 0.5 * d0;
    let initial = ((num_robots - 1) as f64 * d0 / 2.0).max(min_half);
    let shrink_steps = ((initial - min_half) / cell + LEN_TOL).floor() as usize;
    for s in 0..=shrink_steps {
        let half_width = initial - s as f64 * cell;
        // Any shift beyond the half-width would leave the segment uncovered.
        let max_shift = (half_width / cell + LEN_TOL).floor() as i64;
        for j in 0..=2 * max_shift {
            let k = (j + 1) / 2;
            let offset = if j % 2 == 1 { k } else { -k } as f64 * cell;
            let corridor = Corridor {
                start: a,
                end: b,
                half_width,
                offset,
            };
            if free.is_free(&corridor.rect()) {
                return Ok(corridor);
            }
        }
    }
    Err(Error::infeasible(format!(
        "no free corridor of half-width {min_half} around ({:.3}, {:.3}) -> ({:.3}, {:.3})",
        a.x, a.y, b.x, b.y
    )))
}

/// Rectangle shape for `N` robots in a corridor. Rows run across the
/// corridor; the largest divisor of `N` that fits is preferred so no slot is
/// left empty, falling back to the widest fit with vacancies.
pub fn formation_from_corridor(
    corridor: &Corridor,
    num_robots: usize,
    d0: f64,
) -> Result<FormationShape> {
    if num_robots == 0 || !(d0 > 0.0) {
        return Err(Error::invalid(
            "formation needs robots and a positive spacing",
        ));
    }
    if !(corridor.half_width >= 0.0) {
        return Err(Error::infeasible("corridor has no width"));
    }
    let k_fit = robots_across(corridor.half_width, d0).min(num_robots);
    let divisor = (2..=k_fit).rev().find(|&k| num_robots.is_multiple_of(k));
    let rows = match divisor {
        Some(k) => k,
        None => k_fit,
    };
    FormationShape::new(rows, num_robots.div_ceil(rows))
}

/// Moves each interior breakpoint into the wider neighbouring corridor by
/// half the along-track length of the narrower side's formation plus one
/// cell, so the longer formation is assembled before the narrow part starts.
pub fn update_path(
    path: &PiecewisePath,
    corridors: &[Corridor],
    shapes: &[FormationShape],
    d0: f64,
    cell: f64,
) -> Result<PiecewisePath> {
    let m = path.num_segments();
    if corridors.len() != m || shapes.len() != m {
        return Err(Error::invalid(format!(
            "{m} segments but {} corridors and {} formations",
            corridors.len(),
            shapes.len()
        )));
    }
    let pts = path.points();
    let mut moved = pts.to_vec();
    for i in 1..m {
        // Segment i-1 arrives at p_i, segment i leaves it.
        let into_previous = corridors[i - 1].half_width > corridors[i].half_width;
        let narrow = if into_previous { i } else { i - 1 };
        let shift = (shapes[narrow].cols - 1) as f64 * d0 / 2.0 + cell;
        let toward = if into_previous {
            pts[i - 1]
        } else {
            pts[i + 1]
        };
        let dir = (toward - pts[i]).normalize();
        moved[i] = pts[i] + dir * shift;
    }
    for i in 0..m {
        let before = pts[i + 1] - pts[i];
        let after = moved[i + 1] - moved[i];
        if after.dot(&before) <= LEN_TOL {
            return Err(Error::infeasible(format!(
                "breakpoint shifts consume segment {i} of length {:.3}",
                before.norm()
            )));
        }
    }
    PiecewisePath::new(moved)
}

/// Hold intervals proportional to segment length, with a lead-in of `tau/2`
/// and gaps of `tau` between holds; the last hold ends at `total_time`.
pub fn allocate_times(path: &PiecewisePath, tau: f64, total_time: f64) -> Result<Vec<(f64, f64)>> {
    if !(tau >= 0.0) || !(total_time > 0.0) {
        return Err(Error::invalid(
            "schedule needs tau >= 0 and a positive total time",
        ));
    }
    let lengths = path.lengths();
    let m = lengths.len();
    let budget = total_time - tau / 2.0 - (m - 1) as f64 * tau;
    if !(budget > 0.0) {
        return Err(Error::infeasible(format!(
            "{m} holds with gap {tau} do not fit in {total_time}"
        )));
    }
    let total: f64 = lengths.iter().sum();
    let mut holds = Vec::with_capacity(m);
    let mut start = tau / 2.0;
    let mut covered = 0.0;
    for (i, len) in lengths.iter().enumerate() {
        covered += len;
        let end = if i + 1 == m {
            total_time
        } else {
            // Nanosecond resolution keeps round schedules free of ulp noise.
            let t = tau / 2.0 + i as f64 * tau + budget * covered / total;
            (t * 1e9).round() / 1e9
        };
        holds.push((start, end));
        start = end + tau;
    }
    Ok(holds)
}

/// Output of the geometric planning stages, before robots are assigned.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GlobalPlan {
    pub corridors: Vec<Corridor>,
    pub shapes: Vec<FormationShape>,
    pub updated_path: PiecewisePath,
    pub holds: Vec<(f64, f64)>,
}

impl GlobalPlan {
    pub fn headings(&self) -> Vec<f64> {
        self.corridors.iter().map(Corridor::heading).collect()
    }
}

/// Corridors, formations, updated breakpoints and schedule for `path`.
pub fn plan_formations(
    free: &FreeSpaceIndex,
    path: &PiecewisePath,
    num_robots: usize,
    d0: f64,
    tau: f64,
    total_time: f64,
) -> Result<GlobalPlan> {
    let corridors = (0..path.num_segments())
        .map(|i| {
            let (a, b) = path.segment(i);
            construct_rsfc(free, a, b, num_robots, d0)
        })
        .collect::<Result<Vec<_>>>()?;
    let shapes = corridors
        .iter()
        .map(|c| formation_from_corridor(c, num_robots, d0))
        .collect::<Result<Vec<_>>>()?;
    let updated_path = update_path(path, &corridors, &shapes, d0, free.grid().cell_size)?;
    let holds = allocate_times(&updated_path, tau, total_time)?;
    Ok(GlobalPlan {
        corridors,
        shapes,
        updated_path,
        holds,
    })
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanEntry {
    pub formation: FormationSpec,
    pub hold: (f64, f64),
    /// Absent for fixed-formation missions.
    pub corridor: Option<Corridor>,
}

/// Formations the team holds, each with its time window.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FormationPlan {
    pub entries: Vec<PlanEntry>,
    pub tau: f64,
    pub total_time: f64,
}

impl FormationPlan {
    /// One formation held for the whole mission.
    pub fn fixed(formation: FormationSpec, total_time: f64) -> Self {
        FormationPlan {
            entries: vec![PlanEntry {
                formation,
                hold: (0.0, total_time),
                corridor: None,
            }],
            tau: 0.0,
            total_time,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::invalid("formation plan is empty"));
        }
        let mut prev_end: Option<f64> = None;
        for e in &self.entries {
            let (a, b) = e.hold;
            if !(a <= b) || a < -LEN_TOL || b > self.total_time + LEN_TOL {
                return Err(Error::invalid(format!(
                    "hold [{a}, {b}] outside [0, {}]",
                    self.total_time
                )));
            }
            if let Some(p) = prev_end {
                if a - p < self.tau - LEN_TOL {
                    return Err(Error::invalid(format!(
                        "gap before hold [{a}, {b}] is shorter than {}",
                        self.tau
                    )));
                }
            }
            prev_end = Some(b);
        }
        Ok(())
    }
}
