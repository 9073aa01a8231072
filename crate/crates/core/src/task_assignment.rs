//! Robot-to-slot assignment for rectangular formations.
//!
//! A formation with `rows > cols` is column-major, one with `cols > rows` is
//! row-major. Rows are stacked across the direction of travel and columns
//! along it, so slot `(row, col)` sits at `(col * d0, -row * d0)` in the
//! formation frame whose origin is the upper-left slot `(0, 0)`.
//!
//! When the number of columns grows, occupants of the old matrix are cut
//! along anti-diagonals from the top-left corner; each cut is queued in
//! ascending column order and poured row by row into the new matrix. A cut
//! that does not fit in the current row fills the remaining vacancies from
//! the tail of its queue and opens the next row with its head. When the
//! number of columns shrinks, the exact inverse of that mapping is used, so a
//! transition followed by its reverse restores the original matrix.

use std::fmt;
use std::str::FromStr;

use nalgebra::{Rotation2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Formation dimensions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FormationShape {
    pub rows: usize,
    pub cols: usize,
}

impl FormationShape {
    pub fn new(rows: usize, cols: usize) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::invalid(format!(
                "formation {rows}x{cols} has no slots"
            )));
        }
        Ok(Self { rows, cols })
    }

    pub fn slots(&self) -> usize {
        self.rows * self.cols
    }

    /// Offset of slot `(row, col)` from the origin slot, in the formation frame
    /// rotated by `heading`.
    pub fn slot_offset(row: usize, col: usize, spacing: f64, heading: f64) -> Vector2<f64> {
        Rotation2::new(heading) * Vector2::new(col as f64 * spacing, -(row as f64) * spacing)
    }

    /// Offset of the geometric center of the full rectangle from the origin slot.
    pub fn center_offset(&self, spacing: f64, heading: f64) -> Vector2<f64> {
        Rotation2::new(heading)
            * Vector2::new(
                0.5 * (self.cols - 1) as f64 * spacing,
                -0.5 * (self.rows - 1) as f64 * spacing,
            )
    }
}

impl fmt::Display for FormationShape {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.rows, self.cols)
    }
}

impl FromStr for FormationShape {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (r, c) = s
            .split_once(['x', 'X', '×'])
            .ok_or_else(|| Error::invalid(format!("expected RxC, got {s:?}")))?;
        let parse = |v: &str| {
            v.trim()
                .parse::<usize>()
                .map_err(|_| Error::invalid(format!("expected RxC, got {s:?}")))
        };
        Self::new(parse(r)?, parse(c)?)
    }
}

/// Occupant of every slot, row-major; `None` marks a virtual robot.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssignmentMatrix {
    shape: FormationShape,
    slots: Vec<Option<usize>>,
}

impl AssignmentMatrix {
    /// Validates that robots `0..N` each appear exactly once.
    pub fn new(shape: FormationShape, slots: Vec<Option<usize>>) -> Result<Self> {
        if slots.len() != shape.slots() {
            return Err(Error::invalid(format!(
                "{shape} formation needs {} slots, got {}",
                shape.slots(),
                slots.len()
            )));
        }
        let real: Vec<usize> = slots.iter().flatten().copied().collect();
        let mut seen = vec![false; real.len()];
        for &id in &real {
            if id >= real.len() || std::mem::replace(&mut seen[id], true) {
                return Err(Error::invalid(format!(
                    "robot ids must be 0..{} without repeats",
                    real.len()
                )));
            }
        }
        Ok(Self { shape, slots })
    }

    /// Robots `0..num_robots` in reading order, virtual robots in the trailing slots.
    pub fn identity(shape: FormationShape, num_robots: usize) -> Result<Self> {
        if num_robots > shape.slots() {
            return Err(Error::invalid(format!(
                "{num_robots} robots do not fit a {shape} formation"
            )));
        }
        let slots = (0..shape.slots())
            .map(|i| (i < num_robots).then_some(i))
            .collect();
        Ok(Self { shape, slots })
    }

    pub fn shape(&self) -> FormationShape {
        self.shape
    }

    pub fn rows(&self) -> usize {
        self.shape.rows
    }

    pub fn cols(&self) -> usize {
        self.shape.cols
    }

    pub fn get(&self, row: usize, col: usize) -> Option<usize> {
        self.slots[row * self.shape.cols + col]
    }

    pub fn slots(&self) -> &[Option<usize>] {
        &self.slots
    }

    pub fn num_robots(&self) -> usize {
        self.slots.iter().flatten().count()
    }

    pub fn slot_of(&self, robot: usize) -> Option<(usize, usize)> {
        self.slots
            .iter()
            .position(|&s| s == Some(robot))
            .map(|i| (i / self.shape.cols, i % self.shape.cols))
    }

    /// Rows of robot ids with virtual robots rendered as `-1`.
    pub fn to_rows(&self) -> Vec<Vec<i64>> {
        self.slots
            .chunks(self.shape.cols)
            .map(|row| row.iter().map(|s| s.map_or(-1, |id| id as i64)).collect())
            .collect()
    }
}

impl fmt::Display for AssignmentMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for row in self.to_rows() {
            let cells: Vec<String> = row.iter().map(|v| format!("{v:>3}")).collect();
            writeln!(f, "{}", cells.join(" "))?;
        }
        Ok(())
    }
}

/// Anti-diagonal cuts of `old`, each ordered by ascending column, virtual
/// robots dropped.
fn diagonal_cuts(old: &AssignmentMatrix) -> Vec<Vec<usize>> {
    let (rows, cols) = (old.rows(), old.cols());
    (0..rows + cols - 1)
        .map(|d| {
            (0..cols)
                .filter(|&c| c <= d && d - c < rows)
                .filter_map(|c| old.get(d - c, c))
                .collect()
        })
        .collect()
}

/// Pours cuts into `shape` row by row with the tail-first overflow rule.
fn pour_rows(cuts: Vec<Vec<usize>>, shape: FormationShape) -> Result<AssignmentMatrix> {
    let mut slots = vec![None; shape.slots()];
    let (mut row, mut col) = (0usize, 0usize);
    for mut queue in cuts {
        while !queue.is_empty() {
            if row >= shape.rows {
                return Err(Error::invalid(format!(
                    "robots overflow a {shape} formation"
                )));
            }
            let vacancies = shape.cols - col;
            let placed = if queue.len() <= vacancies {
                std::mem::take(&mut queue)
            } else {
                queue.split_off(queue.len() - vacancies)
            };
            for id in placed {
                slots[row * shape.cols + col] = Some(id);
                col += 1;
            }
            if col == shape.cols {
                row += 1;
                col = 0;
            }
        }
    }
    AssignmentMatrix::new(shape, slots)
}

/// Reverse of [`pour_rows`]: the forward map is computed from `target` back
/// to the current shape on placeholder labels, then inverted.
fn inverse_pour(old: &AssignmentMatrix, target: FormationShape) -> Result<AssignmentMatrix> {
    let n = old.num_robots();
    let labels = AssignmentMatrix::identity(target, n)?;
    let forward = pour_rows(diagonal_cuts(&labels), old.shape())?;
    // Robots whose slot carries no label (only possible when the virtual
    // pattern differs from the forward one) go last, in reading order.
    let mut keyed: Vec<(usize, usize, usize)> = old
        .slots
        .iter()
        .enumerate()
        .filter_map(|(i, s)| s.map(|id| (forward.slots[i].unwrap_or(usize::MAX), i, id)))
        .collect();
    keyed.sort_unstable();
    let mut slots = vec![None; target.slots()];
    for (k, &(_, _, id)) in keyed.iter().enumerate() {
        slots[k] = Some(id);
    }
    AssignmentMatrix::new(target, slots)
}

/// Assignment for the next formation given the current one.
pub fn assign_transition(
    old: &AssignmentMatrix,
    new_shape: FormationShape,
) -> Result<AssignmentMatrix> {
    let n = old.num_robots();
    if n > new_shape.slots() {
        return Err(Error::invalid(format!(
            "{n} robots do not fit a {new_shape} formation"
        )));
    }
    if old.shape() == new_shape {
        return Ok(old.clone());
    }
    if new_shape.cols >= old.cols() {
        pour_rows(diagonal_cuts(old), new_shape)
    } else {
        inverse_pour(old, new_shape)
    }
}

/// Goal of every robot (indexed by robot id) for a formation whose origin
/// slot is placed at `anchor`.
pub fn goals_from_assignment(
    assignment: &AssignmentMatrix,
    shape: FormationShape,
    spacing: f64,
    anchor: Vector2<f64>,
    heading: f64,
) -> Result<Vec<Vector2<f64>>> {
    if assignment.shape() != shape {
        return Err(Error::invalid(format!(
            "assignment is {} but the formation is {shape}",
            assignment.shape()
        )));
    }
    let mut goals = vec![Vector2::zeros(); assignment.num_robots()];
    for (i, slot) in assignment.slots.iter().enumerate() {
        if let Some(id) = slot {
            let (r, c) = (i / shape.cols, i % shape.cols);
            goals[*id] = anchor + FormationShape::slot_offset(r, c, spacing, heading);
        }
    }
    Ok(goals)
}
