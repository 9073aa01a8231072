//! Occupancy grids, obstacle inflation, and signed distance fields.
//!
//! Cell `(ix, iy)` covers `[origin + (ix, iy) * cell_size, origin + (ix+1, iy+1) * cell_size)`
//! and is represented by its center. Distances are measured between centers.

mod edt;
mod rect;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use rect::{rect_is_free, FreeSpaceIndex, Rect};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyGrid {
    pub origin: Vector2<f64>,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    cells: Vec<bool>,
}

impl OccupancyGrid {
    /// An obstacle-free grid.
    pub fn new(origin: Vector2<f64>, cell_size: f64, width: usize, height: usize) -> Result<Self> {
        Self::from_cells(
            origin,
            cell_size,
            width,
            height,
            vec![false; width * height],
        )
    }

    /// `cells` is row-major with row 0 at the lowest `y`.
    pub fn from_cells(
        origin: Vector2<f64>,
        cell_size: f64,
        width: usize,
        height: usize,
        cells: Vec<bool>,
    ) -> Result<Self> {
        if !(cell_size > 0.0 && cell_size.is_finite()) {
            return Err(Error::invalid(format!(
                "cell size must be positive, got {cell_size}"
            )));
        }
        if width == 0 || height == 0 {
            return Err(Error::invalid("grid dimensions must be at least 1x1"));
        }
        if cells.len() != width * height {
            return Err(Error::invalid(format!(
                "expected {} cells, got {}",
                width * height,
                cells.len()
            )));
        }
        Ok(Self {
            origin,
            cell_size,
            width,
            height,
            cells,
        })
    }

    /// Parses rows of `.` (free) and `#` (occupied). The first line is the
    /// top of the map (highest `y`).
    pub fn from_ascii(text: &str, cell_size: f64, origin: Vector2<f64>) -> Result<Self> {
        let lines: Vec<&str> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty())
            .collect();
        let height = lines.len();
        let width = lines.first().map_or(0, |l| l.chars().count());
        let mut cells = vec![false; width * height];
        for (row, line) in lines.iter().enumerate() {
            if line.chars().count() != width {
                return Err(Error::invalid(format!(
                    "ascii map line {} has {} columns, expected {width}",
                    row + 1,
                    line.chars().count()
                )));
            }
            let iy = height - 1 - row;
            for (ix, ch) in line.chars().enumerate() {
                cells[iy * width + ix] = match ch {
                    '.' => false,
                    '#' => true,
                    other => {
                        return Err(Error::invalid(format!(
                            "unexpected map character {other:?} on line {}",
                            row + 1
                        )))
                    }
                };
            }
        }
        Self::from_cells(origin, cell_size, width, height, cells)
    }

    pub fn is_occupied(&self, ix: usize, iy: usize) -> bool {
        self.cells[iy * self.width + ix]
    }

    pub fn set_occupied(&mut self, ix: usize, iy: usize, occupied: bool) {
        self.cells[iy * self.width + ix] = occupied;
    }

    pub fn cells(&self) -> &[bool] {
        &self.cells
    }

    pub fn occupied_count(&self) -> usize {
        self.cells.iter().filter(|&&c| c).count()
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vector2<f64> {
        self.origin
            + Vector2::new(
                (ix as f64 + 0.5) * self.cell_size,
                (iy as f64 + 0.5) * self.cell_size,
            )
    }

    /// Cell containing `p`, if any.
    pub fn cell_of(&self, p: &Vector2<f64>) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.cell_size).floor();
        let fy = ((p.y - self.origin.y) / self.cell_size).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    /// Upper corner of the covered area.
    pub fn extent_max(&self) -> Vector2<f64> {
        self.origin
            + Vector2::new(
                self.width as f64 * self.cell_size,
                self.height as f64 * self.cell_size,
            )
    }

    /// Marks every cell whose center lies within `thickness` of an occupied
    /// cell center.
    pub fn inflate(&self, thickness: f64) -> OccupancyGrid {
        if !(thickness > 0.0) || self.cells.iter().all(|&c| c) {
            return self.clone();
        }
        let ratio = thickness / self.cell_size;
        // Squared radius in whole cells; the epsilon keeps exact multiples inclusive.
        let limit = (ratio * ratio + 1e-9).floor();
        let dist = edt::squared_distance(self.width, self.height, |i| self.cells[i]);
        let cells = dist.iter().map(|&d| d <= limit).collect();
        OccupancyGrid {
            cells,
            ..self.clone()
        }
    }
}

/// Signed distance in meters per cell: positive in free space, negative
/// inside obstacles.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignedDistanceGrid {
    pub origin: Vector2<f64>,
    pub cell_size: f64,
    pub width: usize,
    pub height: usize,
    values: Vec<f64>,
}

/// Distance reported everywhere on a grid without obstacles.
pub fn no_obstacle_distance(grid: &OccupancyGrid) -> f64 {
    10.0 * grid.width.max(grid.height) as f64 * grid.cell_size
}

/// Exact signed Euclidean distance transform. Free cells hold the distance to
/// the nearest occupied center, occupied cells the negated distance to the
/// nearest free center.
pub fn build_sdf(grid: &OccupancyGrid) -> SignedDistanceGrid {
    let sentinel = no_obstacle_distance(grid);
    let cs = grid.cell_size;
    let outside = edt::squared_distance(grid.width, grid.height, |i| grid.cells[i]);
    let inside = edt::squared_distance(grid.width, grid.height, |i| !grid.cells[i]);
    let values = grid
        .cells
        .iter()
        .zip(outside.iter().zip(inside.iter()))
        .map(|(&occ, (&out, &inn))| {
            if occ {
                if inn >= edt::FAR {
                    -sentinel
                } else {
                    -(inn.sqrt() * cs)
                }
            } else if out >= edt::FAR {
                sentinel
            } else {
                out.sqrt() * cs
            }
        })
        .collect();
    SignedDistanceGrid {
        origin: grid.origin,
        cell_size: cs,
        width: grid.width,
        height: grid.height,
        values,
    }
}

impl SignedDistanceGrid {
    pub fn value(&self, ix: usize, iy: usize) -> f64 {
        self.values[iy * self.width + ix]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Bilinear distance and its analytic gradient at `p`.
    ///
    /// Points between the outermost cell centers and the map edge use the
    /// border patch extended linearly. At an interior cell center the gradient
    /// component is the average of the two adjoining patches.
    pub fn query(&self, p: &Vector2<f64>) -> Result<(f64, Vector2<f64>)> {
        let max = self.origin
            + Vector2::new(
                self.width as f64 * self.cell_size,
                self.height as f64 * self.cell_size,
            );
        if !(p.x >= self.origin.x && p.y >= self.origin.y && p.x <= max.x && p.y <= max.y) {
            return Err(Error::OutOfBounds { x: p.x, y: p.y });
        }
        let fx = (p.x - self.origin.x) / self.cell_size - 0.5;
        let fy = (p.y - self.origin.y) / self.cell_size - 0.5;
        let (ix, tx) = patch_coord(fx, self.width);
        let (iy, ty) = patch_coord(fy, self.height);
        let (value, mut gx, mut gy) = self.patch_eval(ix, iy, tx, ty);
        if tx == 0.0 && ix >= 1 {
            let (_, left, _) = self.patch_eval(ix - 1, iy, 1.0, ty);
            gx = 0.5 * (gx + left);
        }
        if ty == 0.0 && iy >= 1 {
            let (_, _, below) = self.patch_eval(ix, iy - 1, tx, 1.0);
            gy = 0.5 * (gy + below);
        }
        Ok((value, Vector2::new(gx, gy)))
    }

    /// Value and gradient of the bilinear patch anchored at `(ix, iy)`.
    fn patch_eval(&self, ix: usize, iy: usize, tx: f64, ty: f64) -> (f64, f64, f64) {
        let ix1 = (ix + 1).min(self.width - 1);
        let iy1 = (iy + 1).min(self.height - 1);
        let v00 = self.value(ix, iy);
        let v10 = self.value(ix1, iy);
        let v01 = self.value(ix, iy1);
        let v11 = self.value(ix1, iy1);
        let value = (1.0 - ty) * ((1.0 - tx) * v00 + tx * v10) + ty * ((1.0 - tx) * v01 + tx * v11);
        let gx = ((1.0 - ty) * (v10 - v00) + ty * (v11 - v01)) / self.cell_size;
        let gy = ((1.0 - tx) * (v01 - v00) + tx * (v11 - v10)) / self.cell_size;
        (value, gx, gy)
    }
}

fn patch_coord(f: f64, n: usize) -> (usize, f64) {
    if n < 2 {
        return (0, 0.0);
    }
    let i = f.floor().clamp(0.0, (n - 2) as f64);
    (i as usize, f - i)
}
