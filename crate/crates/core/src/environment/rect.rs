use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use super::OccupancyGrid;

const EDGE_TOL: f64 = 1e-9;

/// Oriented rectangle. `axis` is the unit along-track direction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub center: Vector2<f64>,
    pub axis: Vector2<f64>,
    pub half_length: f64,
    pub half_width: f64,
}

impl Rect {
    /// Rectangle swept by `half_width` on both sides of `a -> b`, shifted
    /// sideways by `offset` (positive to the left of travel).
    pub fn from_segment(a: Vector2<f64>, b: Vector2<f64>, half_width: f64, offset: f64) -> Self {
        let d = b - a;
        let len = d.norm();
        let axis = if len > 0.0 {
            d / len
        } else {
            Vector2::new(1.0, 0.0)
        };
        let normal = Vector2::new(-axis.y, axis.x);
        Rect {
            center: (a + b) * 0.5 + normal * offset,
            axis,
            half_length: 0.5 * len,
            half_width,
        }
    }

    pub fn normal(&self) -> Vector2<f64> {
        Vector2::new(-self.axis.y, self.axis.x)
    }

    pub fn contains(&self, p: &Vector2<f64>) -> bool {
        let d = p - self.center;
        d.dot(&self.axis).abs() <= self.half_length + EDGE_TOL
            && d.dot(&self.normal()).abs() <= self.half_width + EDGE_TOL
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vector2<f64>; 4] {
        let a = self.axis * self.half_length;
        let n = self.normal() * self.half_width;
        [
            self.center - a - n,
            self.center + a - n,
            self.center + a + n,
            self.center - a + n,
        ]
    }

    fn bounds(&self) -> (Vector2<f64>, Vector2<f64>) {
        let c = self.corners();
        let mut lo = c[0];
        let mut hi = c[0];
        for p in &c[1..] {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        (lo, hi)
    }

    fn is_axis_aligned(&self) -> bool {
        self.axis.x.abs() < 1e-12 || self.axis.y.abs() < 1e-12
    }
}

fn leaves_map(grid: &OccupancyGrid, lo: &Vector2<f64>, hi: &Vector2<f64>) -> bool {
    let max = grid.extent_max();
    lo.x < grid.origin.x - EDGE_TOL
        || lo.y < grid.origin.y - EDGE_TOL
        || hi.x > max.x + EDGE_TOL
        || hi.y > max.y + EDGE_TOL
}

/// Index range of cell centers inside `[lo, hi]` along one axis.
fn center_range(lo: f64, hi: f64, origin: f64, cs: f64, n: usize) -> Option<(usize, usize)> {
    let first = ((lo - EDGE_TOL - origin) / cs - 0.5).ceil().max(0.0);
    let last = ((hi + EDGE_TOL - origin) / cs - 0.5)
        .floor()
        .min(n as f64 - 1.0);
    (first <= last).then_some((first as usize, last as usize))
}

/// True iff no occupied cell center lies inside `rect`. A rectangle reaching
/// past the map edge is never free.
pub fn rect_is_free(grid: &OccupancyGrid, rect: &Rect) -> bool {
    let (lo, hi) = rect.bounds();
    if leaves_map(grid, &lo, &hi) {
        return false;
    }
    let cs = grid.cell_size;
    let (Some((x0, x1)), Some((y0, y1))) = (
        center_range(lo.x, hi.x, grid.origin.x, cs, grid.width),
        center_range(lo.y, hi.y, grid.origin.y, cs, grid.height),
    ) else {
        return true;
    };
    for iy in y0..=y1 {
        for ix in x0..=x1 {
            if grid.is_occupied(ix, iy) && rect.contains(&grid.cell_center(ix, iy)) {
                return false;
            }
        }
    }
    true
}

/// Summed-area table over an occupancy grid for constant-time free-space
/// tests of axis-aligned rectangles.
#[derive(Debug, Clone)]
pub struct FreeSpaceIndex {
    grid: OccupancyGrid,
    prefix: Vec<u32>,
}

impl FreeSpaceIndex {
    pub fn new(grid: OccupancyGrid) -> Self {
        let (w, h) = (grid.width, grid.height);
        let mut prefix = vec![0u32; (w + 1) * (h + 1)];
        for iy in 0..h {
            let mut row = 0u32;
            for ix in 0..w {
                row += grid.is_occupied(ix, iy) as u32;
                prefix[(iy + 1) * (w + 1) + ix + 1] = prefix[iy * (w + 1) + ix + 1] + row;
            }
        }
        Self { grid, prefix }
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    fn occupied_in(&self, x0: usize, x1: usize, y0: usize, y1: usize) -> u32 {
        let w = self.grid.width + 1;
        self.prefix[(y1 + 1) * w + x1 + 1] + self.prefix[y0 * w + x0]
            - self.prefix[y0 * w + x1 + 1]
            - self.prefix[(y1 + 1) * w + x0]
    }

    /// Same predicate as [`rect_is_free`].
    pub fn is_free(&self, rect: &Rect) -> bool {
        if !rect.is_axis_aligned() {
            return rect_is_free(&self.grid, rect);
        }
        let (lo, hi) = rect.bounds();
        let grid = &self.grid;
        if leaves_map(grid, &lo, &hi) {
            return false;
        }
        let cs = grid.cell_size;
        match (
            center_range(lo.x, hi.x, grid.origin.x, cs, grid.width),
            center_range(lo.y, hi.y, grid.origin.y, cs, grid.height),
        ) {
            (Some((x0, x1)), Some((y0, y1))) => self.occupied_in(x0, x1, y0, y1) == 0,
            _ => true,
        }
    }
}
