//! Exact squared Euclidean distance transform on grid cell centers.
//!
//! Separable lower-envelope-of-parabolas method: one pass along rows, one
//! along columns. All inputs are small integers, so every output is an exact
//! integer stored in an `f64`.

pub(crate) const FAR: f64 = 1e20;

/// 1-D transform: `out[q] = min_p (f[p] + (q - p)^2)`.
fn transform_1d(f: &[f64], out: &mut [f64], hull: &mut [usize], bounds: &mut [f64]) {
    let mut len = 0usize;
    for (q, &fq) in f.iter().enumerate() {
        if fq >= FAR {
            continue;
        }
        let qf = q as f64;
        loop {
            if len == 0 {
                hull[0] = q;
                bounds[0] = f64::NEG_INFINITY;
                len = 1;
                break;
            }
            let p = hull[len - 1];
            let pf = p as f64;
            let s = ((fq + qf * qf) - (f[p] + pf * pf)) / (2.0 * (qf - pf));
            if s <= bounds[len - 1] {
                len -= 1;
                continue;
            }
            hull[len] = q;
            bounds[len] = s;
            len += 1;
            break;
        }
    }
    if len == 0 {
        out.iter_mut().for_each(|o| *o = FAR);
        return;
    }
    bounds[len] = f64::INFINITY;
    let mut k = 0usize;
    for (q, o) in out.iter_mut().enumerate() {
        let qf = q as f64;
        while bounds[k + 1] < qf {
            k += 1;
        }
        let d = qf - hull[k] as f64;
        *o = f[hull[k]] + d * d;
    }
}

/// Squared distance (in cells) from every cell to the nearest cell where
/// `seed` is true; [`FAR`] when no seed exists.
pub(crate) fn squared_distance(
    width: usize,
    height: usize,
    seed: impl Fn(usize) -> bool,
) -> Vec<f64> {
    let n = width.max(height);
    let mut hull = vec![0usize; n];
    let mut bounds = vec![0.0; n + 1];
    let mut line_in = vec![0.0; n];
    let mut line_out = vec![0.0; n];

    let mut grid: Vec<f64> = (0..width * height)
        .map(|i| if seed(i) { 0.0 } else { FAR })
        .collect();

    for y in 0..height {
        let row = &mut grid[y * width..(y + 1) * width];
        line_in[..width].copy_from_slice(row);
        transform_1d(
            &line_in[..width],
            &mut line_out[..width],
            &mut hull,
            &mut bounds,
        );
        row.copy_from_slice(&line_out[..width]);
    }
    for x in 0..width {
        for y in 0..height {
            line_in[y] = grid[y * width + x];
        }
        transform_1d(
            &line_in[..height],
            &mut line_out[..height],
            &mut hull,
            &mut bounds,
        );
        for y in 0..height {
            grid[y * width + x] = line_out[y];
        }
    }
    grid
}
