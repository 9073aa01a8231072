use nalgebra::{DMatrix, DVector};

use super::{Factor, FactorGraph, FactorKind};
use crate::error::Result;
use crate::gp_model::Trajectory;

/// Whitened residual and Jacobian blocks of one factor: `½‖r‖²` is its cost.
#[derive(Debug, Clone)]
pub struct LinearizedFactor {
    pub residual: DVector<f64>,
    pub blocks: Vec<(usize, DMatrix<f64>)>,
}

/// Gauss–Newton normal equations `H δ = −g` in block-tridiagonal form.
/// `upper[k]` couples support states `k` and `k + 1`.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub diag: Vec<DMatrix<f64>>,
    pub upper: Vec<DMatrix<f64>>,
    pub gradient: Vec<DVector<f64>>,
    pub cost: f64,
}

impl BlockSystem {
    fn zeros(states: usize, dim: usize) -> Self {
        BlockSystem {
            diag: vec![DMatrix::zeros(dim, dim); states],
            upper: vec![DMatrix::zeros(dim, dim); states.saturating_sub(1)],
            gradient: vec![DVector::zeros(dim); states],
            cost: 0.0,
        }
    }

    /// Dense copy of `H`, for checks on small problems.
    pub fn dense_hessian(&self) -> DMatrix<f64> {
        let k = self.diag.len();
        let d = self.diag.first().map_or(0, |m| m.nrows());
        let mut h = DMatrix::zeros(k * d, k * d);
        for (i, b) in self.diag.iter().enumerate() {
            h.view_mut((i * d, i * d), (d, d)).copy_from(b);
        }
        for (i, b) in self.upper.iter().enumerate() {
            h.view_mut((i * d, (i + 1) * d), (d, d)).copy_from(b);
            h.view_mut(((i + 1) * d, i * d), (d, d))
                .copy_from(&b.transpose());
        }
        h
    }

    pub fn dense_gradient(&self) -> DVector<f64> {
        let d = self.gradient.first().map_or(0, |g| g.len());
        let mut g = DVector::zeros(self.gradient.len() * d);
        for (i, b) in self.gradient.iter().enumerate() {
            g.rows_mut(i * d, d).copy_from(b);
        }
        g
    }
}

/// Keeps only rows with a nonzero Jacobian entry; inactive hinge rows add
/// nothing to `H` or `g`.
fn active_rows(lin: LinearizedFactor) -> LinearizedFactor {
    let rows: Vec<usize> = (0..lin.residual.len())
        .filter(|&r| {
            lin.blocks
                .iter()
                .any(|(_, j)| j.row(r).iter().any(|&v| v != 0.0))
        })
        .collect();
    if rows.len() == lin.residual.len() {
        return lin;
    }
    LinearizedFactor {
        residual: lin.residual.select_rows(&rows),
        blocks: lin
            .blocks
            .into_iter()
            .map(|(k, j)| (k, j.select_rows(&rows)))
            .collect(),
    }
}

impl FactorGraph {
    /// Whitened residual and Jacobians of one factor at `traj`.
    pub fn linearize_factor(&self, f: &Factor, traj: &Trajectory) -> Result<LinearizedFactor> {
        let raw = self.raw_factor(f, traj, true)?;
        Ok(match f.kind {
            FactorKind::GpPrior => {
                let u = self.gp_whitener(f.key);
                let um = u.to_matrix(self.num_robots);
                LinearizedFactor {
                    residual: u.apply(&raw.value),
                    blocks: raw.blocks.into_iter().map(|(k, j)| (k, &um * j)).collect(),
                }
            }
            _ => {
                let s = 1.0 / f.sigma;
                LinearizedFactor {
                    residual: raw.value * s,
                    blocks: raw.blocks.into_iter().map(|(k, j)| (k, j * s)).collect(),
                }
            }
        })
    }

    /// Accumulates `H = Σ JᵀJ` and `g = Σ Jᵀr` over whitened factors.
    pub fn linearize(&self, traj: &Trajectory) -> Result<BlockSystem> {
        self.check_trajectory(traj)?;
        let mut sys = BlockSystem::zeros(self.num_states(), self.state_dim());
        for f in &self.factors {
            let lin = self.linearize_factor(f, traj)?;
            sys.cost += 0.5 * lin.residual.norm_squared();
            let lin = match f.kind {
                FactorKind::Prior { .. } | FactorKind::GpPrior => lin,
                _ => active_rows(lin),
            };
            if !lin.residual.is_empty() {
                accumulate(&mut sys, &lin);
            }
        }
        Ok(sys)
    }
}

fn accumulate(sys: &mut BlockSystem, lin: &LinearizedFactor) {
    for (a, (ka, ja)) in lin.blocks.iter().enumerate() {
        let jat = ja.transpose();
        sys.gradient[*ka] += &jat * &lin.residual;
        sys.diag[*ka] += &jat * ja;
        for (kb, jb) in &lin.blocks[a + 1..] {
            let cross = &jat * jb;
            if *kb == ka + 1 {
                sys.upper[*ka] += cross;
            } else if *ka == kb + 1 {
                sys.upper[*kb] += cross.transpose();
            }
        }
    }
}
