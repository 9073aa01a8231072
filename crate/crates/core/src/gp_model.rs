//! Constant-velocity Gaussian-process trajectory prior.
//!
//! The team state at time `t` stacks every robot's planar position followed by
//! every robot's planar velocity. Under the white-noise-on-acceleration model
//! all system matrices act identically on each coordinate, so every matrix in
//! this module is a 2x2 coefficient block `[[a, b], [c, d]]` expanded over the
//! position/velocity partition as `[[a*I, b*I], [c*I, d*I]]`.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Positions and velocities of all robots at one support time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SupportState {
    pub time: f64,
    pub positions: Vec<Vector2<f64>>,
    pub velocities: Vec<Vector2<f64>>,
}

impl SupportState {
    pub fn new(
        time: f64,
        positions: Vec<Vector2<f64>>,
        velocities: Vec<Vector2<f64>>,
    ) -> Result<Self> {
        if positions.is_empty() {
            return Err(Error::invalid("a support state needs at least one robot"));
        }
        if positions.len() != velocities.len() {
            return Err(Error::invalid(format!(
                "{} positions but {} velocities",
                positions.len(),
                velocities.len()
            )));
        }
        let finite = time.is_finite()
            && positions
                .iter()
                .chain(velocities.iter())
                .all(|v| v.iter().all(|x| x.is_finite()));
        if !finite {
            return Err(Error::invalid("support state contains non-finite values"));
        }
        Ok(Self {
            time,
            positions,
            velocities,
        })
    }

    /// All robots at rest at the given positions.
    pub fn at_rest(time: f64, positions: Vec<Vector2<f64>>) -> Result<Self> {
        let velocities = vec![Vector2::zeros(); positions.len()];
        Self::new(time, positions, velocities)
    }

    pub fn num_robots(&self) -> usize {
        self.positions.len()
    }

    /// `[x_1 .. x_N, v_1 .. v_N]`, each entry contributing its x then y.
    pub fn flatten(&self) -> DVector<f64> {
        let n = self.num_robots();
        let mut out = DVector::zeros(4 * n);
        for (i, p) in self.positions.iter().enumerate() {
            out[2 * i] = p.x;
            out[2 * i + 1] = p.y;
        }
        for (i, v) in self.velocities.iter().enumerate() {
            out[2 * n + 2 * i] = v.x;
            out[2 * n + 2 * i + 1] = v.y;
        }
        out
    }

    pub fn from_flat(time: f64, flat: &DVector<f64>) -> Result<Self> {
        if !flat.len().is_multiple_of(4) || flat.is_empty() {
            return Err(Error::invalid(format!(
                "flattened state length {} is not a positive multiple of 4",
                flat.len()
            )));
        }
        let n = flat.len() / 4;
        let positions = (0..n)
            .map(|i| Vector2::new(flat[2 * i], flat[2 * i + 1]))
            .collect();
        let velocities = (0..n)
            .map(|i| Vector2::new(flat[2 * n + 2 * i], flat[2 * n + 2 * i + 1]))
            .collect();
        Self::new(time, positions, velocities)
    }
}

/// Parameters of the team prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GpParams {
    /// `Q_c = qc_scale * I`.
    pub qc_scale: f64,
    pub num_robots: usize,
    pub support_times: Vec<f64>,
}

impl GpParams {
    pub fn new(qc_scale: f64, num_robots: usize, support_times: Vec<f64>) -> Result<Self> {
        if !(qc_scale > 0.0 && qc_scale.is_finite()) {
            return Err(Error::invalid(format!(
                "qc_scale must be positive, got {qc_scale}"
            )));
        }
        if num_robots == 0 {
            return Err(Error::invalid("num_robots must be at least 1"));
        }
        if support_times.len() < 2 {
            return Err(Error::invalid("at least two support times are required"));
        }
        if support_times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("support times must be strictly increasing"));
        }
        Ok(Self {
            qc_scale,
            num_robots,
            support_times,
        })
    }

    /// `count` support times evenly spread over `[0, total_time]`.
    pub fn uniform(
        qc_scale: f64,
        num_robots: usize,
        total_time: f64,
        count: usize,
    ) -> Result<Self> {
        if count < 2 {
            return Err(Error::invalid("at least two support states are required"));
        }
        let step = total_time / (count - 1) as f64;
        let mut times: Vec<f64> = (0..count).map(|k| k as f64 * step).collect();
        times[count - 1] = total_time;
        Self::new(qc_scale, num_robots, times)
    }
}

/// A 2x2 coefficient block acting on the position/velocity partition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoeffBlock(pub Matrix2<f64>);

impl CoeffBlock {
    pub fn identity() -> Self {
        CoeffBlock(Matrix2::identity())
    }

    /// Expands to the `4N x 4N` matrix over `N` robots.
    pub fn to_matrix(&self, num_robots: usize) -> DMatrix<f64> {
        let m = 2 * num_robots;
        let mut out = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            out[(i, i)] = self.0[(0, 0)];
            out[(i, m + i)] = self.0[(0, 1)];
            out[(m + i, i)] = self.0[(1, 0)];
            out[(m + i, m + i)] = self.0[(1, 1)];
        }
        out
    }

    /// Applies the expanded matrix to a flattened team state.
    pub fn apply(&self, flat: &DVector<f64>) -> DVector<f64> {
        let m = flat.len() / 2;
        let mut out = DVector::zeros(flat.len());
        let c = &self.0;
        for i in 0..m {
            let p = flat[i];
            let v = flat[m + i];
            out[i] = c[(0, 0)] * p + c[(0, 1)] * v;
            out[m + i] = c[(1, 0)] * p + c[(1, 1)] * v;
        }
        out
    }
}

pub(crate) fn transition_coeffs(dt: f64) -> CoeffBlock {
    CoeffBlock(Matrix2::new(1.0, dt, 0.0, 1.0))
}

pub(crate) fn cov_coeffs(dt: f64, qc_scale: f64) -> CoeffBlock {
    let dt2 = dt * dt;
    CoeffBlock(Matrix2::new(
        qc_scale * dt2 * dt / 3.0,
        qc_scale * dt2 / 2.0,
        qc_scale * dt2 / 2.0,
        qc_scale * dt,
    ))
}

/// Closed-form inverse of [`cov_coeffs`].
pub(crate) fn cov_inverse_coeffs(dt: f64, qc_scale: f64) -> CoeffBlock {
    let dt2 = dt * dt;
    CoeffBlock(Matrix2::new(
        12.0 / (dt2 * dt * qc_scale),
        -6.0 / (dt2 * qc_scale),
        -6.0 / (dt2 * qc_scale),
        4.0 / (dt * qc_scale),
    ))
}

/// State-transition matrix `[[I, dt*I], [0, I]]` of the constant-velocity model.
pub fn transition(dt: f64, num_robots: usize) -> Result<DMatrix<f64>> {
    if !(dt >= 0.0) {
        return Err(Error::invalid(format!(
            "transition needs dt >= 0, got {dt}"
        )));
    }
    Ok(transition_coeffs(dt).to_matrix(num_robots))
}

/// Process-noise covariance accumulated over `dt`.
pub fn gp_cov(dt: f64, qc_scale: f64, num_robots: usize) -> Result<DMatrix<f64>> {
    if !(dt > 0.0) {
        return Err(Error::invalid(format!("gp_cov needs dt > 0, got {dt}")));
    }
    if !(qc_scale > 0.0) {
        return Err(Error::invalid(format!(
            "gp_cov needs qc_scale > 0, got {qc_scale}"
        )));
    }
    Ok(cov_coeffs(dt, qc_scale).to_matrix(num_robots))
}

/// `Φ(dt)·θ_prev − θ_next`.
pub fn gp_prior_error(prev: &SupportState, next: &SupportState) -> Result<DVector<f64>> {
    if prev.num_robots() != next.num_robots() {
        return Err(Error::invalid("support states disagree on robot count"));
    }
    let dt = next.time - prev.time;
    if !(dt > 0.0) {
        return Err(Error::invalid(format!(
            "gp prior needs increasing times, got {} then {}",
            prev.time, next.time
        )));
    }
    Ok(transition_coeffs(dt).apply(&prev.flatten()) - next.flatten())
}

/// Interpolation weights `(Λ, Ψ)` for an offset `tau` into an interval of
/// length `span`; `θ(τ) = Λ·θ_prev + Ψ·θ_next`.
pub(crate) fn interp_coeffs(span: f64, tau: f64) -> (CoeffBlock, CoeffBlock) {
    if tau <= 0.0 {
        return (CoeffBlock::identity(), CoeffBlock(Matrix2::zeros()));
    }
    if tau >= span {
        return (CoeffBlock(Matrix2::zeros()), CoeffBlock::identity());
    }
    // Q_c cancels out of Ψ, so unit scale is used.
    let q_tau = cov_coeffs(tau, 1.0).0;
    let phi_rest = transition_coeffs(span - tau).0;
    let q_span_inv = cov_inverse_coeffs(span, 1.0).0;
    let psi = q_tau * phi_rest.transpose() * q_span_inv;
    let lambda = transition_coeffs(tau).0 - psi * transition_coeffs(span).0;
    (CoeffBlock(lambda), CoeffBlock(psi))
}

/// A state recovered between two support states.
#[derive(Debug, Clone)]
pub struct Interpolated {
    pub state: SupportState,
    pub lambda: DMatrix<f64>,
    pub psi: DMatrix<f64>,
}

/// GP posterior mean at `tau ∈ [prev.time, next.time]`.
pub fn interpolate(prev: &SupportState, next: &SupportState, tau: f64) -> Result<Interpolated> {
    let (state, lambda, psi) = interpolate_coeffs(prev, next, tau)?;
    let n = prev.num_robots();
    Ok(Interpolated {
        state,
        lambda: lambda.to_matrix(n),
        psi: psi.to_matrix(n),
    })
}

pub(crate) fn interpolate_coeffs(
    prev: &SupportState,
    next: &SupportState,
    tau: f64,
) -> Result<(SupportState, CoeffBlock, CoeffBlock)> {
    if prev.num_robots() != next.num_robots() {
        return Err(Error::invalid("support states disagree on robot count"));
    }
    if !(tau >= prev.time && tau <= next.time) {
        return Err(Error::invalid(format!(
            "interpolation time {tau} outside [{}, {}]",
            prev.time, next.time
        )));
    }
    let (lambda, psi) = interp_coeffs(next.time - prev.time, tau - prev.time);
    let state = if tau == prev.time {
        prev.clone()
    } else if tau == next.time {
        next.clone()
    } else {
        let flat = lambda.apply(&prev.flatten()) + psi.apply(&next.flatten());
        SupportState::from_flat(tau, &flat)?
    };
    Ok((state, lambda, psi))
}

/// Support states of a whole team trajectory, ordered by time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub states: Vec<SupportState>,
}

impl Trajectory {
    pub fn new(states: Vec<SupportState>) -> Result<Self> {
        if states.len() < 2 {
            return Err(Error::invalid(
                "a trajectory needs at least two support states",
            ));
        }
        let n = states[0].num_robots();
        if states.iter().any(|s| s.num_robots() != n) {
            return Err(Error::invalid("support states disagree on robot count"));
        }
        if states.windows(2).any(|w| !(w[1].time > w[0].time)) {
            return Err(Error::invalid("support times must be strictly increasing"));
        }
        Ok(Self { states })
    }

    pub fn num_robots(&self) -> usize {
        self.states[0].num_robots()
    }

    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn start_time(&self) -> f64 {
        self.states[0].time
    }

    pub fn end_time(&self) -> f64 {
        self.states[self.states.len() - 1].time
    }

    /// Index `k` with `t_k <= t <= t_{k+1}`.
    pub fn bracket(&self, t: f64) -> Option<usize> {
        if !(t >= self.start_time() && t <= self.end_time()) {
            return None;
        }
        let k = self.states.partition_point(|s| s.time <= t);
        Some(k.saturating_sub(1).min(self.states.len() - 2))
    }

    /// GP-interpolated team state at time `t`.
    pub fn sample(&self, t: f64) -> Result<SupportState> {
        let k = self.bracket(t).ok_or_else(|| {
            Error::invalid(format!(
                "sample time {t} outside [{}, {}]",
                self.start_time(),
                self.end_time()
            ))
        })?;
        Ok(interpolate_coeffs(&self.states[k], &self.states[k + 1], t)?.0)
    }
}
