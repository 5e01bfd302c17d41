//! Motion models: CTRV for car-like objects, constant velocity for pedestrians.
//!
//! Prediction only touches the mean; covariance propagation lives in
//! [`crate::kalman`]. Negative `dt` propagates backward in time, and both
//! closed forms are exact flows so a forward step followed by the matching
//! backward step returns the original state.

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::types::{idx, wrap, StateKind, TrackState};

/// Below this |θ̇| (rad/s) CTRV switches to its zero-turn form.
pub const TURN_RATE_EPSILON: f64 = 1e-4;

/// Longest single prediction step; longer horizons are chained.
pub const MAX_STEP: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MotionKind {
    Ctrv,
    Cv,
}

impl From<StateKind> for MotionKind {
    fn from(kind: StateKind) -> Self {
        match kind {
            StateKind::CarLike => MotionKind::Ctrv,
            StateKind::Pedestrian => MotionKind::Cv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MotionModel {
    pub kind: MotionKind,
    pub turning_rate_epsilon: f64,
}

impl MotionModel {
    pub fn for_kind(kind: StateKind) -> Self {
        Self {
            kind: kind.into(),
            turning_rate_epsilon: TURN_RATE_EPSILON,
        }
    }

    fn check(&self, state: &TrackState, dt: f64) -> Result<()> {
        if !dt.is_finite() {
            return Err(Error::NonFinite("dt"));
        }
        if MotionKind::from(state.kind) != self.kind {
            return Err(Error::InvalidInput(format!(
                "{:?} model cannot predict a {:?} state",
                self.kind, state.kind
            )));
        }
        Ok(())
    }

    /// Single-step prediction of the mean.
    pub fn predict(&self, state: &TrackState, dt: f64) -> Result<TrackState> {
        self.check(state, dt)?;
        let x = &state.vector;
        let mut next = x.clone();
        match self.kind {
            MotionKind::Ctrv => {
                let (theta, v, w, vz) = (
                    x[idx::THETA],
                    x[idx::CAR_V],
                    x[idx::CAR_YAW_RATE],
                    x[idx::CAR_VZ],
                );
                let (dx, dy) = if w.abs() > self.turning_rate_epsilon {
                    let t1 = theta + w * dt;
                    (
                        v / w * (t1.sin() - theta.sin()),
                        v / w * (theta.cos() - t1.cos()),
                    )
                } else {
                    // Exact flow in half-angle form; equals v·Δt·[cos θ, sin θ] at θ̇ = 0.
                    let half = 0.5 * w * dt;
                    let phi = theta + half;
                    let s = sinc(half);
                    (v * dt * phi.cos() * s, v * dt * phi.sin() * s)
                };
                next[idx::X] += dx;
                next[idx::Y] += dy;
                next[idx::Z] += vz * dt;
                next[idx::THETA] = wrap(theta + w * dt);
            }
            MotionKind::Cv => {
                next[idx::X] += x[idx::PED_VX] * dt;
                next[idx::Y] += x[idx::PED_VY] * dt;
                next[idx::Z] += x[idx::PED_VZ] * dt;
                next[idx::THETA] = wrap(x[idx::THETA] + x[idx::PED_YAW_RATE] * dt);
            }
        }
        Ok(TrackState {
            kind: state.kind,
            vector: next,
            covariance: state.covariance.clone(),
            timestamp: state.timestamp + dt,
        })
    }

    /// ∂f/∂x of the single-step prediction at `state`.
    pub fn jacobian(&self, state: &TrackState, dt: f64) -> Result<DMatrix<f64>> {
        self.check(state, dt)?;
        let n = state.kind.dim();
        let mut f = DMatrix::<f64>::identity(n, n);
        let x = &state.vector;
        match self.kind {
            MotionKind::Ctrv => {
                let (theta, v, w) = (x[idx::THETA], x[idx::CAR_V], x[idx::CAR_YAW_RATE]);
                if w.abs() > self.turning_rate_epsilon {
                    let t1 = theta + w * dt;
                    let (s0, c0, s1, c1) = (theta.sin(), theta.cos(), t1.sin(), t1.cos());
                    f[(idx::X, idx::THETA)] = v / w * (c1 - c0);
                    f[(idx::X, idx::CAR_V)] = (s1 - s0) / w;
                    f[(idx::X, idx::CAR_YAW_RATE)] = v * (dt * c1 / w - (s1 - s0) / (w * w));
                    f[(idx::Y, idx::THETA)] = v / w * (s1 - s0);
                    f[(idx::Y, idx::CAR_V)] = (c0 - c1) / w;
                    f[(idx::Y, idx::CAR_YAW_RATE)] = v * (dt * s1 / w - (c0 - c1) / (w * w));
                } else {
                    let half = 0.5 * w * dt;
                    let phi = theta + half;
                    let (sp, cp) = phi.sin_cos();
                    let (s, ds) = (sinc(half), sinc_prime(half));
                    f[(idx::X, idx::THETA)] = -v * dt * sp * s;
                    f[(idx::X, idx::CAR_V)] = dt * cp * s;
                    f[(idx::X, idx::CAR_YAW_RATE)] = v * dt * 0.5 * dt * (-sp * s + cp * ds);
                    f[(idx::Y, idx::THETA)] = v * dt * cp * s;
                    f[(idx::Y, idx::CAR_V)] = dt * sp * s;
                    f[(idx::Y, idx::CAR_YAW_RATE)] = v * dt * 0.5 * dt * (cp * s + sp * ds);
                }
                f[(idx::Z, idx::CAR_VZ)] = dt;
                f[(idx::THETA, idx::CAR_YAW_RATE)] = dt;
            }
            MotionKind::Cv => {
                f[(idx::X, idx::PED_VX)] = dt;
                f[(idx::Y, idx::PED_VY)] = dt;
                f[(idx::Z, idx::PED_VZ)] = dt;
                f[(idx::THETA, idx::PED_YAW_RATE)] = dt;
            }
        }
        Ok(f)
    }
}

/// sin(u)/u, with a series near zero.
fn sinc(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        1.0 - u2 / 6.0 + u2 * u2 / 120.0
    } else {
        u.sin() / u
    }
}

fn sinc_prime(u: f64) -> f64 {
    if u.abs() < 1e-3 {
        let u2 = u * u;
        -u / 3.0 + u * u2 / 30.0
    } else {
        (u * u.cos() - u.sin()) / (u * u)
    }
}

/// CTRV prediction of a car-like state.
pub fn predict_ctrv(state: &TrackState, dt: f64) -> Result<TrackState> {
    MotionModel {
        kind: MotionKind::Ctrv,
        turning_rate_epsilon: TURN_RATE_EPSILON,
    }
    .predict(state, dt)
}

/// Constant-velocity prediction of a pedestrian state.
pub fn predict_cv(state: &TrackState, dt: f64) -> Result<TrackState> {
    MotionModel {
        kind: MotionKind::Cv,
        turning_rate_epsilon: TURN_RATE_EPSILON,
    }
    .predict(state, dt)
}

/// Jacobian of the model matching `state.kind`.
pub fn jacobian(state: &TrackState, dt: f64) -> Result<DMatrix<f64>> {
    MotionModel::for_kind(state.kind).jacobian(state, dt)
}

/// Split a signed horizon into equal steps no longer than [`MAX_STEP`].
pub fn substeps(dt: f64) -> impl Iterator<Item = f64> {
    let n = if dt == 0.0 {
        0
    } else {
        (dt.abs() / MAX_STEP).ceil().max(1.0) as usize
    };
    let step = if n == 0 { 0.0 } else { dt / n as f64 };
    std::iter::repeat_n(step, n)
}

/// Propagate the mean forward (dt > 0) or backward (dt < 0), chaining steps.
pub fn propagate(state: &TrackState, dt: f64) -> TrackState {
    debug_assert!(dt.is_finite());
    let model = MotionModel::for_kind(state.kind);
    let mut out = state.clone();
    for step in substeps(dt) {
        out = model
            .predict(&out, step)
            .expect("model matches state kind and step is finite");
    }
    out
}
