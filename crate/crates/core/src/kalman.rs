//! Extended Kalman filter over [`TrackState`].
//!
//! Only pose `[x, y, z, θ]` is observed. Box sizes are not filtered; the
//! tracker averages them over a short window instead.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{DMatrix, DVector, Matrix4, SymmetricEigen, Vector4};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::motion::{substeps, MotionModel};
use crate::types::{idx, wrap, StateKind, TrackState};

/// Largest condition number accepted for an innovation covariance.
pub const MAX_CONDITION: f64 = 1e12;

/// Observed pose `[x, y, z, θ]` with θ in (-π, π].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementVector(pub Vector4<f64>);

impl MeasurementVector {
    pub fn new(x: f64, y: f64, z: f64, theta: f64) -> Self {
        Self(Vector4::new(x, y, z, wrap(theta)))
    }

    pub fn theta(&self) -> f64 {
        self.0[3]
    }
}

/// Diagonal noise parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseConfig {
    /// Process noise variance rate per car-like state component, scaled by |dt|.
    pub process_car_like: Vec<f64>,
    pub process_pedestrian: Vec<f64>,
    /// Covariance diagonal of a freshly born car-like tracklet.
    pub initial_car_like: Vec<f64>,
    pub initial_pedestrian: Vec<f64>,
    /// Measurement variances for `[x, y, z, θ]`.
    pub measurement: [f64; 4],
}

impl Default for NoiseConfig {
    fn default() -> Self {
        Self {
            process_car_like: vec![0.01, 0.01, 0.01, 0.01, 0.1, 0.1, 0.1],
            process_pedestrian: vec![0.01, 0.01, 0.01, 0.01, 0.1, 0.1, 0.1, 0.1],
            initial_car_like: vec![1.0, 1.0, 1.0, 0.25, 10.0, 10.0, 10.0],
            initial_pedestrian: vec![1.0, 1.0, 1.0, 0.25, 10.0, 10.0, 10.0, 10.0],
            measurement: [0.25, 0.25, 0.25, 0.04],
        }
    }
}

impl NoiseConfig {
    pub fn process_diag(&self, kind: StateKind) -> &[f64] {
        match kind {
            StateKind::CarLike => &self.process_car_like,
            StateKind::Pedestrian => &self.process_pedestrian,
        }
    }

    pub fn initial_diag(&self, kind: StateKind) -> &[f64] {
        match kind {
            StateKind::CarLike => &self.initial_car_like,
            StateKind::Pedestrian => &self.initial_pedestrian,
        }
    }

    pub fn measurement_covariance(&self) -> Matrix4<f64> {
        Matrix4::from_diagonal(&Vector4::from(self.measurement))
    }

    pub fn validate(&self) -> Result<()> {
        for (name, values, len) in [
            ("process_car_like", &self.process_car_like, 7),
            ("process_pedestrian", &self.process_pedestrian, 8),
            ("initial_car_like", &self.initial_car_like, 7),
            ("initial_pedestrian", &self.initial_pedestrian, 8),
        ] {
            if values.len() != len {
                return Err(Error::InvalidConfig(format!(
                    "noise.{name} needs {len} entries, got {}",
                    values.len()
                )));
            }
            check_positive(name, values)?;
        }
        check_positive("measurement", &self.measurement)
    }
}

fn check_positive(name: &str, values: &[f64]) -> Result<()> {
    if values.iter().all(|v| v.is_finite() && *v > 0.0) {
        Ok(())
    } else {
        Err(Error::InvalidConfig(format!(
            "noise.{name} entries must be finite and > 0, got {values:?}"
        )))
    }
}

/// Predict mean and covariance by `dt` seconds (negative runs backward).
///
/// Each chained sub-step applies `P ← F·P·Fᵀ + diag(Q)·|dt|`.
pub fn ekf_predict(state: &TrackState, dt: f64, noise: &NoiseConfig) -> TrackState {
    let model = MotionModel::for_kind(state.kind);
    let q = DVector::from_column_slice(noise.process_diag(state.kind));
    let mut out = state.clone();
    for step in substeps(dt) {
        let f = model.jacobian(&out, step).expect("kind matches");
        let next = model.predict(&out, step).expect("kind matches");
        let mut p = &f * &out.covariance * f.transpose();
        for i in 0..p.nrows() {
            p[(i, i)] += q[i] * step.abs();
        }
        out = TrackState {
            covariance: symmetrize(p),
            ..next
        };
    }
    out
}

/// Expected measurement h(x).
pub fn measurement_model(state: &TrackState) -> MeasurementVector {
    let v = &state.vector;
    MeasurementVector(Vector4::new(v[idx::X], v[idx::Y], v[idx::Z], v[idx::THETA]))
}

/// H = ∂h/∂x; a constant selection of the pose components.
pub fn measurement_jacobian(kind: StateKind) -> DMatrix<f64> {
    let mut h = DMatrix::zeros(4, kind.dim());
    for i in 0..4 {
        h[(i, i)] = 1.0;
    }
    h
}

/// S = H·P·Hᵀ + R, rejected when singular or badly conditioned.
pub fn innovation_covariance(state: &TrackState, noise: &NoiseConfig) -> Result<Matrix4<f64>> {
    let p_pose = state.covariance.fixed_view::<4, 4>(0, 0).into_owned();
    let s = symmetrize4(p_pose + noise.measurement_covariance());
    check_conditioning(&s)?;
    Ok(s)
}

fn check_conditioning(s: &Matrix4<f64>) -> Result<()> {
    let eig = SymmetricEigen::new(*s).eigenvalues;
    let max = eig.max();
    let min = eig.min();
    let condition = if min > 0.0 { max / min } else { f64::INFINITY };
    if !condition.is_finite() || condition > MAX_CONDITION {
        return Err(Error::SingularCovariance { condition });
    }
    Ok(())
}

/// z − h with the heading component wrapped into (-π, π].
pub fn innovation(predicted: &MeasurementVector, z: &MeasurementVector) -> Vector4<f64> {
    let mut nu = z.0 - predicted.0;
    nu[3] = wrap(nu[3]);
    nu
}

/// Heading residual after the flip rule: detections pointing backwards
/// (|Δθ| > π/2) are turned around by π first.
pub fn flipped_heading_residual(predicted_theta: f64, measured_theta: f64) -> f64 {
    let d = wrap(measured_theta - predicted_theta);
    if d.abs() > FRAC_PI_2 {
        wrap(d + PI)
    } else {
        d
    }
}

/// rᵀ·S⁻¹·r.
pub fn mahalanobis_sq(residual: &Vector4<f64>, s: &Matrix4<f64>) -> Result<f64> {
    let chol = s.cholesky().ok_or(Error::SingularCovariance {
        condition: f64::INFINITY,
    })?;
    Ok(residual.dot(&chol.solve(residual)))
}

/// EKF correction with a Joseph-form covariance update.
pub fn ekf_update(
    state: &TrackState,
    z: &MeasurementVector,
    noise: &NoiseConfig,
) -> Result<TrackState> {
    let s = innovation_covariance(state, noise)?;
    let s_inv = s
        .cholesky()
        .ok_or(Error::SingularCovariance {
            condition: f64::INFINITY,
        })?
        .inverse();
    let predicted = measurement_model(state);
    let mut nu = innovation(&predicted, z);
    nu[3] = flipped_heading_residual(predicted.theta(), z.theta());

    let n = state.kind.dim();
    let h = measurement_jacobian(state.kind);
    let p = &state.covariance;
    let s_inv = DMatrix::from_iterator(4, 4, s_inv.iter().copied());
    let gain = p * h.transpose() * s_inv;
    let nu = DVector::from_column_slice(nu.as_slice());

    let mut vector = &state.vector + &gain * nu;
    vector[idx::THETA] = wrap(vector[idx::THETA]);

    let r = DMatrix::from_iterator(4, 4, noise.measurement_covariance().iter().copied());
    let i_kh = DMatrix::<f64>::identity(n, n) - &gain * &h;
    let covariance = &i_kh * p * i_kh.transpose() + &gain * r * gain.transpose();

    Ok(TrackState {
        kind: state.kind,
        vector,
        covariance: symmetrize(covariance),
        timestamp: state.timestamp,
    })
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    (&m + m.transpose()) * 0.5
}

fn symmetrize4(m: Matrix4<f64>) -> Matrix4<f64> {
    (m + m.transpose()) * 0.5
}
