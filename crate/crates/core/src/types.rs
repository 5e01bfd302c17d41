//! Shared domain types: detections, filter states, tracklets, and angle handling.

use std::collections::VecDeque;
use std::f64::consts::{PI, TAU};
use std::fmt;

use nalgebra::{DMatrix, DVector, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Wrap an angle into the half-open interval (-π, π].
pub fn wrap_angle(a: f64) -> Result<f64> {
    if !a.is_finite() {
        return Err(Error::NonFinite("angle"));
    }
    Ok(wrap(a))
}

/// Infallible variant for values already known to be finite.
pub(crate) fn wrap(a: f64) -> f64 {
    if a > -PI && a <= PI {
        return a;
    }
    let r = a.rem_euclid(TAU);
    if r > PI {
        r - TAU
    } else {
        r
    }
}

/// Object class as seen by the tracker. Dataset taxonomies collapse onto these two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClassLabel {
    CarLike,
    Pedestrian,
}

impl ClassLabel {
    pub const ALL: [ClassLabel; 2] = [ClassLabel::CarLike, ClassLabel::Pedestrian];

    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::CarLike => "car-like",
            ClassLabel::Pedestrian => "pedestrian",
        }
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Layout of a [`TrackState`] vector, which also selects the motion model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum StateKind {
    /// `[x, y, z, θ, v, θ̇, ż]`, predicted with CTRV.
    CarLike,
    /// `[x, y, z, θ, ẋ, ẏ, ż, θ̇]`, predicted with constant velocity.
    Pedestrian,
}

impl StateKind {
    pub fn dim(self) -> usize {
        match self {
            StateKind::CarLike => 7,
            StateKind::Pedestrian => 8,
        }
    }
}

/// State vector component indices.
pub mod idx {
    pub const X: usize = 0;
    pub const Y: usize = 1;
    pub const Z: usize = 2;
    pub const THETA: usize = 3;

    pub const CAR_V: usize = 4;
    pub const CAR_YAW_RATE: usize = 5;
    pub const CAR_VZ: usize = 6;

    pub const PED_VX: usize = 4;
    pub const PED_VY: usize = 5;
    pub const PED_VZ: usize = 6;
    pub const PED_YAW_RATE: usize = 7;
}

/// One upright 3D box observation.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub center: Vector3<f64>,
    /// `[w, l, h]`, all strictly positive.
    pub size: Vector3<f64>,
    pub heading: f64,
    pub score: f64,
    pub class_label: ClassLabel,
    pub frame_index: u64,
    pub timestamp: f64,
}

impl Detection {
    pub fn new(
        center: [f64; 3],
        size: [f64; 3],
        heading: f64,
        score: f64,
        class_label: ClassLabel,
        frame_index: u64,
        timestamp: f64,
    ) -> Result<Self> {
        if center.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("detection center"));
        }
        if size.iter().any(|s| !s.is_finite()) {
            return Err(Error::NonFinite("detection size"));
        }
        if size.iter().any(|&s| s <= 0.0) {
            return Err(Error::InvalidInput(format!(
                "detection size must be strictly positive, got {size:?}"
            )));
        }
        if !score.is_finite() || !(0.0..=1.0).contains(&score) {
            return Err(Error::InvalidInput(format!(
                "detection score must lie in [0, 1], got {score}"
            )));
        }
        if !timestamp.is_finite() {
            return Err(Error::NonFinite("detection timestamp"));
        }
        Ok(Self {
            center: Vector3::from(center),
            size: Vector3::from(size),
            heading: wrap_angle(heading)?,
            score,
            class_label,
            frame_index,
            timestamp,
        })
    }
}

/// Kinematic state with covariance at a point in time.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackState {
    pub kind: StateKind,
    pub vector: DVector<f64>,
    pub covariance: DMatrix<f64>,
    pub timestamp: f64,
}

impl TrackState {
    pub fn new(
        kind: StateKind,
        vector: DVector<f64>,
        covariance: DMatrix<f64>,
        timestamp: f64,
    ) -> Result<Self> {
        let n = kind.dim();
        if vector.len() != n {
            return Err(Error::InvalidInput(format!(
                "{kind:?} state needs {n} components, got {}",
                vector.len()
            )));
        }
        if covariance.shape() != (n, n) {
            return Err(Error::InvalidInput(format!(
                "{kind:?} covariance must be {n}x{n}, got {:?}",
                covariance.shape()
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) || covariance.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        let mut vector = vector;
        vector[idx::THETA] = wrap(vector[idx::THETA]);
        Ok(Self {
            kind,
            vector,
            covariance,
            timestamp,
        })
    }

    /// State with a zero covariance; handy for pure motion computations.
    pub fn from_slice(kind: StateKind, values: &[f64], timestamp: f64) -> Result<Self> {
        let n = kind.dim();
        Self::new(
            kind,
            DVector::from_column_slice(values),
            DMatrix::zeros(n, n),
            timestamp,
        )
    }

    pub fn position(&self) -> Vector3<f64> {
        Vector3::new(
            self.vector[idx::X],
            self.vector[idx::Y],
            self.vector[idx::Z],
        )
    }

    pub fn heading(&self) -> f64 {
        self.vector[idx::THETA]
    }
}

/// One entry of a tracklet's history.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackPoint {
    pub frame: u64,
    pub state: TrackState,
    /// Whether a detection was associated at this frame.
    pub matched: bool,
}

/// A partial trajectory of one hypothesised object.
///
/// `points` holds one entry per processed frame while the tracklet is alive.
/// Linking can leave frame gaps between the two merged histories.
#[derive(Debug, Clone)]
pub struct Tracklet {
    pub id: u64,
    pub class_label: ClassLabel,
    pub points: Vec<TrackPoint>,
    /// Recent associated detection sizes, newest at the back.
    pub sizes: VecDeque<Vector3<f64>>,
    pub size_window: usize,
    /// Size of the detection that started the tracklet.
    pub first_size: Vector3<f64>,
    /// Per-match similarity in (0, 1], one per matched point.
    pub similarities: Vec<f64>,
    pub confidence: f64,
    /// Score of the last associated detection.
    pub last_score: f64,
    pub consecutive_misses: u32,
}

impl Tracklet {
    /// A tracklet born from a single detection with a given initial state.
    pub fn birth(
        id: u64,
        frame: u64,
        state: TrackState,
        det: &Detection,
        size_window: usize,
    ) -> Self {
        let mut sizes = VecDeque::with_capacity(size_window.max(1));
        sizes.push_back(det.size);
        Self {
            id,
            class_label: det.class_label,
            points: vec![TrackPoint {
                frame,
                state,
                matched: true,
            }],
            sizes,
            size_window: size_window.max(1),
            first_size: det.size,
            similarities: vec![1.0],
            confidence: 1.0,
            last_score: det.score,
            consecutive_misses: 0,
        }
    }

    pub fn start_frame(&self) -> u64 {
        self.points[0].frame
    }

    /// Frame of the last associated detection.
    pub fn end_frame(&self) -> u64 {
        self.end_point().frame
    }

    /// Number of frames with an associated detection (L).
    pub fn match_count(&self) -> usize {
        self.similarities.len()
    }

    pub fn first_state(&self) -> &TrackState {
        &self.points[0].state
    }

    /// Most recent state, matched or predicted.
    pub fn last_state(&self) -> &TrackState {
        &self
            .points
            .last()
            .expect("tracklet has at least one point")
            .state
    }

    /// State at the last associated frame.
    pub fn end_state(&self) -> &TrackState {
        &self.end_point().state
    }

    fn end_point(&self) -> &TrackPoint {
        self.points
            .iter()
            .rev()
            .find(|p| p.matched)
            .unwrap_or(&self.points[0])
    }

    /// Match flags v(k) for every frame in `[t_s, now]`.
    pub fn match_history(&self, now: u64) -> Vec<bool> {
        let start = self.start_frame();
        let mut flags = vec![false; (now.saturating_sub(start) + 1) as usize];
        for p in self.points.iter().filter(|p| p.matched && p.frame <= now) {
            flags[(p.frame - start) as usize] = true;
        }
        flags
    }

    pub(crate) fn push_size(&mut self, size: Vector3<f64>) {
        self.sizes.push_back(size);
        while self.sizes.len() > self.size_window {
            self.sizes.pop_front();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn wrap_examples() {
        assert_eq!(wrap_angle(0.0).unwrap(), 0.0);
        assert!((wrap_angle(3.0 * PI).unwrap() - PI).abs() < 1e-12);
        assert_eq!(wrap_angle(-PI).unwrap(), PI);
        assert_eq!(wrap_angle(PI).unwrap(), PI);
    }

    #[test]
    fn wrap_rejects_non_finite() {
        assert!(wrap_angle(f64::NAN).is_err());
        assert!(wrap_angle(f64::INFINITY).is_err());
    }

    proptest! {
        #[test]
        fn wrap_is_idempotent(a in -1e4f64..1e4) {
            let w = wrap_angle(a).unwrap();
            prop_assert_eq!(wrap_angle(w).unwrap(), w);
            prop_assert!(w > -PI && w <= PI);
        }

        #[test]
        fn wrap_differs_by_whole_turns(a in -1e4f64..1e4) {
            let w = wrap_angle(a).unwrap();
            let turns = (w - a) / TAU;
            prop_assert!((turns - turns.round()).abs() * TAU < 1e-9);
        }
    }

    #[test]
    fn detection_validation() {
        let ok = Detection::new(
            [0.0; 3],
            [1.0, 2.0, 1.5],
            3.0 * PI,
            0.5,
            ClassLabel::CarLike,
            0,
            0.0,
        );
        assert!((ok.unwrap().heading - PI).abs() < 1e-12);
        assert!(Detection::new(
            [0.0; 3],
            [0.0, 2.0, 1.5],
            0.0,
            0.5,
            ClassLabel::CarLike,
            0,
            0.0
        )
        .is_err());
        assert!(Detection::new(
            [0.0; 3],
            [1.0, 2.0, 1.5],
            0.0,
            1.5,
            ClassLabel::CarLike,
            0,
            0.0
        )
        .is_err());
        assert!(Detection::new(
            [f64::NAN, 0.0, 0.0],
            [1.0; 3],
            0.0,
            0.5,
            ClassLabel::CarLike,
            0,
            0.0
        )
        .is_err());
    }

    #[test]
    fn state_rejects_wrong_length() {
        assert!(TrackState::from_slice(StateKind::CarLike, &[0.0; 8], 0.0).is_err());
        let s = TrackState::from_slice(
            StateKind::Pedestrian,
            &[0.0, 0.0, 0.0, -PI, 0.0, 0.0, 0.0, 0.0],
            0.0,
        )
        .unwrap();
        assert_eq!(s.heading(), PI);
    }
}
