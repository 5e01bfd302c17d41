//! Synthetic scenes: exact-motion ground truth plus noisy, gappy, cluttered detections.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{FrameGroundTruth, GtObject};
use crate::motion::MotionModel;
use crate::types::{idx, wrap_angle, ClassLabel, Detection, StateKind, TrackState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimNoise {
    pub position_std: f64,
    pub heading_std: f64,
}

impl Default for SimNoise {
    fn default() -> Self {
        Self {
            position_std: 0.3,
            heading_std: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScoreModel {
    pub matched_mean: f64,
    pub matched_std: f64,
    pub clutter_mean: f64,
    pub clutter_std: f64,
}

impl Default for ScoreModel {
    fn default() -> Self {
        Self {
            matched_mean: 0.8,
            matched_std: 0.1,
            clutter_mean: 0.3,
            clutter_std: 0.1,
        }
    }
}

/// From `from_frame` on, state components 4.. are replaced by `velocity`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub from_frame: u64,
    pub velocity: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectSpec {
    pub class: ClassLabel,
    /// Full state at `start_frame`, laid out for the class.
    pub state: Vec<f64>,
    pub size: [f64; 3],
    #[serde(default)]
    pub start_frame: u64,
    /// Last frame the object exists (inclusive); defaults to the end of the scene.
    #[serde(default)]
    pub end_frame: Option<u64>,
    #[serde(default)]
    pub segments: Vec<Segment>,
    /// Inclusive frame intervals without a detection.
    #[serde(default)]
    pub dropouts: Vec<[u64; 2]>,
}

impl ObjectSpec {
    fn kind(&self) -> StateKind {
        match self.class {
            ClassLabel::CarLike => StateKind::CarLike,
            ClassLabel::Pedestrian => StateKind::Pedestrian,
        }
    }

    fn last_frame(&self, duration: u64) -> u64 {
        self.end_frame.unwrap_or(duration - 1).min(duration - 1)
    }

    fn dropped(&self, frame: u64) -> bool {
        self.dropouts.iter().any(|w| (w[0]..=w[1]).contains(&frame))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub seed: u64,
    /// Number of frames.
    pub duration: u64,
    pub frame_rate: f64,
    pub objects: Vec<ObjectSpec>,
    #[serde(default)]
    pub noise: SimNoise,
    /// Expected false detections per frame.
    #[serde(default)]
    pub clutter_rate: f64,
    /// `[x_min, x_max, y_min, y_max]` for clutter placement.
    #[serde(default = "default_region")]
    pub clutter_region: [f64; 4],
    #[serde(default)]
    pub score_model: ScoreModel,
}

fn default_region() -> [f64; 4] {
    [-50.0, 50.0, -50.0, 50.0]
}

/// A spec file holds either one scenario or a list of them.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum SpecFile {
    Suite(Vec<ScenarioSpec>),
    Single(Box<ScenarioSpec>),
}

impl SpecFile {
    pub fn into_scenarios(self) -> Vec<ScenarioSpec> {
        match self {
            SpecFile::Suite(v) => v,
            SpecFile::Single(s) => vec![*s],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimFrame {
    pub frame_index: u64,
    pub timestamp: f64,
    pub gt: Vec<GtObject>,
    pub detections: Vec<Detection>,
    /// Number of false detections (at the end of `detections`).
    pub clutter: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimScene {
    pub name: String,
    pub frames: Vec<SimFrame>,
}

impl SimScene {
    pub fn ground_truth(&self) -> Vec<FrameGroundTruth> {
        self.frames
            .iter()
            .map(|f| FrameGroundTruth {
                frame_index: f.frame_index,
                boxes: f.gt.clone(),
            })
            .collect()
    }
}

fn invalid(name: &str, msg: String) -> Error {
    Error::InvalidInput(format!("scenario `{name}`: {msg}"))
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<()> {
        let n = &self.name;
        if n.is_empty() || n.contains(['/', '\\']) {
            return Err(invalid(
                n,
                "name must be non-empty and contain no path separators".into(),
            ));
        }
        if self.duration == 0 {
            return Err(invalid(n, "duration must be positive".into()));
        }
        if !(self.frame_rate.is_finite() && self.frame_rate > 0.0) {
            return Err(invalid(
                n,
                format!("frame_rate must be > 0, got {}", self.frame_rate),
            ));
        }
        let non_negative = [
            ("position_std", self.noise.position_std),
            ("heading_std", self.noise.heading_std),
            ("clutter_rate", self.clutter_rate),
            ("matched_std", self.score_model.matched_std),
            ("clutter_std", self.score_model.clutter_std),
        ];
        for (field, v) in non_negative {
            if !(v.is_finite() && v >= 0.0) {
                return Err(invalid(
                    n,
                    format!("{field} must be finite and >= 0, got {v}"),
                ));
            }
        }
        if !(self.score_model.matched_mean.is_finite() && self.score_model.clutter_mean.is_finite())
        {
            return Err(invalid(n, "score means must be finite".into()));
        }
        let r = self.clutter_region;
        if !(r.iter().all(|v| v.is_finite()) && r[0] < r[1] && r[2] < r[3]) {
            return Err(invalid(n, format!("clutter_region {r:?} is empty")));
        }
        for (i, o) in self.objects.iter().enumerate() {
            let dim = o.kind().dim();
            if o.state.len() != dim {
                return Err(invalid(
                    n,
                    format!(
                        "object {i}: state has {} values, expected {dim}",
                        o.state.len()
                    ),
                ));
            }
            if !o.state.iter().all(|v| v.is_finite()) {
                return Err(invalid(n, format!("object {i}: non-finite state")));
            }
            if !o.size.iter().all(|v| v.is_finite() && *v > 0.0) {
                return Err(invalid(n, format!("object {i}: size must be positive")));
            }
            if o.start_frame >= self.duration {
                return Err(invalid(
                    n,
                    format!("object {i}: start_frame beyond duration"),
                ));
            }
            if o.end_frame.is_some_and(|e| e < o.start_frame) {
                return Err(invalid(
                    n,
                    format!("object {i}: end_frame before start_frame"),
                ));
            }
            for s in &o.segments {
                if s.velocity.len() != dim - 4 || !s.velocity.iter().all(|v| v.is_finite()) {
                    return Err(invalid(
                        n,
                        format!(
                            "object {i}: segment velocity must hold {} finite values",
                            dim - 4
                        ),
                    ));
                }
            }
            for w in &o.dropouts {
                if w[0] > w[1] || w[1] >= self.duration {
                    return Err(invalid(
                        n,
                        format!(
                            "object {i}: dropout window {w:?} outside 0..{}",
                            self.duration
                        ),
                    ));
                }
            }
        }
        Ok(())
    }
}

fn clipped_score(rng: &mut ChaCha8Rng, d: &Normal<f64>) -> f64 {
    d.sample(rng).clamp(0.0, 1.0)
}

fn clutter_size(class: ClassLabel) -> [f64; 3] {
    match class {
        ClassLabel::CarLike => [1.9, 4.5, 1.6],
        ClassLabel::Pedestrian => [0.7, 0.7, 1.8],
    }
}

/// Ground truth and detections for one scenario, deterministic in the seed.
pub fn generate(spec: &ScenarioSpec) -> Result<SimScene> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let dt = 1.0 / spec.frame_rate;
    let normal = |mean: f64, std: f64| {
        Normal::new(mean, std)
            .map_err(|e| Error::InvalidInput(format!("scenario `{}`: {e}", spec.name)))
    };
    let pos_noise = normal(0.0, spec.noise.position_std)?;
    let heading_noise = normal(0.0, spec.noise.heading_std)?;
    let matched_score = normal(spec.score_model.matched_mean, spec.score_model.matched_std)?;
    let clutter_score = normal(spec.score_model.clutter_mean, spec.score_model.clutter_std)?;
    let clutter_count = if spec.clutter_rate > 0.0 {
        Some(Poisson::new(spec.clutter_rate).map_err(|e| Error::InvalidInput(e.to_string()))?)
    } else {
        None
    };

    let mut states: Vec<Option<TrackState>> = vec![None; spec.objects.len()];
    let mut frames = Vec::with_capacity(spec.duration as usize);
    for frame in 0..spec.duration {
        let timestamp = frame as f64 * dt;
        let mut gt = Vec::new();
        let mut detections = Vec::new();
        for (i, o) in spec.objects.iter().enumerate() {
            if frame < o.start_frame || frame > o.last_frame(spec.duration) {
                states[i] = None;
                continue;
            }
            let mut state = match states[i].take() {
                None => {
                    let dim = o.kind().dim();
                    TrackState::new(
                        o.kind(),
                        DVector::from_column_slice(&o.state),
                        DMatrix::zeros(dim, dim),
                        timestamp,
                    )?
                }
                Some(prev) => MotionModel::for_kind(prev.kind).predict(&prev, dt)?,
            };
            if let Some(seg) = o.segments.iter().rev().find(|s| s.from_frame == frame) {
                state
                    .vector
                    .rows_mut(4, seg.velocity.len())
                    .copy_from_slice(&seg.velocity);
            }
            let center = state.position();
            let heading = state.heading();
            let size = Vector3::from(o.size);
            gt.push(GtObject {
                gt_track_id: i as u64 + 1,
                center,
                size,
                heading,
                class_label: o.class,
            });
            if !o.dropped(frame) {
                let noisy = [
                    center.x + pos_noise.sample(&mut rng),
                    center.y + pos_noise.sample(&mut rng),
                    center.z + pos_noise.sample(&mut rng),
                ];
                let h = wrap_angle(heading + heading_noise.sample(&mut rng))?;
                let score = clipped_score(&mut rng, &matched_score);
                detections.push(Detection::new(
                    noisy, o.size, h, score, o.class, frame, timestamp,
                )?);
            }
            states[i] = Some(state);
        }
        let clutter = clutter_count.map_or(0, |p| p.sample(&mut rng) as usize);
        let r = spec.clutter_region;
        for _ in 0..clutter {
            let class = if rng.random_bool(0.5) {
                ClassLabel::CarLike
            } else {
                ClassLabel::Pedestrian
            };
            let x = rng.random_range(r[0]..r[1]);
            let y = rng.random_range(r[2]..r[3]);
            let h = wrap_angle(rng.random_range(-PI..PI))?;
            let score = clipped_score(&mut rng, &clutter_score);
            detections.push(Detection::new(
                [x, y, 0.0],
                clutter_size(class),
                h,
                score,
                class,
                frame,
                timestamp,
            )?);
        }
        frames.push(SimFrame {
            frame_index: frame,
            timestamp,
            gt,
            detections,
            clutter,
        });
    }
    Ok(SimScene {
        name: spec.name.clone(),
        frames,
    })
}

/// Car-like state vector `[x, y, z, θ, v, θ̇, ż]`.
pub fn car_state(x: f64, y: f64, heading: f64, speed: f64, yaw_rate: f64) -> Vec<f64> {
    let mut s = vec![0.0; StateKind::CarLike.dim()];
    s[idx::X] = x;
    s[idx::Y] = y;
    s[idx::THETA] = heading;
    s[idx::CAR_V] = speed;
    s[idx::CAR_YAW_RATE] = yaw_rate;
    s
}

/// Pedestrian state vector `[x, y, z, θ, ẋ, ẏ, ż, θ̇]`.
pub fn pedestrian_state(x: f64, y: f64, vx: f64, vy: f64) -> Vec<f64> {
    let mut s = vec![0.0; StateKind::Pedestrian.dim()];
    s[idx::X] = x;
    s[idx::Y] = y;
    s[idx::THETA] = vy.atan2(vx);
    s[idx::PED_VX] = vx;
    s[idx::PED_VY] = vy;
    s
}
