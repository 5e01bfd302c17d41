//! Affinities between tracklets and detections, and tracklet confidence.
//!
//! Position affinity is the *negated* squared Mahalanobis distance, so larger
//! means more similar and the association cost is simply `-affinity`.

use nalgebra::Vector3;

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::kalman::{
    ekf_predict, innovation, innovation_covariance, mahalanobis_sq, measurement_model,
    MeasurementVector, NoiseConfig,
};
use crate::lifecycle::average_size;
use crate::types::{Detection, TrackState, Tracklet};

/// Floor on `1 - conf` so that termination of a perfect tracklet stays finite.
pub const MIN_TERMINATION_MARGIN: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AffinityScore {
    /// Negated squared Mahalanobis distance, ≤ 0.
    pub position: f64,
    /// Size agreement in (-1, 0].
    pub size: f64,
    pub total: f64,
}

impl AffinityScore {
    pub fn new(position: f64, size: f64) -> Self {
        Self {
            position,
            size,
            total: position + size,
        }
    }

    pub fn cost(&self) -> f64 {
        -self.total
    }
}

/// `-(h(x) - z)ᵀ S⁻¹ (h(x) - z)` for a state already at the measurement time.
pub fn position_affinity_state(
    state: &TrackState,
    z: &MeasurementVector,
    noise: &NoiseConfig,
) -> Result<f64> {
    let s = innovation_covariance(state, noise)?;
    let r = innovation(&measurement_model(state), z);
    Ok(-mahalanobis_sq(&r, &s)?)
}

/// Position affinity of a detection against the tracklet's last state
/// propagated to the detection time.
pub fn position_affinity_td(
    tracklet: &Tracklet,
    det: &Detection,
    noise: &NoiseConfig,
) -> Result<f64> {
    let last = tracklet.last_state();
    let predicted = ekf_predict(last, det.timestamp - last.timestamp, noise);
    let z = MeasurementVector::new(det.center.x, det.center.y, det.center.z, det.heading);
    position_affinity_state(&predicted, &z, noise)
}

fn check_link_order(earlier: &Tracklet, later: &Tracklet, max_link_gap: u64) -> Result<()> {
    let end = earlier.end_frame();
    let start = later.start_frame();
    if start <= end {
        return Err(Error::TemporalOrder(format!(
            "tracklet {} starts at frame {start}, not after tracklet {} ends at {end}",
            later.id, earlier.id
        )));
    }
    if start - end > max_link_gap {
        return Err(Error::TemporalOrder(format!(
            "gap of {} frames between tracklets {} and {} exceeds {max_link_gap}",
            start - end,
            earlier.id,
            later.id
        )));
    }
    Ok(())
}

/// Position affinity between a tracklet and one that starts after it ends.
///
/// Sum of two terms: the earlier tracklet's end state pushed forward to the
/// later one's start, and the later start pulled backward to the earlier end.
pub fn position_affinity_tt(
    earlier: &Tracklet,
    later: &Tracklet,
    noise: &NoiseConfig,
    max_link_gap: u64,
) -> Result<f64> {
    check_link_order(earlier, later, max_link_gap)?;
    let end = earlier.end_state();
    let start = later.first_state();
    let forward = ekf_predict(end, start.timestamp - end.timestamp, noise);
    let backward = ekf_predict(start, end.timestamp - start.timestamp, noise);
    let a = position_affinity_state(&forward, &measurement_model(start), noise)?;
    let b = position_affinity_state(&backward, &measurement_model(end), noise)?;
    Ok(a + b)
}

/// `-∏ |aᵢ - bᵢ| / (aᵢ + bᵢ)` over width, length and height.
pub fn size_affinity(a: &Vector3<f64>, b: &Vector3<f64>) -> Result<f64> {
    if a.iter()
        .chain(b.iter())
        .any(|v| !(v.is_finite() && *v > 0.0))
    {
        return Err(Error::InvalidInput(format!(
            "box sizes must be positive, got {a:?} and {b:?}"
        )));
    }
    Ok(-a
        .iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs() / (x + y))
        .product::<f64>())
}

/// Total affinity of a tracklet and a detection.
pub fn affinity_td(
    tracklet: &Tracklet,
    det: &Detection,
    config: &TrackerConfig,
) -> Result<AffinityScore> {
    let position = position_affinity_td(tracklet, det, &config.noise)?;
    let size = if config.size_affinity {
        size_affinity(&average_size(tracklet)?, &det.size)?
    } else {
        0.0
    };
    Ok(AffinityScore::new(position, size))
}

/// Total affinity between two tracklets, earliest first.
pub fn affinity_tt(
    earlier: &Tracklet,
    later: &Tracklet,
    config: &TrackerConfig,
) -> Result<AffinityScore> {
    let position = position_affinity_tt(earlier, later, &config.noise, config.max_link_gap)?;
    let size = if config.size_affinity {
        size_affinity(&average_size(earlier)?, &later.first_size)?
    } else {
        0.0
    };
    Ok(AffinityScore::new(position, size))
}

/// Squash a position affinity into (0, 1] for the confidence average.
pub fn similarity_for_confidence(position_affinity: f64, gate_position: f64) -> f64 {
    (position_affinity / gate_position).exp()
}

/// Mean match similarity times `exp(-β·W/L)`, with `W = now - t_s - L + 1`.
pub fn tracklet_confidence(tracklet: &Tracklet, now: u64, beta: f64) -> f64 {
    let l = tracklet.match_count();
    debug_assert!(l >= 1);
    let mean = tracklet.similarities.iter().sum::<f64>() / l as f64;
    let missed = now as f64 - tracklet.start_frame() as f64 - l as f64 + 1.0;
    let conf = mean * (-beta * missed.max(0.0) / l as f64).exp();
    conf.clamp(0.0, 1.0)
}

/// Cost of terminating a low tracklet: `-ln(1 - conf)`.
pub fn termination_cost(confidence: f64) -> f64 {
    -(1.0 - confidence).max(MIN_TERMINATION_MARGIN).ln()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{ClassLabel, StateKind, TrackPoint};
    use nalgebra::{DMatrix, DVector};
    use std::f64::consts::{E, TAU};

    fn unit_noise() -> NoiseConfig {
        NoiseConfig {
            process_car_like: vec![0.0; 7],
            process_pedestrian: vec![0.0; 8],
            measurement: [1.0; 4],
            ..NoiseConfig::default()
        }
    }

    fn det(center: [f64; 3], heading: f64, t: f64) -> Detection {
        Detection::new(
            center,
            [2.0, 4.0, 1.5],
            heading,
            0.9,
            ClassLabel::Pedestrian,
            0,
            t,
        )
        .unwrap()
    }

    fn ped_tracklet(id: u64, frames: &[(u64, [f64; 8])], dt: f64) -> Tracklet {
        let points = frames
            .iter()
            .map(|&(frame, v)| TrackPoint {
                frame,
                state: TrackState::new(
                    StateKind::Pedestrian,
                    DVector::from_column_slice(&v),
                    DMatrix::zeros(8, 8),
                    frame as f64 * dt,
                )
                .unwrap(),
                matched: true,
            })
            .collect::<Vec<_>>();
        let first = det([0.0; 3], 0.0, 0.0);
        let mut t = Tracklet::birth(id, points[0].frame, points[0].state.clone(), &first, 3);
        t.points = points;
        t.similarities = vec![1.0; t.points.len()];
        t
    }

    #[test]
    fn detection_at_prediction_has_zero_affinity() {
        let t = ped_tracklet(1, &[(0, [1.0, 2.0, 0.0, 0.3, 1.0, 0.0, 0.0, 0.0])], 1.0);
        let a = position_affinity_td(&t, &det([2.0, 2.0, 0.0], 0.3, 1.0), &unit_noise()).unwrap();
        assert_eq!(a, 0.0);
    }

    #[test]
    fn unit_covariance_mahalanobis() {
        let t = ped_tracklet(1, &[(0, [0.0; 8])], 1.0);
        let a = position_affinity_td(&t, &det([3.0, 4.0, 0.0], 0.0, 0.0), &unit_noise()).unwrap();
        assert_eq!(a, -25.0);
    }

    #[test]
    fn full_turn_heading_residual_vanishes() {
        let t = ped_tracklet(1, &[(0, [0.0, 0.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0])], 1.0);
        let d = det([0.0; 3], 0.5 + TAU, 0.0);
        let a = position_affinity_td(&t, &d, &unit_noise()).unwrap();
        assert!(a.abs() < 1e-24);
    }

    #[test]
    fn tracklet_pair_affinity() {
        // Two straight CV tracklets one meter apart laterally.
        let a = ped_tracklet(
            1,
            &[
                (0, [0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
                (1, [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]),
            ],
            1.0,
        );
        let b = ped_tracklet(2, &[(3, [3.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])], 1.0);
        let v = position_affinity_tt(&a, &b, &unit_noise(), 10).unwrap();
        assert!((v + 2.0).abs() < 1e-12);

        let aligned = ped_tracklet(3, &[(3, [3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0])], 1.0);
        assert!(
            position_affinity_tt(&a, &aligned, &unit_noise(), 10)
                .unwrap()
                .abs()
                < 1e-12
        );
    }

    #[test]
    fn tracklet_pair_preconditions() {
        let a = ped_tracklet(1, &[(0, [0.0; 8]), (1, [0.0; 8])], 1.0);
        let far = ped_tracklet(2, &[(20, [0.0; 8])], 1.0);
        assert!(matches!(
            position_affinity_tt(&a, &far, &unit_noise(), 10),
            Err(Error::TemporalOrder(_))
        ));
        let overlapping = ped_tracklet(3, &[(1, [0.0; 8])], 1.0);
        assert!(position_affinity_tt(&a, &overlapping, &unit_noise(), 10).is_err());
    }

    #[test]
    fn size_affinity_examples() {
        let one = Vector3::new(1.0, 1.0, 1.0);
        assert_eq!(size_affinity(&one, &one).unwrap(), 0.0);
        assert_eq!(
            size_affinity(&one, &Vector3::new(3.0, 3.0, 3.0)).unwrap(),
            -0.125
        );
        let v = size_affinity(&Vector3::new(2.0, 4.0, 1.0), &Vector3::new(2.0, 4.0, 9.0)).unwrap();
        assert_eq!(v, 0.0);
        assert!(size_affinity(&one, &Vector3::new(0.0, 1.0, 1.0)).is_err());
    }

    #[test]
    fn similarity_examples() {
        assert_eq!(similarity_for_confidence(0.0, 9.488), 1.0);
        assert!((similarity_for_confidence(-9.488, 9.488) - 1.0 / E).abs() < 1e-15);
        assert_eq!(similarity_for_confidence(f64::NEG_INFINITY, 9.488), 0.0);
    }

    #[test]
    fn confidence_examples() {
        let frames: Vec<_> = (0..4).map(|f| (f, [0.0; 8])).collect();
        let mut t = ped_tracklet(1, &frames, 1.0);
        assert_eq!(tracklet_confidence(&t, 3, 1.0), 1.0);

        // L = 4 matches spread over 6 frames, so W = 2.
        for (p, f) in t.points.iter_mut().zip([0u64, 1, 3, 4]) {
            p.frame = f;
        }
        t.similarities = vec![0.8; 4];
        let c = tracklet_confidence(&t, 5, 1.0);
        assert!((c - 0.8 * (-0.5f64).exp()).abs() < 1e-15);
        assert!((c - 0.4852).abs() < 1e-4);

        let mut prev = c;
        for now in 6..30 {
            let next = tracklet_confidence(&t, now, 1.0);
            assert!(next < prev);
            prev = next;
        }
    }

    #[test]
    fn termination_costs() {
        assert!((termination_cost(0.5) - 2f64.ln()).abs() < 1e-15);
        assert!((termination_cost(0.99) - 100f64.ln()).abs() < 1e-12);
        assert!(termination_cost(1.0).is_finite());
    }
}
