//! Per-scene tracker: prediction, the two association stages, state updates,
//! births, links, terminations and deletions.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::affinity::{similarity_for_confidence, tracklet_confidence, AffinityScore};
use crate::association::{global_associate, local_associate, AssociationOutcome, DetectionMatch};
use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::kalman::{ekf_predict, ekf_update, min_eigenvalue, MeasurementVector};
use crate::types::{idx, ClassLabel, Detection, TrackPoint, TrackState, Tracklet};

/// One reported box for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutput {
    pub id: u64,
    pub center: Vector3<f64>,
    pub size: Vector3<f64>,
    pub heading: f64,
    pub score: f64,
    pub class_label: ClassLabel,
    /// Reported from prediction only; no detection this frame.
    pub coasting: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EngineStats {
    pub created: u64,
    pub linked: u64,
    pub terminated: u64,
    pub deleted: u64,
}

/// Component-wise mean of the sizes in the tracklet's window.
pub fn average_size(t: &Tracklet) -> Result<Vector3<f64>> {
    if t.sizes.is_empty() {
        return Err(Error::InvalidInput(format!(
            "tracklet {} has no sizes",
            t.id
        )));
    }
    let sum: Vector3<f64> = t.sizes.iter().sum();
    Ok(sum / t.sizes.len() as f64)
}

/// Online tracker for one scene.
#[derive(Debug, Clone)]
pub struct TrackerEngine {
    config: TrackerConfig,
    tracklets: BTreeMap<u64, Tracklet>,
    next_id: u64,
    frame: Option<u64>,
    last_timestamp: Option<f64>,
    stats: EngineStats,
    last_outcomes: Vec<(ClassLabel, AssociationOutcome)>,
}

impl TrackerEngine {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tracklets: BTreeMap::new(),
            next_id: 1,
            frame: None,
            last_timestamp: None,
            stats: EngineStats::default(),
            last_outcomes: Vec::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracklets(&self) -> impl Iterator<Item = &Tracklet> {
        self.tracklets.values()
    }

    pub fn tracklet(&self, id: u64) -> Option<&Tracklet> {
        self.tracklets.get(&id)
    }

    /// Index of the last processed frame.
    pub fn frame(&self) -> Option<u64> {
        self.frame
    }

    pub fn stats(&self) -> EngineStats {
        self.stats
    }

    /// Association decisions of the last frame, per class group.
    pub fn last_outcomes(&self) -> &[(ClassLabel, AssociationOutcome)] {
        &self.last_outcomes
    }

    /// Process one frame of detections.
    pub fn step(&mut self, detections: &[Detection], timestamp: f64) -> Result<Vec<TrackOutput>> {
        if !timestamp.is_finite() {
            return Err(Error::NonFinite("timestamp"));
        }
        if let Some(prev) = self.last_timestamp {
            if timestamp <= prev {
                return Err(Error::TemporalOrder(format!(
                    "timestamp {timestamp} does not advance past {prev}"
                )));
            }
        }
        let frame = self.frame.map_or(0, |f| f + 1);
        self.frame = Some(frame);
        self.last_timestamp = Some(timestamp);
        self.last_outcomes.clear();

        self.predict_all(frame, timestamp);
        self.refresh_confidences(frame);

        for class in ClassLabel::ALL {
            let dets: Vec<Detection> = detections
                .iter()
                .filter(|d| d.class_label == class)
                .map(|d| Detection {
                    timestamp,
                    frame_index: frame,
                    ..d.clone()
                })
                .collect();
            let outcome = self.associate_group(class, &dets, frame, timestamp)?;
            self.last_outcomes.push((class, outcome));
        }

        let max_miss = self.config.max_miss_frames;
        let before = self.tracklets.len();
        self.tracklets
            .retain(|_, t| t.consecutive_misses <= max_miss);
        self.stats.deleted += (before - self.tracklets.len()) as u64;

        Ok(self.outputs(frame))
    }

    fn predict_all(&mut self, frame: u64, timestamp: f64) {
        let noise = &self.config.noise;
        for t in self.tracklets.values_mut() {
            let last = t.last_state();
            let predicted = ekf_predict(last, timestamp - last.timestamp, noise);
            t.points.push(TrackPoint {
                frame,
                state: predicted,
                matched: false,
            });
            t.consecutive_misses += 1;
        }
    }

    /// Confidence as of the last completed frame, before this frame's detections.
    fn refresh_confidences(&mut self, frame: u64) {
        let now = frame.saturating_sub(1);
        let beta = self.config.beta;
        for t in self.tracklets.values_mut() {
            t.confidence = tracklet_confidence(t, now, beta);
        }
    }

    fn associate_group(
        &mut self,
        class: ClassLabel,
        dets: &[Detection],
        frame: u64,
        timestamp: f64,
    ) -> Result<AssociationOutcome> {
        let tau = self.config.tau_c;
        let (high_ids, low_ids): (Vec<u64>, Vec<u64>) = self
            .tracklets
            .values()
            .filter(|t| t.class_label == class)
            .map(|t| t.id)
            .partition(|id| !self.config.global_only && self.tracklets[id].confidence > tau);

        let local = {
            let high: Vec<&Tracklet> = high_ids.iter().map(|id| &self.tracklets[id]).collect();
            local_associate(&high, dets, &self.config)?
        };
        for m in &local.matches {
            self.apply_match(m.tracklet_id, &dets[m.detection], m.affinity)?;
        }
        let leftover: Vec<Detection> = local.leftover.iter().map(|&j| dets[j].clone()).collect();

        let mut outcome = {
            let low: Vec<&Tracklet> = low_ids.iter().map(|id| &self.tracklets[id]).collect();
            let high: Vec<&Tracklet> = high_ids.iter().map(|id| &self.tracklets[id]).collect();
            global_associate(&low, &high, &leftover, &self.config)?
        };

        for m in &outcome.global_matches {
            self.apply_match(m.tracklet_id, &leftover[m.detection], m.affinity)?;
        }
        for link in &outcome.links {
            self.merge(link.low_id, link.high_id)?;
        }
        for term in &outcome.terminations {
            self.tracklets.remove(&term.tracklet_id);
            self.stats.terminated += 1;
        }
        for &k in &outcome.unmatched_detections {
            self.birth(&leftover[k], frame, timestamp)?;
        }

        // Report detection indices relative to this class group's slice.
        for m in outcome.global_matches.iter_mut() {
            m.detection = local.leftover[m.detection];
        }
        outcome.unmatched_detections = outcome
            .unmatched_detections
            .iter()
            .map(|&k| local.leftover[k])
            .collect();
        outcome.local_matches = local.matches;
        Ok(outcome)
    }

    fn apply_match(&mut self, id: u64, det: &Detection, affinity: AffinityScore) -> Result<()> {
        let gate = self.config.gate_position;
        let noise = &self.config.noise;
        let t = self
            .tracklets
            .get_mut(&id)
            .ok_or_else(|| Error::Internal(format!("match for unknown tracklet {id}")))?;
        let point = t
            .points
            .last_mut()
            .ok_or_else(|| Error::Internal(format!("tracklet {id} has no points")))?;
        if point.matched {
            return Err(Error::Internal(format!(
                "tracklet {id} matched twice in one frame"
            )));
        }
        let z = MeasurementVector::new(det.center.x, det.center.y, det.center.z, det.heading);
        point.state = ekf_update(&point.state, &z, noise)?;
        point.matched = true;
        t.push_size(det.size);
        t.similarities
            .push(similarity_for_confidence(affinity.position, gate));
        t.last_score = det.score;
        t.consecutive_misses = 0;
        Ok(())
    }

    /// Fold a low tracklet into a high one. The merged tracklet keeps the high id.
    fn merge(&mut self, low_id: u64, high_id: u64) -> Result<()> {
        let low = self
            .tracklets
            .remove(&low_id)
            .ok_or_else(|| Error::Internal(format!("link from unknown tracklet {low_id}")))?;
        let high = self
            .tracklets
            .remove(&high_id)
            .ok_or_else(|| Error::Internal(format!("link to unknown tracklet {high_id}")))?;
        let (earlier, later) = if low.end_frame() < high.start_frame() {
            (low, high)
        } else if high.end_frame() < low.start_frame() {
            (high, low)
        } else {
            return Err(Error::Internal(format!(
                "linked tracklets {low_id} and {high_id} overlap in time"
            )));
        };
        let end = earlier.end_frame();
        let mut merged = Tracklet {
            id: high_id,
            class_label: earlier.class_label,
            points: earlier
                .points
                .into_iter()
                .filter(|p| p.frame <= end)
                .collect(),
            sizes: earlier.sizes,
            size_window: earlier.size_window,
            first_size: earlier.first_size,
            similarities: earlier.similarities,
            confidence: later.confidence,
            last_score: later.last_score,
            consecutive_misses: later.consecutive_misses,
        };
        merged.points.extend(later.points);
        merged.similarities.extend(later.similarities);
        for s in later.sizes {
            merged.push_size(s);
        }
        self.tracklets.insert(high_id, merged);
        self.stats.linked += 1;
        Ok(())
    }

    fn birth(&mut self, det: &Detection, frame: u64, timestamp: f64) -> Result<()> {
        let kind = self.config.state_kind(det.class_label);
        let mut vector = DVector::zeros(kind.dim());
        vector[idx::X] = det.center.x;
        vector[idx::Y] = det.center.y;
        vector[idx::Z] = det.center.z;
        vector[idx::THETA] = det.heading;
        let p0 = DMatrix::from_diagonal(&DVector::from_column_slice(
            self.config.noise.initial_diag(kind),
        ));
        let state = TrackState::new(kind, vector, p0, timestamp)?;
        let id = self.next_id;
        self.next_id += 1;
        self.tracklets.insert(
            id,
            Tracklet::birth(id, frame, state, det, self.config.size_window),
        );
        self.stats.created += 1;
        Ok(())
    }

    fn outputs(&mut self, frame: u64) -> Vec<TrackOutput> {
        let beta = self.config.beta;
        let mut out = Vec::new();
        for t in self.tracklets.values_mut() {
            t.confidence = tracklet_confidence(t, frame, beta);
            let coasting = t.consecutive_misses > 0;
            if t.consecutive_misses > self.config.coast_frames {
                continue;
            }
            let mut score = t.last_score * t.confidence;
            if coasting {
                score *= self.config.coast_score_penalty;
            }
            let state = t.last_state();
            out.push(TrackOutput {
                id: t.id,
                center: state.position(),
                size: average_size(t).expect("live tracklets hold at least one size"),
                heading: state.heading(),
                score,
                class_label: t.class_label,
                coasting,
            });
        }
        out
    }

    /// Check the structural invariants of every live tracklet.
    pub fn check_invariants(&self) -> Result<()> {
        let now = self.frame.unwrap_or(0);
        for t in self.tracklets.values() {
            let fail = |msg: String| Err(Error::Internal(format!("tracklet {}: {msg}", t.id)));
            if t.start_frame() > t.end_frame() || t.end_frame() > now {
                return fail(format!(
                    "frames out of order: t_s={} t_e={} now={now}",
                    t.start_frame(),
                    t.end_frame()
                ));
            }
            if t.match_count() < 1
                || t.points.iter().filter(|p| p.matched).count() != t.match_count()
            {
                return fail("match bookkeeping out of sync".into());
            }
            if !(0.0..=1.0).contains(&t.confidence) {
                return fail(format!("confidence {} outside [0, 1]", t.confidence));
            }
            let p = &t.last_state().covariance;
            if (p - p.transpose()).abs().max() > 1e-9 || min_eigenvalue(p) < -1e-9 {
                return fail("covariance not symmetric PSD".into());
            }
        }
        Ok(())
    }
}

/// Detections matched by either stage in an outcome, as `(tracklet, detection)`.
pub fn matched_pairs(outcome: &AssociationOutcome) -> impl Iterator<Item = &DetectionMatch> {
    outcome
        .local_matches
        .iter()
        .chain(outcome.global_matches.iter())
}
