//! CLEAR-MOT counts and the recall-averaged AMOTA/AMOTP metrics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::assignment::{solve_hungarian, CostMatrix, SENTINEL};
use crate::error::{Error, Result};
use crate::lifecycle::TrackOutput;
use crate::types::ClassLabel;

/// Coverage fraction at or above which a gt trajectory counts as mostly tracked.
pub const MOSTLY_TRACKED: f64 = 0.8;
/// Coverage fraction below which a gt trajectory counts as mostly lost.
pub const MOSTLY_LOST: f64 = 0.2;

#[derive(Debug, Clone, PartialEq)]
pub struct GtObject {
    pub gt_track_id: u64,
    pub center: Vector3<f64>,
    pub size: Vector3<f64>,
    pub heading: f64,
    pub class_label: ClassLabel,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameGroundTruth {
    pub frame_index: u64,
    pub boxes: Vec<GtObject>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct HypFrame {
    pub frame_index: u64,
    pub tracks: Vec<TrackOutput>,
}

/// One scene's ground truth and tracker output.
#[derive(Debug, Clone, Default)]
pub struct SceneEval {
    pub gt: Vec<FrameGroundTruth>,
    pub hyp: Vec<HypFrame>,
}

/// Additive CLEAR-MOT counts; scenes merge by summation.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct MotCounts {
    pub num_gt: u64,
    pub num_gt_tracks: u64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub ids: u64,
    pub frag: u64,
    pub mt: u64,
    pub ml: u64,
    pub distance_sum: f64,
}

impl MotCounts {
    pub fn merge(&self, other: &MotCounts) -> MotCounts {
        MotCounts {
            num_gt: self.num_gt + other.num_gt,
            num_gt_tracks: self.num_gt_tracks + other.num_gt_tracks,
            tp: self.tp + other.tp,
            fp: self.fp + other.fp,
            fn_: self.fn_ + other.fn_,
            ids: self.ids + other.ids,
            frag: self.frag + other.frag,
            mt: self.mt + other.mt,
            ml: self.ml + other.ml,
            distance_sum: self.distance_sum + other.distance_sum,
        }
    }

    /// `1 - (FP + FN + IDS) / num_gt`; with no ground truth the denominator is 1.
    pub fn mota(&self) -> f64 {
        let errors = (self.fp + self.fn_ + self.ids) as f64;
        1.0 - errors / self.num_gt.max(1) as f64
    }

    /// Mean matched distance, 0 when nothing matched.
    pub fn motp(&self) -> f64 {
        if self.tp == 0 {
            0.0
        } else {
            self.distance_sum / self.tp as f64
        }
    }

    pub fn recall(&self) -> f64 {
        if self.num_gt == 0 {
            0.0
        } else {
            self.tp as f64 / self.num_gt as f64
        }
    }

    /// Recall-normalized MOTA at the achieved recall.
    pub fn motar(&self) -> f64 {
        let gt = self.num_gt as f64;
        let r = self.recall();
        if r <= 0.0 {
            return 0.0;
        }
        let errors = (self.fp + self.fn_ + self.ids) as f64;
        (1.0 - (errors - (1.0 - r) * gt) / (r * gt)).max(0.0)
    }
}

/// Operating point at one target recall of the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallPoint {
    pub target_recall: f64,
    /// Score threshold used; absent when the target recall is unreachable.
    pub threshold: Option<f64>,
    pub recall: f64,
    pub mota: f64,
    pub motar: f64,
    pub motp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MotReport {
    pub amota: f64,
    pub amotp: f64,
    pub mota: f64,
    pub motp: f64,
    pub mt: u64,
    pub ml: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub ids: u64,
    pub frag: u64,
    pub num_gt: u64,
    pub num_gt_tracks: u64,
    pub tp: u64,
    pub curve: Vec<RecallPoint>,
}

impl MotReport {
    /// Aligned plain-text table: a header row and one value row.
    pub fn to_table(&self) -> String {
        let headers = [
            "AMOTA", "AMOTP", "MT", "ML", "FP", "FN", "IDS", "FRAG", "MOTA", "MOTP",
        ];
        let values = [
            format!("{:.3}", self.amota),
            format!("{:.3}", self.amotp),
            self.mt.to_string(),
            self.ml.to_string(),
            self.fp.to_string(),
            self.fn_.to_string(),
            self.ids.to_string(),
            self.frag.to_string(),
            format!("{:.3}", self.mota),
            format!("{:.3}", self.motp),
        ];
        let mut head = String::new();
        let mut row = String::new();
        for (h, v) in headers.iter().zip(&values) {
            let w = h.len().max(v.len());
            if !head.is_empty() {
                head.push_str("  ");
                row.push_str("  ");
            }
            let _ = write!(head, "{h:>w$}");
            let _ = write!(row, "{v:>w$}");
        }
        format!("{head}\n{row}\n")
    }
}

fn ground_distance(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

fn check_alignment(scene: &SceneEval) -> Result<()> {
    for pair in scene.gt.windows(2) {
        if pair[1].frame_index <= pair[0].frame_index {
            return Err(Error::InvalidInput(format!(
                "ground-truth frame {} does not follow {}",
                pair[1].frame_index, pair[0].frame_index
            )));
        }
    }
    for pair in scene.hyp.windows(2) {
        if pair[1].frame_index <= pair[0].frame_index {
            return Err(Error::InvalidInput(format!(
                "track frame {} does not follow {}",
                pair[1].frame_index, pair[0].frame_index
            )));
        }
    }
    for f in &scene.gt {
        let mut seen = std::collections::HashSet::new();
        if !f.boxes.iter().all(|b| seen.insert(b.gt_track_id)) {
            return Err(Error::InvalidInput(format!(
                "duplicate gt id in frame {}",
                f.frame_index
            )));
        }
    }
    let gt_frames: std::collections::HashSet<u64> =
        scene.gt.iter().map(|f| f.frame_index).collect();
    if let Some(f) = scene
        .hyp
        .iter()
        .find(|f| !gt_frames.contains(&f.frame_index))
    {
        return Err(Error::InvalidInput(format!(
            "track frame {} has no ground-truth frame",
            f.frame_index
        )));
    }
    Ok(())
}

#[derive(Default)]
struct GtHistory {
    present: u64,
    tracked: u64,
    last_hyp: Option<u64>,
    ever_tracked: bool,
    tracked_last_time: bool,
}

/// Match a scene and also report the scores of matched hypotheses.
fn match_scene(
    scene: &SceneEval,
    match_distance: f64,
    min_score: Option<f64>,
    tp_scores: &mut Vec<f64>,
) -> Result<MotCounts> {
    check_alignment(scene)?;
    let hyp_by_frame: HashMap<u64, &HypFrame> =
        scene.hyp.iter().map(|f| (f.frame_index, f)).collect();
    let mut history: BTreeMap<u64, GtHistory> = BTreeMap::new();
    let mut counts = MotCounts::default();
    let empty = Vec::new();

    for frame in &scene.gt {
        let tracks: Vec<&TrackOutput> = hyp_by_frame
            .get(&frame.frame_index)
            .map_or(&empty, |f| &f.tracks)
            .iter()
            .filter(|t| min_score.is_none_or(|s| t.score >= s))
            .collect();
        let gts = &frame.boxes;
        let admissible = |g: &GtObject, h: &TrackOutput| {
            g.class_label == h.class_label
                && ground_distance(&g.center, &h.center) <= match_distance
        };

        let mut gt_match: Vec<Option<usize>> = vec![None; gts.len()];
        let mut hyp_used = vec![false; tracks.len()];

        // Keep the previous frame's correspondences while they stay valid.
        for (gi, g) in gts.iter().enumerate() {
            let Some(prev) = history.get(&g.gt_track_id).and_then(|h| h.last_hyp) else {
                continue;
            };
            if let Some(hi) = tracks
                .iter()
                .position(|t| t.id == prev)
                .filter(|&hi| !hyp_used[hi] && admissible(g, tracks[hi]))
            {
                gt_match[gi] = Some(hi);
                hyp_used[hi] = true;
            }
        }

        let free_g: Vec<usize> = (0..gts.len()).filter(|&i| gt_match[i].is_none()).collect();
        let free_h: Vec<usize> = (0..tracks.len()).filter(|&j| !hyp_used[j]).collect();
        if !free_g.is_empty() && !free_h.is_empty() {
            let mut m = CostMatrix::forbidden(free_g.len(), free_h.len());
            for (r, &gi) in free_g.iter().enumerate() {
                for (c, &hj) in free_h.iter().enumerate() {
                    let cost = if admissible(&gts[gi], tracks[hj]) {
                        ground_distance(&gts[gi].center, &tracks[hj].center)
                    } else {
                        SENTINEL
                    };
                    m.set(r, c, cost)?;
                }
            }
            for (r, c) in solve_hungarian(&m).pairs {
                gt_match[free_g[r]] = Some(free_h[c]);
                hyp_used[free_h[c]] = true;
            }
        }

        for (gi, g) in gts.iter().enumerate() {
            counts.num_gt += 1;
            let h = history.entry(g.gt_track_id).or_default();
            h.present += 1;
            match gt_match[gi] {
                Some(hi) => {
                    let t = tracks[hi];
                    counts.tp += 1;
                    counts.distance_sum += ground_distance(&g.center, &t.center);
                    tp_scores.push(t.score);
                    if h.last_hyp.is_some_and(|prev| prev != t.id) {
                        counts.ids += 1;
                    }
                    if h.ever_tracked && !h.tracked_last_time {
                        counts.frag += 1;
                    }
                    h.last_hyp = Some(t.id);
                    h.tracked += 1;
                    h.ever_tracked = true;
                    h.tracked_last_time = true;
                }
                None => {
                    counts.fn_ += 1;
                    h.tracked_last_time = false;
                }
            }
        }
        counts.fp += hyp_used.iter().filter(|u| !**u).count() as u64;
    }

    for h in history.values() {
        counts.num_gt_tracks += 1;
        let coverage = h.tracked as f64 / h.present as f64;
        if coverage >= MOSTLY_TRACKED {
            counts.mt += 1;
        } else if coverage < MOSTLY_LOST {
            counts.ml += 1;
        }
    }
    Ok(counts)
}

/// CLEAR-MOT counts for one scene.
pub fn clear_mot(scene: &SceneEval, match_distance: f64) -> Result<MotCounts> {
    match_scene(scene, match_distance, None, &mut Vec::new())
}

fn pooled(
    scenes: &[SceneEval],
    match_distance: f64,
    min_score: Option<f64>,
    scores: &mut Vec<f64>,
) -> Result<MotCounts> {
    scenes.iter().try_fold(MotCounts::default(), |acc, s| {
        Ok(acc.merge(&match_scene(s, match_distance, min_score, scores)?))
    })
}

/// Full evaluation over a set of scenes with pooled counts.
pub fn evaluate(scenes: &[SceneEval], match_distance: f64, steps: usize) -> Result<MotReport> {
    if !(match_distance.is_finite() && match_distance > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "match_distance must be > 0, got {match_distance}"
        )));
    }
    if steps == 0 {
        return Err(Error::InvalidConfig(
            "amota_recall_steps must be positive".into(),
        ));
    }
    let mut scores = Vec::new();
    let total = pooled(scenes, match_distance, None, &mut scores)?;
    scores.sort_by(|a, b| b.total_cmp(a));

    let mut cache: HashMap<u64, MotCounts> = HashMap::new();
    let mut curve = Vec::with_capacity(steps);
    for i in 1..=steps {
        let target = i as f64 / steps as f64;
        let needed = (target * total.num_gt as f64 - 1e-9).ceil().max(1.0) as usize;
        if total.num_gt == 0 || needed > scores.len() {
            curve.push(RecallPoint {
                target_recall: target,
                threshold: None,
                recall: 0.0,
                mota: 0.0,
                motar: 0.0,
                motp: match_distance,
            });
            continue;
        }
        let threshold = scores[needed - 1];
        let counts = match cache.get(&threshold.to_bits()) {
            Some(c) => *c,
            None => {
                let c = pooled(scenes, match_distance, Some(threshold), &mut Vec::new())?;
                cache.insert(threshold.to_bits(), c);
                c
            }
        };
        curve.push(RecallPoint {
            target_recall: target,
            threshold: Some(threshold),
            recall: counts.recall(),
            mota: counts.mota(),
            motar: counts.motar(),
            motp: counts.motp(),
        });
    }
    let n = curve.len() as f64;
    Ok(MotReport {
        amota: curve.iter().map(|p| p.motar).sum::<f64>() / n,
        amotp: curve.iter().map(|p| p.motp).sum::<f64>() / n,
        mota: total.mota(),
        motp: total.motp(),
        mt: total.mt,
        ml: total.ml,
        fp: total.fp,
        fn_: total.fn_,
        ids: total.ids,
        frag: total.frag,
        num_gt: total.num_gt,
        num_gt_tracks: total.num_gt_tracks,
        tp: total.tp,
        curve,
    })
}

/// `(AMOTA, AMOTP)` for a single scene.
pub fn amota(scene: &SceneEval, match_distance: f64, steps: usize) -> Result<(f64, f64)> {
    let r = evaluate(std::slice::from_ref(scene), match_distance, steps)?;
    Ok((r.amota, r.amotp))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gt(id: u64, x: f64, y: f64) -> GtObject {
        GtObject {
            gt_track_id: id,
            center: Vector3::new(x, y, 0.0),
            size: Vector3::new(2.0, 4.0, 1.5),
            heading: 0.0,
            class_label: ClassLabel::CarLike,
        }
    }

    fn hyp(id: u64, x: f64, y: f64, score: f64) -> TrackOutput {
        TrackOutput {
            id,
            center: Vector3::new(x, y, 0.0),
            size: Vector3::new(2.0, 4.0, 1.5),
            heading: 0.0,
            score,
            class_label: ClassLabel::CarLike,
            coasting: false,
        }
    }

    fn single_object(frames: u64, hyp_id: impl Fn(u64) -> Option<u64>) -> SceneEval {
        let mut s = SceneEval::default();
        for k in 0..frames {
            let x = k as f64;
            s.gt.push(FrameGroundTruth {
                frame_index: k,
                boxes: vec![gt(7, x, 0.0)],
            });
            s.hyp.push(HypFrame {
                frame_index: k,
                tracks: hyp_id(k)
                    .map(|id| hyp(id, x + 0.1, 0.0, 0.9))
                    .into_iter()
                    .collect(),
            });
        }
        s
    }

    #[test]
    fn perfect_tracking() {
        let s = single_object(10, |_| Some(1));
        let c = clear_mot(&s, 2.0).unwrap();
        assert_eq!((c.fp, c.fn_, c.ids, c.frag), (0, 0, 0, 0));
        assert_eq!(c.mota(), 1.0);
        assert_eq!((c.mt, c.ml), (1, 0));
        let (a, p) = amota(&s, 2.0, 40).unwrap();
        assert_eq!(a, 1.0);
        assert!((p - 0.1).abs() < 1e-12);
    }

    #[test]
    fn one_switch_in_ten_frames() {
        let s = single_object(10, |k| Some(if k < 5 { 1 } else { 2 }));
        let c = clear_mot(&s, 2.0).unwrap();
        assert_eq!(c.ids, 1);
        assert_eq!(c.frag, 0);
        assert_eq!(c.mota(), 0.9);
    }

    #[test]
    fn empty_hypotheses() {
        let s = single_object(10, |_| None);
        let c = clear_mot(&s, 2.0).unwrap();
        assert_eq!(c.fn_, 10);
        assert_eq!(c.mota(), 0.0);
        assert_eq!((c.mt, c.ml), (0, 1));
    }

    #[test]
    fn interruption_counts_a_fragment() {
        let s = single_object(10, |k| (!(4..6).contains(&k)).then_some(1));
        let c = clear_mot(&s, 2.0).unwrap();
        assert_eq!((c.frag, c.ids, c.fn_), (1, 0, 2));
    }

    #[test]
    fn previous_match_is_kept_over_a_closer_hypothesis() {
        let mut s = single_object(2, |_| Some(1));
        s.hyp[1].tracks.push(hyp(2, 1.0, 0.0, 0.9));
        s.hyp[1].tracks[0].center.x = 2.5;
        let c = clear_mot(&s, 2.0).unwrap();
        assert_eq!((c.ids, c.fp), (0, 1));
    }

    #[test]
    fn class_mismatch_never_matches() {
        let mut s = single_object(3, |_| Some(1));
        for f in &mut s.hyp {
            f.tracks[0].class_label = ClassLabel::Pedestrian;
        }
        let c = clear_mot(&s, 2.0).unwrap();
        assert_eq!((c.tp, c.fp, c.fn_), (0, 3, 3));
    }

    #[test]
    fn half_recall_plateau() {
        // Two objects; only the high-score one is ever reported.
        let mut s = SceneEval::default();
        for k in 0..4 {
            s.gt.push(FrameGroundTruth {
                frame_index: k,
                boxes: vec![gt(1, 0.0, 0.0), gt(2, 0.0, 50.0)],
            });
            s.hyp.push(HypFrame {
                frame_index: k,
                tracks: vec![hyp(1, 0.0, 0.0, 0.9)],
            });
        }
        let r = evaluate(&[s], 2.0, 40).unwrap();
        for p in &r.curve {
            if p.target_recall <= 0.5 + 1e-12 {
                assert_eq!(p.motar, 1.0);
            } else {
                assert_eq!(p.motar, 0.0);
                assert!(p.threshold.is_none());
            }
        }
        assert_eq!(r.amota, 0.5);
    }

    #[test]
    fn single_step_is_full_recall_motar() {
        let s = single_object(10, |k| Some(if k < 5 { 1 } else { 2 }));
        let (a, _) = amota(&s, 2.0, 1).unwrap();
        assert!((a - 0.9).abs() < 1e-12);
    }

    #[test]
    fn misaligned_frames_are_rejected() {
        let mut s = single_object(3, |_| Some(1));
        s.hyp[2].frame_index = 17;
        assert!(clear_mot(&s, 2.0).is_err());
    }

    #[test]
    fn merge_is_additive() {
        let a = clear_mot(&single_object(10, |_| Some(1)), 2.0).unwrap();
        let b = clear_mot(&single_object(10, |k| Some(if k < 5 { 1 } else { 2 })), 2.0).unwrap();
        let m = a.merge(&b);
        assert_eq!(m.num_gt, 20);
        assert_eq!(m.ids, 1);
        assert_eq!(m.merge(&MotCounts::default()), m);
    }

    #[test]
    fn table_has_every_column() {
        let r = evaluate(&[single_object(3, |_| Some(1))], 2.0, 40).unwrap();
        let t = r.to_table();
        let header: Vec<&str> = t.lines().next().unwrap().split_whitespace().collect();
        assert_eq!(
            &header[..8],
            &["AMOTA", "AMOTP", "MT", "ML", "FP", "FN", "IDS", "FRAG"]
        );
    }
}
