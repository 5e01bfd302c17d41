//! Two-stage data association.
//!
//! The local stage matches high-confidence tracklets to the frame's
//! detections. The global stage solves one block LAP over
//!
//! ```text
//!              high (h)        low (l)
//!   low (l)  [ A: link      | B: terminate (diagonal) ]
//!   dets (d')[ forbidden    | C: match                ]
//! ```
//!
//! deciding for each low tracklet whether it links to a high tracklet, takes
//! a leftover detection, or is terminated.

use crate::affinity::{affinity_td, affinity_tt, termination_cost, AffinityScore};
use crate::assignment::{
    is_forbidden, solve_greedy, solve_hungarian, Assignment, CostMatrix, SENTINEL,
};
use crate::config::{Solver, TrackerConfig};
use crate::error::{Error, Result};
use crate::types::{Detection, Tracklet};

#[derive(Debug, Clone, PartialEq)]
pub struct DetectionMatch {
    pub tracklet_id: u64,
    /// Index into the detection slice handed to the stage.
    pub detection: usize,
    pub affinity: AffinityScore,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub low_id: u64,
    pub high_id: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Termination {
    pub tracklet_id: u64,
    pub cost: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct LocalOutcome {
    pub matches: Vec<DetectionMatch>,
    pub leftover: Vec<usize>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct AssociationOutcome {
    pub local_matches: Vec<DetectionMatch>,
    pub links: Vec<Link>,
    pub global_matches: Vec<DetectionMatch>,
    pub terminations: Vec<Termination>,
    /// Low tracklets the solver left unassigned; they carry on and decay.
    pub carried: Vec<u64>,
    /// Links dropped because the same low tracklet also took a detection.
    pub superseded_links: Vec<Link>,
    /// Indices into the leftover detection slice.
    pub unmatched_detections: Vec<usize>,
}

impl AssociationOutcome {
    /// Total cost of every pair the global solver selected.
    pub fn global_cost(&self) -> f64 {
        self.links.iter().map(|l| l.cost).sum::<f64>()
            + self.superseded_links.iter().map(|l| l.cost).sum::<f64>()
            + self.terminations.iter().map(|t| t.cost).sum::<f64>()
            + self
                .global_matches
                .iter()
                .map(|m| m.affinity.cost())
                .sum::<f64>()
    }
}

fn solve(m: &CostMatrix, solver: Solver, threshold: f64) -> Assignment {
    match solver {
        Solver::Hungarian => solve_hungarian(m),
        Solver::Greedy => solve_greedy(m, threshold),
    }
}

/// Greedy acceptance threshold for the local stage, in cost units.
pub fn local_threshold(config: &TrackerConfig) -> f64 {
    config.gate_position
}

/// Greedy acceptance threshold for the global stage. Link costs add two
/// gated terms plus a size term, so the bound is wider.
pub fn global_threshold(config: &TrackerConfig) -> f64 {
    2.0 * config.gate_position + 1.0
}

/// Gated tracklet-to-detection affinity; `None` when outside the gate.
fn gated_td(t: &Tracklet, d: &Detection, config: &TrackerConfig) -> Result<Option<AffinityScore>> {
    if t.class_label != d.class_label {
        return Ok(None);
    }
    let a = affinity_td(t, d, config)?;
    Ok((-a.position <= config.gate_position).then_some(a))
}

/// Match high-confidence tracklets to detections.
pub fn local_associate(
    high: &[&Tracklet],
    dets: &[Detection],
    config: &TrackerConfig,
) -> Result<LocalOutcome> {
    let mut m = CostMatrix::forbidden(high.len(), dets.len());
    let mut scores = vec![vec![None; dets.len()]; high.len()];
    for (i, t) in high.iter().enumerate() {
        for (j, d) in dets.iter().enumerate() {
            if let Some(a) = gated_td(t, d, config)? {
                m.set(i, j, a.cost())?;
                scores[i][j] = Some(a);
            }
        }
    }
    let solution = solve(&m, config.solver, local_threshold(config));
    let matches = solution
        .pairs
        .iter()
        .map(|&(i, j)| DetectionMatch {
            tracklet_id: high[i].id,
            detection: j,
            affinity: scores[i][j].expect("assigned pairs are admissible"),
        })
        .collect();
    Ok(LocalOutcome {
        matches,
        leftover: solution.unmatched_cols,
    })
}

/// Order two tracklets for linking, earliest first, if they can be linked.
fn link_order<'a>(
    low: &'a Tracklet,
    high: &'a Tracklet,
    max_link_gap: u64,
) -> Option<(&'a Tracklet, &'a Tracklet)> {
    let admissible = |earlier: &Tracklet, later: &Tracklet| {
        let (end, start) = (earlier.end_frame(), later.start_frame());
        start > end && start - end <= max_link_gap
    };
    if admissible(low, high) {
        Some((low, high))
    } else if admissible(high, low) {
        Some((high, low))
    } else {
        None
    }
}

fn link_cost(low: &Tracklet, high: &Tracklet, config: &TrackerConfig) -> Result<f64> {
    if !config.enable_linking || low.class_label != high.class_label {
        return Ok(SENTINEL);
    }
    let Some((earlier, later)) = link_order(low, high, config.max_link_gap) else {
        return Ok(SENTINEL);
    };
    let a = affinity_tt(earlier, later, config)?;
    if -a.position > 2.0 * config.gate_position {
        return Ok(SENTINEL);
    }
    Ok(a.cost())
}

/// Build the `(l + d') × (h + l)` global cost matrix.
pub fn build_global_cost(
    low: &[&Tracklet],
    high: &[&Tracklet],
    leftover: &[Detection],
    config: &TrackerConfig,
) -> Result<CostMatrix> {
    let (l, h, d) = (low.len(), high.len(), leftover.len());
    let mut g = CostMatrix::forbidden(l + d, h + l);
    for (i, lt) in low.iter().enumerate() {
        for (j, ht) in high.iter().enumerate() {
            g.set(i, j, link_cost(lt, ht, config)?)?;
        }
        g.set(i, h + i, termination_cost(lt.confidence))?;
    }
    for (k, det) in leftover.iter().enumerate() {
        for (i, lt) in low.iter().enumerate() {
            if let Some(a) = gated_td(lt, det, config)? {
                g.set(l + k, h + i, a.cost())?;
            }
        }
    }
    Ok(g)
}

/// Solve the global stage and decode the assignment.
pub fn global_associate(
    low: &[&Tracklet],
    high: &[&Tracklet],
    leftover: &[Detection],
    config: &TrackerConfig,
) -> Result<AssociationOutcome> {
    let g = build_global_cost(low, high, leftover, config)?;
    let solution = solve(&g, config.solver, global_threshold(config));
    decode(&g, &solution, low, high, leftover, config)
}

fn decode(
    g: &CostMatrix,
    solution: &Assignment,
    low: &[&Tracklet],
    high: &[&Tracklet],
    leftover: &[Detection],
    config: &TrackerConfig,
) -> Result<AssociationOutcome> {
    let (l, h) = (low.len(), high.len());
    let mut out = AssociationOutcome::default();
    let mut low_taken_by_detection = vec![false; l];
    let mut det_used = vec![false; leftover.len()];
    let mut pending_links = Vec::new();
    let mut low_assigned = vec![false; l];

    for &(row, col) in &solution.pairs {
        let cost = g.get(row, col);
        if is_forbidden(cost) {
            return Err(Error::Internal(format!(
                "solver returned forbidden pair ({row}, {col})"
            )));
        }
        if row < l {
            low_assigned[row] = true;
            if col < h {
                pending_links.push((
                    row,
                    Link {
                        low_id: low[row].id,
                        high_id: high[col].id,
                        cost,
                    },
                ));
            } else if col == h + row {
                out.terminations.push(Termination {
                    tracklet_id: low[row].id,
                    cost,
                });
            } else {
                return Err(Error::Internal(format!(
                    "low tracklet row {row} decoded to foreign termination column {col}"
                )));
            }
        } else {
            let k = row - l;
            if col < h {
                return Err(Error::Internal(format!(
                    "detection row {k} decoded to high tracklet column {col}"
                )));
            }
            let i = col - h;
            let affinity = affinity_td(low[i], &leftover[k], config)?;
            out.global_matches.push(DetectionMatch {
                tracklet_id: low[i].id,
                detection: k,
                affinity,
            });
            low_taken_by_detection[i] = true;
            det_used[k] = true;
        }
    }
    for (row, link) in pending_links {
        if low_taken_by_detection[row] {
            out.superseded_links.push(link);
        } else {
            out.links.push(link);
        }
    }
    out.carried = (0..l)
        .filter(|&i| !low_assigned[i] && !low_taken_by_detection[i])
        .map(|i| low[i].id)
        .collect();
    out.unmatched_detections = (0..leftover.len()).filter(|&k| !det_used[k]).collect();
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kalman::NoiseConfig;
    use crate::types::{ClassLabel, StateKind, TrackPoint, TrackState};
    use nalgebra::{DMatrix, DVector};

    fn config(solver: Solver) -> TrackerConfig {
        TrackerConfig {
            solver,
            noise: NoiseConfig {
                process_car_like: vec![0.0; 7],
                process_pedestrian: vec![0.0; 8],
                measurement: [1.0; 4],
                ..NoiseConfig::default()
            },
            ..TrackerConfig::default()
        }
    }

    fn det(x: f64, y: f64, t: f64) -> Detection {
        Detection::new(
            [x, y, 0.0],
            [0.6, 0.6, 1.7],
            0.0,
            0.9,
            ClassLabel::Pedestrian,
            0,
            t,
        )
        .unwrap()
    }

    /// A pedestrian tracklet matched on each of `frames` at 1 s spacing.
    fn tracklet(
        id: u64,
        frames: std::ops::RangeInclusive<u64>,
        x0: f64,
        y: f64,
        vx: f64,
        conf: f64,
    ) -> Tracklet {
        let first = *frames.start();
        let points: Vec<_> = frames
            .map(|f| {
                let x = x0 + vx * (f - first) as f64;
                TrackPoint {
                    frame: f,
                    state: TrackState::new(
                        StateKind::Pedestrian,
                        DVector::from_column_slice(&[x, y, 0.0, 0.0, vx, 0.0, 0.0, 0.0]),
                        DMatrix::zeros(8, 8),
                        f as f64,
                    )
                    .unwrap(),
                    matched: true,
                }
            })
            .collect();
        let d = det(x0, y, first as f64);
        let mut t = Tracklet::birth(id, first, points[0].state.clone(), &d, 3);
        t.similarities = vec![1.0; points.len()];
        t.points = points;
        t.confidence = conf;
        t
    }

    #[test]
    fn no_high_tracklets_leaves_all_detections() {
        let dets = vec![det(0.0, 0.0, 1.0), det(5.0, 0.0, 1.0)];
        let out = local_associate(&[], &dets, &config(Solver::Hungarian)).unwrap();
        assert!(out.matches.is_empty());
        assert_eq!(out.leftover, vec![0, 1]);
    }

    #[test]
    fn detection_on_prediction_is_matched() {
        let t = tracklet(1, 0..=0, 0.0, 0.0, 1.0, 0.9);
        let out = local_associate(&[&t], &[det(1.0, 0.0, 1.0)], &config(Solver::Greedy)).unwrap();
        assert_eq!(out.matches.len(), 1);
        assert_eq!(out.matches[0].affinity.total, 0.0);
        assert!(out.leftover.is_empty());
    }

    #[test]
    fn crossing_pair_takes_cheapest_pairing() {
        let a = tracklet(1, 0..=0, 0.0, 0.0, 1.0, 0.9);
        let b = tracklet(2, 0..=0, 0.0, 2.0, 1.0, 0.9);
        // Predictions at (1,0) and (1,2); detections slightly swapped in y.
        let dets = vec![det(1.0, 1.8, 1.0), det(1.0, 0.5, 1.0)];
        let cfg = config(Solver::Hungarian);
        let out = local_associate(&[&a, &b], &dets, &cfg).unwrap();
        let total: f64 = out.matches.iter().map(|m| m.affinity.cost()).sum();
        // Enumerate both permutations directly.
        let cost = |t: &Tracklet, d: &Detection| affinity_td(t, d, &cfg).unwrap().cost();
        let best =
            (cost(&a, &dets[0]) + cost(&b, &dets[1])).min(cost(&a, &dets[1]) + cost(&b, &dets[0]));
        assert!((total - best).abs() < 1e-12);
        assert_eq!(
            out.matches
                .iter()
                .find(|m| m.tracklet_id == 1)
                .unwrap()
                .detection,
            1
        );
    }

    #[test]
    fn out_of_gate_detections_are_left_over() {
        let t = tracklet(1, 0..=0, 0.0, 0.0, 0.0, 0.9);
        let out =
            local_associate(&[&t], &[det(10.0, 0.0, 1.0)], &config(Solver::Hungarian)).unwrap();
        assert!(out.matches.is_empty());
        assert_eq!(out.leftover, vec![0]);
    }

    #[test]
    fn degenerate_global_matrices() {
        let cfg = config(Solver::Hungarian);
        let h = tracklet(1, 0..=3, 0.0, 0.0, 1.0, 0.9);
        let g = build_global_cost(&[], &[&h], &[], &cfg).unwrap();
        assert_eq!((g.rows(), g.cols()), (0, 1));

        let low = tracklet(2, 0..=3, 0.0, 0.0, 1.0, 0.5);
        let g = build_global_cost(&[&low], &[], &[], &cfg).unwrap();
        assert_eq!((g.rows(), g.cols()), (1, 1));
        assert!((g.get(0, 0) - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn overlapping_tracklets_never_link() {
        let cfg = config(Solver::Hungarian);
        let low = tracklet(1, 0..=5, 0.0, 0.0, 1.0, 0.3);
        let high = tracklet(2, 3..=6, 3.0, 0.0, 1.0, 0.9);
        let leftover = vec![det(7.0, 0.0, 7.0)];
        let g = build_global_cost(&[&low], &[&high], &leftover, &cfg).unwrap();
        assert!(is_forbidden(g.get(0, 0)));
        assert!(!is_forbidden(g.get(1, 1)));
        assert!(is_forbidden(g.get(1, 0)));
        let out = global_associate(&[&low], &[&high], &leftover, &cfg).unwrap();
        assert!(out.links.is_empty());
    }

    #[test]
    fn link_versus_termination() {
        let cfg = config(Solver::Hungarian);
        // Low ends at frame 2 at x=2 moving +1; high starts at frame 4 exactly on course.
        let low = tracklet(1, 0..=2, 0.0, 0.0, 1.0, 0.9);
        let high = tracklet(2, 4..=6, 4.0, 0.0, 1.0, 0.95);
        let out = global_associate(&[&low], &[&high], &[], &cfg).unwrap();
        assert_eq!(out.links.len(), 1);
        assert!(out.links[0].cost < termination_cost(0.9));

        // Put the high tracklet 1.5 m off course: link cost 2*2.25 = 4.5 > 2.303.
        let off = tracklet(3, 4..=6, 4.0, 1.5, 1.0, 0.95);
        let out = global_associate(&[&low], &[&off], &[], &cfg).unwrap();
        assert!(out.links.is_empty());
        assert_eq!(out.terminations.len(), 1);
    }

    #[test]
    fn lone_low_tracklet_is_terminated() {
        let cfg = config(Solver::Hungarian);
        let low = tracklet(7, 0..=2, 0.0, 0.0, 1.0, 0.99);
        let out = global_associate(&[&low], &[], &[], &cfg).unwrap();
        assert_eq!(out.terminations.len(), 1);
        assert!((out.terminations[0].cost - 100f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn leftover_detection_in_gate_is_matched_globally() {
        let cfg = config(Solver::Hungarian);
        let low = tracklet(7, 0..=2, 0.0, 0.0, 1.0, 0.01);
        let leftover = vec![det(3.0, 0.0, 3.0)];
        let out = global_associate(&[&low], &[], &leftover, &cfg).unwrap();
        // Termination costs ~0.01 but the match costs exactly zero.
        assert_eq!(out.global_matches.len(), 1);
        assert!(out.unmatched_detections.is_empty());
        assert!(out.terminations.is_empty());
    }

    #[test]
    fn class_mismatch_is_forbidden() {
        let cfg = config(Solver::Hungarian);
        let low = tracklet(7, 0..=2, 0.0, 0.0, 1.0, 0.01);
        let mut car = det(3.0, 0.0, 3.0);
        car.class_label = ClassLabel::CarLike;
        let g = build_global_cost(&[&low], &[], &[car], &cfg).unwrap();
        assert!(is_forbidden(g.get(1, 0)));
    }
}
