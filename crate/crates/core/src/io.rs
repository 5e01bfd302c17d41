//! JSON Lines file formats and the track / eval / sim runners.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use log::{debug, info};
use nalgebra::Vector3;
use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::config::TrackerConfig;
use crate::error::{Error, Result};
use crate::lifecycle::{EngineStats, TrackOutput, TrackerEngine};
use crate::metrics::{evaluate, FrameGroundTruth, GtObject, HypFrame, MotReport, SceneEval};
use crate::sim::{generate, SimScene, SpecFile};
use crate::types::Detection;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub heading: f64,
    pub score: f64,
    pub class: String,
}

/// One line of a detection log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameLog {
    pub scene_id: String,
    pub frame_index: u64,
    pub timestamp: f64,
    pub detections: Vec<DetectionRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackRecord {
    pub id: u64,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub heading: f64,
    pub score: f64,
    pub class: String,
}

/// One line of a track output log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackOutputLog {
    pub scene_id: String,
    pub frame_index: u64,
    pub tracks: Vec<TrackRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtRecord {
    pub id: u64,
    pub center: [f64; 3],
    pub size: [f64; 3],
    pub heading: f64,
    pub class: String,
}

/// One line of a ground-truth log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GtFrameLog {
    pub scene_id: String,
    pub frame_index: u64,
    pub timestamp: f64,
    pub objects: Vec<GtRecord>,
}

/// Totals printed after a tracking run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct TrackSummary {
    pub scenes: usize,
    pub frames: usize,
    pub created: u64,
    pub linked: u64,
    pub terminated: u64,
    pub deleted: u64,
}

impl TrackSummary {
    fn add(&mut self, frames: usize, s: EngineStats) {
        self.scenes += 1;
        self.frames += frames;
        self.created += s.created;
        self.linked += s.linked;
        self.terminated += s.terminated;
        self.deleted += s.deleted;
    }
}

/// Parse a JSON Lines document; blank lines are skipped, line numbers are 1-based.
pub fn parse_jsonl<T: DeserializeOwned>(text: &str) -> Result<Vec<T>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    parse_jsonl(&fs::read_to_string(path)?)
}

pub fn to_jsonl<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, records: &[T]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for r in records {
        serde_json::to_writer(&mut w, r)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Group records by scene, keeping first-appearance order of scenes and
/// requiring strictly increasing frame indices within each scene.
pub fn group_scenes<T>(
    records: Vec<T>,
    key: impl Fn(&T) -> (&str, u64),
) -> Result<Vec<(String, Vec<T>)>> {
    let mut order: Vec<(String, Vec<T>)> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    for r in records {
        let (scene, frame) = key(&r);
        let slot = match index.get(scene) {
            Some(&i) => i,
            None => {
                index.insert(scene.to_string(), order.len());
                order.push((scene.to_string(), Vec::new()));
                order.len() - 1
            }
        };
        if let Some(prev) = order[slot].1.last() {
            let prev_frame = key(prev).1;
            if frame <= prev_frame {
                return Err(Error::TemporalOrder(format!(
                    "scene `{scene}`: frame {frame} follows frame {prev_frame}"
                )));
            }
        }
        order[slot].1.push(r);
    }
    Ok(order)
}

fn vec3(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v)
}

fn arr3(v: &Vector3<f64>) -> [f64; 3] {
    [v.x, v.y, v.z]
}

pub fn track_record(t: &TrackOutput) -> TrackRecord {
    TrackRecord {
        id: t.id,
        center: arr3(&t.center),
        size: arr3(&t.size),
        heading: t.heading,
        score: t.score,
        class: t.class_label.as_str().to_string(),
    }
}

pub fn detection_record(d: &Detection) -> DetectionRecord {
    DetectionRecord {
        center: arr3(&d.center),
        size: arr3(&d.size),
        heading: d.heading,
        score: d.score,
        class: d.class_label.as_str().to_string(),
    }
}

fn to_detection(
    r: &DetectionRecord,
    frame: &FrameLog,
    config: &TrackerConfig,
) -> Result<Detection> {
    let class = config.resolve_class(&r.class)?;
    Detection::new(
        r.center,
        r.size,
        r.heading,
        r.score,
        class,
        frame.frame_index,
        frame.timestamp,
    )
}

/// Run one engine over one scene's frames.
pub fn track_scene(
    config: &TrackerConfig,
    frames: &[FrameLog],
) -> Result<(Vec<TrackOutputLog>, EngineStats)> {
    let mut engine = TrackerEngine::new(config.clone())?;
    let mut out = Vec::with_capacity(frames.len());
    for f in frames {
        let dets = f
            .detections
            .iter()
            .map(|r| to_detection(r, f, config))
            .collect::<Result<Vec<_>>>()
            .map_err(|e| match e {
                Error::UnknownClass { .. } => e,
                other => Error::InvalidInput(format!(
                    "scene `{}` frame {}: {other}",
                    f.scene_id, f.frame_index
                )),
            })?;
        let tracks = engine.step(&dets, f.timestamp)?;
        engine.check_invariants()?;
        debug!(
            "scene {} frame {}: {} detections, {} tracks",
            f.scene_id,
            f.frame_index,
            dets.len(),
            tracks.len()
        );
        out.push(TrackOutputLog {
            scene_id: f.scene_id.clone(),
            frame_index: f.frame_index,
            tracks: tracks.iter().map(track_record).collect(),
        });
    }
    Ok((out, engine.stats()))
}

/// Track every scene of a detection log. Scenes run in parallel; output keeps input order.
pub fn track_frames(
    config: &TrackerConfig,
    frames: Vec<FrameLog>,
) -> Result<(Vec<TrackOutputLog>, TrackSummary)> {
    let scenes = group_scenes(frames, |f| (f.scene_id.as_str(), f.frame_index))?;
    let results: Vec<Result<(Vec<TrackOutputLog>, EngineStats)>> = scenes
        .par_iter()
        .map(|(_, frames)| track_scene(config, frames))
        .collect();
    let mut summary = TrackSummary::default();
    let mut out = Vec::new();
    for r in results {
        let (records, stats) = r?;
        summary.add(records.len(), stats);
        out.extend(records);
    }
    Ok((out, summary))
}

pub fn load_config(path: Option<&Path>) -> Result<TrackerConfig> {
    match path {
        Some(p) => TrackerConfig::from_json(&fs::read_to_string(p)?),
        None => Ok(TrackerConfig::default()),
    }
}

pub fn run_track(input: &Path, config: &TrackerConfig, output: &Path) -> Result<TrackSummary> {
    let frames: Vec<FrameLog> = read_jsonl(input)?;
    let (records, summary) = track_frames(config, frames)?;
    write_jsonl(output, &records)?;
    info!(
        "tracked {} scenes, {} frames: {} tracklets created, {} linked, {} terminated, {} deleted",
        summary.scenes,
        summary.frames,
        summary.created,
        summary.linked,
        summary.terminated,
        summary.deleted
    );
    Ok(summary)
}

fn gt_scene(frames: &[GtFrameLog], config: &TrackerConfig) -> Result<Vec<FrameGroundTruth>> {
    frames
        .iter()
        .map(|f| {
            let boxes = f
                .objects
                .iter()
                .map(|o| {
                    Ok(GtObject {
                        gt_track_id: o.id,
                        center: vec3(o.center),
                        size: vec3(o.size),
                        heading: o.heading,
                        class_label: config.resolve_class(&o.class)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(FrameGroundTruth {
                frame_index: f.frame_index,
                boxes,
            })
        })
        .collect()
}

fn hyp_scene(frames: &[TrackOutputLog], config: &TrackerConfig) -> Result<Vec<HypFrame>> {
    frames
        .iter()
        .map(|f| {
            let tracks = f
                .tracks
                .iter()
                .map(|t| {
                    if !t.score.is_finite() {
                        return Err(Error::NonFinite("track score"));
                    }
                    Ok(TrackOutput {
                        id: t.id,
                        center: vec3(t.center),
                        size: vec3(t.size),
                        heading: t.heading,
                        score: t.score,
                        class_label: config.resolve_class(&t.class)?,
                        coasting: false,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(HypFrame {
                frame_index: f.frame_index,
                tracks,
            })
        })
        .collect()
}

/// Pair gt and track scenes by scene id; every scene must appear on both sides.
pub fn pair_scenes(
    gt: Vec<GtFrameLog>,
    tracks: Vec<TrackOutputLog>,
    config: &TrackerConfig,
) -> Result<Vec<SceneEval>> {
    let gt = group_scenes(gt, |f| (f.scene_id.as_str(), f.frame_index))?;
    let tracks: BTreeMap<String, Vec<TrackOutputLog>> =
        group_scenes(tracks, |f| (f.scene_id.as_str(), f.frame_index))?
            .into_iter()
            .collect();
    let gt_ids: std::collections::HashSet<&str> = gt.iter().map(|(s, _)| s.as_str()).collect();
    let mut missing: Vec<String> = gt
        .iter()
        .filter(|(s, _)| !tracks.contains_key(s))
        .map(|(s, _)| format!("{s} (no tracks)"))
        .collect();
    missing.extend(
        tracks
            .keys()
            .filter(|s| !gt_ids.contains(s.as_str()))
            .map(|s| format!("{s} (no ground truth)")),
    );
    if !missing.is_empty() {
        return Err(Error::SceneMismatch { missing });
    }
    gt.iter()
        .map(|(scene, frames)| {
            Ok(SceneEval {
                gt: gt_scene(frames, config)?,
                hyp: hyp_scene(&tracks[scene], config)?,
            })
        })
        .collect()
}

pub fn evaluate_logs(
    gt: Vec<GtFrameLog>,
    tracks: Vec<TrackOutputLog>,
    config: &TrackerConfig,
) -> Result<MotReport> {
    let scenes = pair_scenes(gt, tracks, config)?;
    evaluate(&scenes, config.match_distance, config.amota_recall_steps)
}

/// Path of the text table written next to a JSON report.
pub fn table_path(report_path: &Path) -> PathBuf {
    report_path.with_extension("txt")
}

pub fn run_eval(
    gt: &Path,
    tracks: &Path,
    config: &TrackerConfig,
    output: Option<&Path>,
) -> Result<MotReport> {
    let report = evaluate_logs(read_jsonl(gt)?, read_jsonl(tracks)?, config)?;
    if let Some(path) = output {
        let mut json = serde_json::to_string_pretty(&report)?;
        json.push('\n');
        fs::write(path, json)?;
        fs::write(table_path(path), report.to_table())?;
    }
    Ok(report)
}

/// Serialize a simulated scene as (ground truth, detections) logs.
pub fn scene_logs(scene: &SimScene) -> (Vec<GtFrameLog>, Vec<FrameLog>) {
    let gt = scene
        .frames
        .iter()
        .map(|f| GtFrameLog {
            scene_id: scene.name.clone(),
            frame_index: f.frame_index,
            timestamp: f.timestamp,
            objects: f
                .gt
                .iter()
                .map(|o| GtRecord {
                    id: o.gt_track_id,
                    center: arr3(&o.center),
                    size: arr3(&o.size),
                    heading: o.heading,
                    class: o.class_label.as_str().to_string(),
                })
                .collect(),
        })
        .collect();
    let dets = scene
        .frames
        .iter()
        .map(|f| FrameLog {
            scene_id: scene.name.clone(),
            frame_index: f.frame_index,
            timestamp: f.timestamp,
            detections: f.detections.iter().map(detection_record).collect(),
        })
        .collect();
    (gt, dets)
}

pub fn gt_file(out_dir: &Path, scene: &str) -> PathBuf {
    out_dir.join(format!("{scene}.gt.jsonl"))
}

pub fn detections_file(out_dir: &Path, scene: &str) -> PathBuf {
    out_dir.join(format!("{scene}.detections.jsonl"))
}

pub fn load_specs(path: &Path) -> Result<Vec<crate::sim::ScenarioSpec>> {
    let text = fs::read_to_string(path)?;
    let file: SpecFile = serde_json::from_str(&text).map_err(|e| {
        Error::InvalidInput(format!("{}: not a scenario spec: {e}", path.display()))
    })?;
    let specs = file.into_scenarios();
    let mut seen = std::collections::HashSet::new();
    for s in &specs {
        s.validate()?;
        if !seen.insert(s.name.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate scenario name `{}`",
                s.name
            )));
        }
    }
    Ok(specs)
}

/// Generate every scenario of a spec file; returns the written (gt, detections) pairs.
pub fn run_sim(spec_path: &Path, out_dir: &Path) -> Result<Vec<(PathBuf, PathBuf)>> {
    let specs = load_specs(spec_path)?;
    fs::create_dir_all(out_dir)?;
    specs
        .par_iter()
        .map(|spec| {
            let scene = generate(spec)?;
            let (gt, dets) = scene_logs(&scene);
            let pair = (
                gt_file(out_dir, &spec.name),
                detections_file(out_dir, &spec.name),
            );
            write_jsonl(&pair.0, &gt)?;
            write_jsonl(&pair.1, &dets)?;
            Ok(pair)
        })
        .collect()
}
