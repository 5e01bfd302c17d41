//! Tracker configuration, the embedded defaults, and ablation presets.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kalman::NoiseConfig;
use crate::types::{ClassLabel, StateKind};

/// Complete default configuration, shipped inside the binary.
pub const DEFAULT_CONFIG_JSON: &str = include_str!("../config/default.json");

/// Squared-Mahalanobis gate: 95% quantile of chi-square with 4 dof.
pub const CHI2_4DOF_95: f64 = 9.488;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    Hungarian,
    Greedy,
}

impl FromStr for Solver {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hungarian" => Ok(Solver::Hungarian),
            "greedy" => Ok(Solver::Greedy),
            other => Err(Error::InvalidConfig(format!(
                "unknown solver `{other}` (expected hungarian or greedy)"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackerConfig {
    /// Miss-decay rate of the tracklet confidence.
    pub beta: f64,
    /// Confidence threshold separating high from low tracklets.
    pub tau_c: f64,
    /// Largest squared Mahalanobis distance admitted for a pairing.
    pub gate_position: f64,
    pub max_miss_frames: u32,
    pub max_link_gap: u64,
    pub size_window: usize,
    pub solver: Solver,
    pub noise: NoiseConfig,
    pub amota_recall_steps: usize,
    /// Ground-plane radius in meters for evaluation matching.
    pub match_distance: f64,
    /// Allow low tracklets to link with high tracklets.
    pub enable_linking: bool,
    /// Skip the local stage; every tracklet goes through the global stage.
    pub global_only: bool,
    /// Track car-like objects with the constant-velocity model.
    pub cv_only: bool,
    pub size_affinity: bool,
    /// Frames an unmatched tracklet keeps being reported.
    pub coast_frames: u32,
    pub coast_score_penalty: f64,
    /// Dataset class name to tracker class.
    pub class_map: BTreeMap<String, ClassLabel>,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        serde_json::from_str(DEFAULT_CONFIG_JSON).expect("embedded default config parses")
    }
}

impl TrackerConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let config: TrackerConfig = serde_json::from_str(text)
            .map_err(|e| Error::InvalidConfig(format!("config does not parse: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("beta", self.beta),
            ("gate_position", self.gate_position),
            ("match_distance", self.match_distance),
        ];
        for (name, value) in positive {
            if !(value.is_finite() && value > 0.0) {
                return Err(Error::InvalidConfig(format!(
                    "{name} must be > 0, got {value}"
                )));
            }
        }
        if !(self.tau_c > 0.0 && self.tau_c < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "tau_c must lie in (0, 1), got {}",
                self.tau_c
            )));
        }
        if !(0.0..=1.0).contains(&self.coast_score_penalty) {
            return Err(Error::InvalidConfig(format!(
                "coast_score_penalty must lie in [0, 1], got {}",
                self.coast_score_penalty
            )));
        }
        for (name, value) in [
            ("max_miss_frames", self.max_miss_frames as u64),
            ("max_link_gap", self.max_link_gap),
            ("size_window", self.size_window as u64),
            ("amota_recall_steps", self.amota_recall_steps as u64),
        ] {
            if value == 0 {
                return Err(Error::InvalidConfig(format!("{name} must be positive")));
            }
        }
        self.noise.validate()
    }

    /// State layout (and so motion model) used for a class.
    pub fn state_kind(&self, class: ClassLabel) -> StateKind {
        match class {
            ClassLabel::CarLike if !self.cv_only => StateKind::CarLike,
            _ => StateKind::Pedestrian,
        }
    }

    pub fn resolve_class(&self, name: &str) -> Result<ClassLabel> {
        self.class_map
            .get(name)
            .copied()
            .ok_or_else(|| Error::UnknownClass {
                class: name.to_string(),
                known: self
                    .class_map
                    .iter()
                    .map(|(k, v)| format!("{k}->{v}"))
                    .collect::<Vec<_>>()
                    .join(", "),
            })
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        match ablation {
            Ablation::Default => {}
            Ablation::Hungarian => self.solver = Solver::Hungarian,
            Ablation::NoLinking => self.enable_linking = false,
            Ablation::GlobalOnly => self.global_only = true,
            Ablation::CvOnly => self.cv_only = true,
            Ablation::NoSizeAffinity => self.size_affinity = false,
        }
        self
    }
}

/// One-knob variations of the default tracker.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Ablation {
    Default,
    Hungarian,
    NoLinking,
    GlobalOnly,
    CvOnly,
    NoSizeAffinity,
}

impl Ablation {
    pub const ALL: [Ablation; 6] = [
        Ablation::Default,
        Ablation::Hungarian,
        Ablation::NoLinking,
        Ablation::GlobalOnly,
        Ablation::CvOnly,
        Ablation::NoSizeAffinity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Default => "default",
            Ablation::Hungarian => "hungarian",
            Ablation::NoLinking => "no-linking",
            Ablation::GlobalOnly => "global-only",
            Ablation::CvOnly => "cv-only",
            Ablation::NoSizeAffinity => "no-size-affinity",
        }
    }
}

impl fmt::Display for Ablation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ablation::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Ablation::ALL.iter().map(|a| a.name()).collect();
                Error::InvalidConfig(format!(
                    "unknown ablation `{s}` (expected one of {})",
                    names.join(", ")
                ))
            })
    }
}
