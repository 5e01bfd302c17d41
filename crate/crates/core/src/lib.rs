//! Online 3D multi-object tracking with a local and a global association stage.

pub mod affinity;
pub mod assignment;
pub mod association;
pub mod config;
pub mod error;
pub mod io;
pub mod kalman;
pub mod lifecycle;
pub mod metrics;
pub mod motion;
pub mod sim;
pub mod types;

pub use config::{Ablation, Solver, TrackerConfig};
pub use error::{Error, Result};
pub use lifecycle::{TrackOutput, TrackerEngine};
pub use metrics::MotReport;
pub use types::{ClassLabel, Detection, StateKind, TrackState, Tracklet};
