//! Multi-feature tracking-by-detection.
//!
//! Detections from a trained detector or from background subtraction are
//! associated across frames with a fused spatial/color/label/re-identification
//! cost, solved exactly with the Hungarian method, and carried through short
//! occlusions by a constant-velocity Kalman filter. A CLEAR MOT evaluator and a
//! synthetic scene generator are included for testing.

pub mod assignment;
pub mod config;
pub mod detect;
pub mod error;
pub mod eval;
pub mod features;
pub mod frames;
pub mod motion;
pub mod pipeline;
pub mod tracker;
pub mod types;

pub use error::{Error, Result};
pub use types::{BoundingBox, ClassLabel, ColorHistogram, Detection, ReidEmbedding, Track};
