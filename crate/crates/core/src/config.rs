//! Flat `key = value` run configuration.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors. Values
//! given on the command line are applied on top of the file with [`RunConfig::set`].

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::detect::{DetectionFilterConfig, DetectionFormat, DEFAULT_DIFF_THRESHOLD};
use crate::error::{Error, Result};
use crate::eval::DEFAULT_IOU_THRESHOLD;
use crate::features::{default_t_d, ReidMode};
use crate::tracker::TrackerConfig;

/// The configuration shipped with the tool; parses to [`RunConfig::default`].
pub const DEFAULT_CONFIG: &str = include_str!("../config/default.conf");

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub tracker: TrackerConfig,
    /// Explicit spatial normalizer; derived from the frame size when unset.
    pub t_d: Option<f64>,
    pub frame_width: u32,
    pub frame_height: u32,
    pub filter: DetectionFilterConfig,
    pub diff_threshold: u8,
    pub iou_threshold: f64,
    pub seed: u64,
    pub detection_format: DetectionFormat,
    pub detections: Option<PathBuf>,
    pub frames: Option<PathBuf>,
    pub reid: Option<PathBuf>,
    pub transfer: Option<PathBuf>,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            tracker: TrackerConfig::for_frame(960, 540),
            t_d: None,
            frame_width: 960,
            frame_height: 540,
            filter: DetectionFilterConfig::default(),
            diff_threshold: DEFAULT_DIFF_THRESHOLD,
            iou_threshold: DEFAULT_IOU_THRESHOLD,
            seed: 0,
            detection_format: DetectionFormat::Native,
            detections: None,
            frames: None,
            reid: None,
            transfer: None,
        }
    }
}

fn value<T: FromStr>(key: &str, raw: &str) -> Result<T> {
    raw.parse()
        .map_err(|_| Error::Config(format!("invalid value '{raw}' for {key}")))
}

impl RunConfig {
    pub fn parse(text: &str, source: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (n, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, val) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(source, n as u64 + 1, format!("expected 'key = value', found '{line}'")))?;
            cfg.set(key.trim(), val.trim())
                .map_err(|e| Error::parse(source, n as u64 + 1, e.to_string()))?;
        }
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text, &path.display().to_string())
    }

    pub fn set(&mut self, key: &str, raw: &str) -> Result<()> {
        let t = &mut self.tracker;
        match key {
            "alpha" => t.cost.alpha = value(key, raw)?,
            "beta" => t.cost.beta = value(key, raw)?,
            "gamma" => t.cost.gamma = value(key, raw)?,
            "lambda" => t.cost.lambda = value(key, raw)?,
            "t_d" => self.t_d = Some(value(key, raw)?),
            "reid_mode" => t.cost.reid_mode = raw.parse::<ReidMode>()?,
            "null_label_cost" => t.cost.null_label_cost = value(key, raw)?,
            "tau_match" => t.tau_match = value(key, raw)?,
            "max_missed" => t.max_missed = value(key, raw)?,
            "min_hits" => t.min_hits = value(key, raw)?,
            "histogram_bins" => t.histogram_bins = value(key, raw)?,
            "std_weight_position" => t.kalman.std_weight_position = value(key, raw)?,
            "std_weight_velocity" => t.kalman.std_weight_velocity = value(key, raw)?,
            "std_weight_measurement" => t.kalman.std_weight_measurement = value(key, raw)?,
            "frame_width" => self.frame_width = value(key, raw)?,
            "frame_height" => self.frame_height = value(key, raw)?,
            "min_confidence" => self.filter.min_confidence = value(key, raw)?,
            "min_area" => self.filter.min_area = value(key, raw)?,
            "diff_threshold" => self.diff_threshold = value(key, raw)?,
            "iou_threshold" => self.iou_threshold = value(key, raw)?,
            "seed" => self.seed = value(key, raw)?,
            "detection_format" => self.detection_format = raw.parse()?,
            "detections" => self.detections = Some(PathBuf::from(raw)),
            "frames" => self.frames = Some(PathBuf::from(raw)),
            "reid" => self.reid = Some(PathBuf::from(raw)),
            "transfer" => self.transfer = Some(PathBuf::from(raw)),
            other => return Err(Error::Config(format!("unknown configuration key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key=value` overrides.
    pub fn apply_overrides<'a>(&mut self, overrides: impl IntoIterator<Item = &'a str>) -> Result<()> {
        for kv in overrides {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override '{kv}' is not key=value")))?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Tracker configuration for frames of the given size, range-checked.
    pub fn tracker_for(&self, width: u32, height: u32) -> Result<TrackerConfig> {
        let mut t = self.tracker.clone();
        t.frame_bounds = (width, height);
        t.cost.t_d = self.t_d.unwrap_or_else(|| default_t_d(width, height));
        t.validate()?;
        Ok(t)
    }

    pub fn validate(&self) -> Result<()> {
        self.tracker_for(self.frame_width, self.frame_height)?;
        self.filter.validate()?;
        if !(self.iou_threshold > 0.0 && self.iou_threshold < 1.0) {
            return Err(Error::Config(format!(
                "iou_threshold must be in (0, 1), got {}",
                self.iou_threshold
            )));
        }
        Ok(())
    }
}
