//! Domain types shared by the feature, association, motion and evaluation code.

use std::fmt;

use crate::error::{Error, Result};
use crate::motion::KalmanState;

/// Axis-aligned box in continuous pixel coordinates, corner representation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    x_min: f64,
    y_min: f64,
    x_max: f64,
    y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, y_min: f64, x_max: f64, y_max: f64) -> Result<Self> {
        let invalid = |reason| Error::InvalidBox {
            x_min,
            y_min,
            x_max,
            y_max,
            reason,
        };
        if ![x_min, y_min, x_max, y_max].iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite coordinate"));
        }
        if x_min >= x_max || y_min >= y_max {
            return Err(invalid("zero or negative extent"));
        }
        Ok(Self {
            x_min,
            y_min,
            x_max,
            y_max,
        })
    }

    /// Builds a box from its top-left corner and size.
    pub fn from_xywh(x: f64, y: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(x, y, x + w, y + h)
    }

    /// Builds a box from its center and size.
    pub fn from_center(cx: f64, cy: f64, w: f64, h: f64) -> Result<Self> {
        Self::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
    }

    pub fn x_min(&self) -> f64 {
        self.x_min
    }

    pub fn y_min(&self) -> f64 {
        self.y_min
    }

    pub fn x_max(&self) -> f64 {
        self.x_max
    }

    pub fn y_max(&self) -> f64 {
        self.y_max
    }

    pub fn width(&self) -> f64 {
        self.x_max - self.x_min
    }

    pub fn height(&self) -> f64 {
        self.y_max - self.y_min
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x_min + self.x_max) / 2.0, (self.y_min + self.y_max) / 2.0)
    }

    pub fn corners(&self) -> [f64; 4] {
        [self.x_min, self.y_min, self.x_max, self.y_max]
    }

    pub fn translate(&self, dx: f64, dy: f64) -> Result<Self> {
        Self::new(self.x_min + dx, self.y_min + dy, self.x_max + dx, self.y_max + dy)
    }

    pub fn intersection_area(&self, other: &Self) -> f64 {
        let w = self.x_max.min(other.x_max) - self.x_min.max(other.x_min);
        let h = self.y_max.min(other.y_max) - self.y_min.max(other.y_min);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    /// Intersection over union, in `[0, 1]`.
    pub fn iou(&self, other: &Self) -> f64 {
        let inter = self.intersection_area(other);
        if inter == 0.0 {
            return 0.0;
        }
        let union = self.area() + other.area() - inter;
        (inter / union).clamp(0.0, 1.0)
    }
}

pub fn iou(a: &BoundingBox, b: &BoundingBox) -> f64 {
    a.iou(b)
}

pub fn center(b: &BoundingBox) -> (f64, f64) {
    b.center()
}

/// Optional category name. `None` means no label is available.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ClassLabel(Option<String>);

impl ClassLabel {
    pub fn new(name: impl Into<String>) -> Self {
        Self(Some(name.into()))
    }

    pub fn null() -> Self {
        Self(None)
    }

    pub fn name(&self) -> Option<&str> {
        self.0.as_deref()
    }

    pub fn is_null(&self) -> bool {
        self.0.is_none()
    }
}

impl fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name().unwrap_or("null"))
    }
}

impl From<&str> for ClassLabel {
    fn from(s: &str) -> Self {
        Self::new(s)
    }
}

/// Three per-channel histograms with `bins` bins each.
#[derive(Debug, Clone, PartialEq)]
pub struct ColorHistogram {
    bins: usize,
    channels: [Vec<f64>; 3],
}

impl ColorHistogram {
    pub fn zeros(bins: usize) -> Self {
        Self {
            bins,
            channels: [vec![0.0; bins], vec![0.0; bins], vec![0.0; bins]],
        }
    }

    pub fn from_channels(channels: [Vec<f64>; 3]) -> Result<Self> {
        let bins = channels[0].len();
        if bins == 0 {
            return Err(Error::Config("histogram needs at least one bin".into()));
        }
        for c in &channels[1..] {
            if c.len() != bins {
                return Err(Error::LengthMismatch {
                    what: "histogram channel bins",
                    left: bins,
                    right: c.len(),
                });
            }
        }
        if channels.iter().flatten().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(Error::Config("histogram counts must be finite and non-negative".into()));
        }
        Ok(Self { bins, channels })
    }

    /// Same counts replicated on all three channels.
    pub fn uniform_channels(counts: Vec<f64>) -> Result<Self> {
        Self::from_channels([counts.clone(), counts.clone(), counts])
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn channels(&self) -> &[Vec<f64>; 3] {
        &self.channels
    }

    pub fn channel(&self, c: usize) -> &[f64] {
        &self.channels[c]
    }

    pub(crate) fn channel_mut(&mut self, c: usize) -> &mut [f64] {
        &mut self.channels[c]
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let mut out = self.clone();
        for c in out.channels.iter_mut() {
            c.iter_mut().for_each(|v| *v *= factor);
        }
        out
    }
}

/// Re-identification feature vector.
#[derive(Debug, Clone, PartialEq)]
pub struct ReidEmbedding {
    values: Vec<f64>,
    normalized: bool,
}

impl ReidEmbedding {
    /// Wraps raw values; `normalized` is set when the norm is already 1 within 1e-6.
    pub fn new(values: Vec<f64>) -> Self {
        let norm = l2_norm(&values);
        Self {
            values,
            normalized: (norm - 1.0).abs() <= 1e-6,
        }
    }

    /// Scales the vector to unit length. A zero vector stays zero and unnormalized.
    pub fn normalized(values: Vec<f64>) -> Self {
        let norm = l2_norm(&values);
        if norm == 0.0 || !norm.is_finite() {
            return Self {
                values,
                normalized: false,
            };
        }
        Self {
            values: values.into_iter().map(|v| v / norm).collect(),
            normalized: true,
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn norm(&self) -> f64 {
        l2_norm(&self.values)
    }
}

fn l2_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// One candidate object in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub label: ClassLabel,
    /// Detector confidence in `[0, 1]`, 0 when unknown.
    pub confidence: f64,
    pub embedding: Option<ReidEmbedding>,
    pub histogram: Option<ColorHistogram>,
}

impl Detection {
    pub fn new(frame_index: usize, bbox: BoundingBox, label: ClassLabel, confidence: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::Config(format!(
                "detection confidence {confidence} outside [0, 1]"
            )));
        }
        Ok(Self {
            frame_index,
            bbox,
            label,
            confidence,
            embedding: None,
            histogram: None,
        })
    }

    /// Unlabeled detection with confidence 0, as produced by background subtraction.
    pub fn unlabeled(frame_index: usize, bbox: BoundingBox) -> Self {
        Self {
            frame_index,
            bbox,
            label: ClassLabel::null(),
            confidence: 0.0,
            embedding: None,
            histogram: None,
        }
    }

    pub fn with_embedding(mut self, embedding: ReidEmbedding) -> Self {
        self.embedding = Some(embedding);
        self
    }

    pub fn with_histogram(mut self, histogram: ColorHistogram) -> Self {
        self.histogram = Some(histogram);
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ObservationSource {
    Matched,
    Predicted,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Observation {
    pub frame_index: usize,
    pub bbox: BoundingBox,
    pub source: ObservationSource,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Active,
    Occluded,
    Terminated,
}

/// Identity of one tracked object and everything the tracker keeps about it.
#[derive(Debug, Clone)]
pub struct Track {
    pub id: u64,
    pub observations: Vec<Observation>,
    pub label: ClassLabel,
    pub label_confidence: f64,
    /// Histogram of the last matched detection.
    pub histogram: Option<ColorHistogram>,
    /// Embedding of the last matched detection.
    pub embedding: Option<ReidEmbedding>,
    pub kalman: KalmanState,
    pub missed_count: usize,
    pub matched_count: usize,
    pub status: TrackStatus,
}

impl Track {
    pub fn last_observation(&self) -> Option<&Observation> {
        self.observations.last()
    }

    pub fn last_matched(&self) -> Option<&Observation> {
        self.observations
            .iter()
            .rev()
            .find(|o| o.source == ObservationSource::Matched)
    }

    pub fn is_live(&self) -> bool {
        self.status != TrackStatus::Terminated
    }
}
