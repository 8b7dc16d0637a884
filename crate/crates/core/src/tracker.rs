//! Per-frame association state machine.
//!
//! Each [`Tracker::step`] predicts every live track forward, builds the fused
//! cost matrix against the frame's detections, solves and gates the
//! assignment, then updates matched tracks, spawns tracks for leftover
//! detections and carries unmatched tracks on their predicted boxes until they
//! are terminated.

use image::RgbImage;

use crate::assignment::{self, CostMatrix};
use crate::error::{Error, Result};
use crate::features::{self, CostComponents, CostConfig, DEFAULT_HISTOGRAM_BINS};
use crate::motion::{KalmanConfig, KalmanState};
use crate::types::{Detection, Observation, ObservationSource, Track, TrackStatus};

#[derive(Debug, Clone, PartialEq)]
pub struct TrackerConfig {
    pub cost: CostConfig,
    /// Matched pairs with a fused cost above this are rejected.
    pub tau_match: f64,
    /// Consecutive misses a track survives.
    pub max_missed: usize,
    /// Matched observations required for a track to be emitted.
    pub min_hits: usize,
    /// Frame `(width, height)` in pixels.
    pub frame_bounds: (u32, u32),
    pub kalman: KalmanConfig,
    pub histogram_bins: usize,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        Self::for_frame(960, 540)
    }
}

impl TrackerConfig {
    pub fn for_frame(width: u32, height: u32) -> Self {
        Self {
            cost: CostConfig::for_frame(width, height),
            tau_match: 0.8,
            max_missed: 10,
            min_hits: 3,
            frame_bounds: (width, height),
            kalman: KalmanConfig::default(),
            histogram_bins: DEFAULT_HISTOGRAM_BINS,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.cost.validate()?;
        self.kalman.validate()?;
        if !(self.tau_match > 0.0 && self.tau_match <= 1.0) {
            return Err(Error::Config(format!(
                "tau_match must be in (0, 1], got {}",
                self.tau_match
            )));
        }
        if self.max_missed < 1 {
            return Err(Error::Config("max_missed must be at least 1".into()));
        }
        if self.min_hits < 1 {
            return Err(Error::Config("min_hits must be at least 1".into()));
        }
        if self.frame_bounds.0 == 0 || self.frame_bounds.1 == 0 {
            return Err(Error::Config("frame bounds must be positive".into()));
        }
        if !(1..=256).contains(&self.histogram_bins) {
            return Err(Error::Config(format!(
                "histogram_bins must be in 1..=256, got {}",
                self.histogram_bins
            )));
        }
        Ok(())
    }

    fn uses_color(&self) -> bool {
        self.cost.beta > 0.0
    }

    fn uses_reid(&self) -> bool {
        self.cost.lambda > 0.0
    }
}

/// Live tracks plus the archive of terminated ones.
#[derive(Debug, Clone, Default)]
pub struct TrackSet {
    pub live: Vec<Track>,
    pub terminated: Vec<Track>,
    next_id: u64,
    last_frame: Option<usize>,
}

impl TrackSet {
    pub fn new() -> Self {
        Self {
            next_id: 1,
            ..Default::default()
        }
    }

    pub fn last_frame(&self) -> Option<usize> {
        self.last_frame
    }

    fn allocate_id(&mut self) -> u64 {
        if self.next_id == 0 {
            self.next_id = 1;
        }
        let id = self.next_id;
        self.next_id += 1;
        id
    }
}

/// Fused costs between every live track (at its current Kalman box) and every
/// detection. Pairs whose spatial cost saturates at 1 are forbidden.
///
/// Detections are expected to carry histograms already when color is in use;
/// see [`prepare_detections`].
pub fn build_cost_matrix(tracks: &TrackSet, detections: &[Detection], cfg: &TrackerConfig) -> Result<CostMatrix> {
    let mut m = CostMatrix::forbidden(tracks.live.len(), detections.len());
    for (i, track) in tracks.live.iter().enumerate() {
        let predicted = track.kalman.to_box()?;
        for (j, det) in detections.iter().enumerate() {
            let spatial = features::spatial_cost(&det.bbox, &predicted, cfg.cost.t_d)?;
            if spatial >= 1.0 {
                continue;
            }
            let color = match (&track.histogram, &det.histogram) {
                (Some(ht), Some(hd)) if cfg.uses_color() => Some(features::color_cost(hd, ht)?),
                _ => None,
            };
            let reid = match (&track.embedding, &det.embedding) {
                (Some(et), Some(ed)) if cfg.uses_reid() => Some(features::reid_cost(ed, et, cfg.cost.reid_mode)?),
                _ => None,
            };
            let label = features::label_cost(
                &det.label,
                det.confidence,
                &track.label,
                track.label_confidence,
                cfg.cost.null_label_cost,
            );
            let components = CostComponents {
                spatial,
                color,
                label,
                reid,
            };
            m.set(i, j, Some(features::final_cost(&components, &cfg.cost)));
        }
    }
    Ok(m)
}

/// Fills in missing color histograms from the frame when color costs are enabled.
pub fn prepare_detections(detections: &mut [Detection], cfg: &TrackerConfig, frame: Option<&RgbImage>) -> Result<()> {
    if !cfg.uses_color() {
        return Ok(());
    }
    let Some(frame) = frame else {
        return Ok(());
    };
    for det in detections.iter_mut().filter(|d| d.histogram.is_none()) {
        det.histogram = Some(features::extract_histogram(frame, &det.bbox, cfg.histogram_bins)?);
    }
    Ok(())
}

#[derive(Debug, Clone)]
pub struct Tracker {
    config: TrackerConfig,
    tracks: TrackSet,
}

impl Tracker {
    pub fn new(config: TrackerConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            tracks: TrackSet::new(),
        })
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.config
    }

    pub fn tracks(&self) -> &TrackSet {
        &self.tracks
    }

    /// Advances the tracker by one frame. Frames must be stepped in strictly
    /// increasing order, including frames without detections.
    pub fn step(&mut self, frame_index: usize, detections: &[Detection], frame: Option<&RgbImage>) -> Result<()> {
        if let Some(previous) = self.tracks.last_frame {
            if frame_index <= previous {
                return Err(Error::NonMonotonicFrame {
                    previous,
                    got: frame_index,
                });
            }
        }
        let cfg = &self.config;
        let mut detections = detections.to_vec();
        prepare_detections(&mut detections, cfg, frame)?;

        for track in self.tracks.live.iter_mut() {
            track.kalman = track.kalman.predict(&cfg.kalman);
        }

        let costs = build_cost_matrix(&self.tracks, &detections, cfg)?;
        let assignment = assignment::gate(&assignment::solve(&costs), cfg.tau_match);

        for &(t, d, _) in &assignment.matched {
            let det = &detections[d];
            let track = &mut self.tracks.live[t];
            track.kalman = track.kalman.update(&det.bbox, &cfg.kalman);
            track.observations.push(Observation {
                frame_index,
                bbox: det.bbox,
                source: ObservationSource::Matched,
            });
            track.matched_count += 1;
            track.missed_count = 0;
            track.status = TrackStatus::Active;
            if det.histogram.is_some() {
                track.histogram = det.histogram.clone();
            }
            if det.embedding.is_some() {
                track.embedding = det.embedding.clone();
            }
            if !det.label.is_null() && (track.label.is_null() || det.confidence > track.label_confidence) {
                track.label = det.label.clone();
                track.label_confidence = det.confidence;
            }
        }

        let (width, height) = cfg.frame_bounds;
        for &t in &assignment.unmatched_tracks {
            let track = &mut self.tracks.live[t];
            let predicted = track.kalman.to_box()?;
            track.observations.push(Observation {
                frame_index,
                bbox: predicted,
                source: ObservationSource::Predicted,
            });
            track.missed_count += 1;
            track.status = TrackStatus::Occluded;
            let (cx, cy) = predicted.center();
            let outside = cx < 0.0 || cy < 0.0 || cx >= f64::from(width) || cy >= f64::from(height);
            if outside || track.missed_count > cfg.max_missed {
                track.status = TrackStatus::Terminated;
            }
        }

        for &d in &assignment.unmatched_detections {
            let det = &detections[d];
            let id = self.tracks.allocate_id();
            self.tracks.live.push(Track {
                id,
                observations: vec![Observation {
                    frame_index,
                    bbox: det.bbox,
                    source: ObservationSource::Matched,
                }],
                label: det.label.clone(),
                label_confidence: if det.label.is_null() { 0.0 } else { det.confidence },
                histogram: det.histogram.clone(),
                embedding: det.embedding.clone(),
                kalman: KalmanState::init(&det.bbox, &cfg.kalman),
                missed_count: 0,
                matched_count: 1,
                status: TrackStatus::Active,
            });
        }

        let (live, done): (Vec<_>, Vec<_>) = std::mem::take(&mut self.tracks.live)
            .into_iter()
            .partition(Track::is_live);
        self.tracks.live = live;
        self.tracks.terminated.extend(done);
        self.tracks.last_frame = Some(frame_index);
        Ok(())
    }

    /// Terminates every track, discards those with fewer than `min_hits`
    /// matches and trims predicted observations after each track's last match.
    /// Output is ordered by track id.
    pub fn finalize(self) -> Vec<Track> {
        finalize(self.tracks, &self.config)
    }
}

pub fn finalize(tracks: TrackSet, cfg: &TrackerConfig) -> Vec<Track> {
    let mut out: Vec<Track> = tracks
        .terminated
        .into_iter()
        .chain(tracks.live)
        .filter(|t| t.matched_count >= cfg.min_hits)
        .map(|mut t| {
            t.status = TrackStatus::Terminated;
            while t
                .observations
                .last()
                .is_some_and(|o| o.source == ObservationSource::Predicted)
            {
                t.observations.pop();
            }
            t
        })
        .collect();
    out.sort_by_key(|t| t.id);
    out
}
