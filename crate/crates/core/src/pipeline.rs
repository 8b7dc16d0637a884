//! Whole-sequence drivers shared by the command line and the tests.

use image::RgbImage;

use crate::detect::{
    detect_foreground, filter_detections, learn_background_with, transfer_labels, BackgroundModel,
    DetectionFilterConfig, DetectionSequence, DetectionSource,
};
use crate::error::{Error, Result};
use crate::tracker::{Tracker, TrackerConfig};
use crate::types::{Detection, Track};

/// Steps a tracker over frames `0..num_frames` and returns the finalized tracks.
/// `frame` is asked for the image of each frame; returning `None` skips color features.
pub fn track_sequence(
    seq: &[Vec<Detection>],
    num_frames: usize,
    config: TrackerConfig,
    mut frame: impl FnMut(usize) -> Result<Option<RgbImage>>,
) -> Result<Vec<Track>> {
    if seq.len() > num_frames {
        if let Some((f, _)) = seq.iter().enumerate().skip(num_frames).find(|(_, d)| !d.is_empty()) {
            return Err(Error::Input(format!(
                "detections reference frame {f} but the sequence has {num_frames} frames"
            )));
        }
    }
    let mut tracker = Tracker::new(config)?;
    for f in 0..num_frames {
        let image = frame(f)?;
        let dets = seq.get(f).map(Vec::as_slice).unwrap_or(&[]);
        tracker.step(f, dets, image.as_ref())?;
    }
    Ok(tracker.finalize())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BackgroundParams {
    /// Number of frames sampled for the median.
    pub k: usize,
    pub seed: u64,
    pub diff_threshold: u8,
}

pub fn learn_model(
    num_frames: usize,
    params: &BackgroundParams,
    load: impl FnMut(usize) -> Result<RgbImage>,
) -> Result<BackgroundModel> {
    let mut model = learn_background_with(num_frames, params.k, params.seed, load)?;
    model.diff_threshold = params.diff_threshold;
    Ok(model)
}

/// Background-subtraction detections for one frame: area filter first, then
/// optional label transfer from confidence-filtered supervised boxes.
pub fn frame_detections(
    frame_index: usize,
    image: &RgbImage,
    model: &BackgroundModel,
    filter: &DetectionFilterConfig,
    supervised: Option<&[Detection]>,
) -> Result<Vec<Detection>> {
    let blobs = detect_foreground(frame_index, image, model, filter.min_area)?;
    let blobs = filter_detections(&blobs, DetectionSource::Unsupervised, filter);
    Ok(match supervised {
        Some(sup) => transfer_labels(&blobs, &filter_detections(sup, DetectionSource::Supervised, filter)),
        None => blobs,
    })
}

/// Runs background subtraction over a whole sequence.
pub fn detect_sequence(
    num_frames: usize,
    params: &BackgroundParams,
    filter: &DetectionFilterConfig,
    supervised: Option<&[Vec<Detection>]>,
    mut load: impl FnMut(usize) -> Result<RgbImage>,
) -> Result<DetectionSequence> {
    let model = learn_model(num_frames, params, &mut load)?;
    (0..num_frames)
        .map(|f| {
            let image = load(f)?;
            let sup = supervised.map(|s| s.get(f).map(Vec::as_slice).unwrap_or(&[]));
            frame_detections(f, &image, &model, filter, sup)
        })
        .collect()
}
