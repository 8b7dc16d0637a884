//! Detection inputs: file-based detector output, the background-subtraction
//! detector, input filtering and label transfer between the two.

mod background;
mod io;

pub use background::{
    connected_components, detect_foreground, foreground_mask, learn_background, learn_background_with, median_image,
    sample_frames, BackgroundModel, DEFAULT_DIFF_THRESHOLD,
};
pub use io::{
    load_detections, load_ground_truth, load_reid_sidecar, read_detections, read_ground_truth, read_reid_sidecar,
    save_detections, save_ground_truth, tracks_to_records, write_detections, write_ground_truth, write_reid_sidecar,
    DetectionFormat, DetectionSequence, GtRecord,
};

use crate::error::{Error, Result};
use crate::types::Detection;

/// Which kind of detector produced a set of boxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DetectionSource {
    /// A trained detector with labels and confidences.
    Supervised,
    /// Background subtraction; no labels.
    Unsupervised,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionFilterConfig {
    /// Supervised detections below this confidence are dropped.
    pub min_confidence: f64,
    /// Unsupervised boxes with area at most this many pixels are dropped.
    pub min_area: f64,
}

impl Default for DetectionFilterConfig {
    fn default() -> Self {
        Self {
            min_confidence: 0.4,
            min_area: 2000.0,
        }
    }
}

impl DetectionFilterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.min_confidence) {
            return Err(Error::Config(format!(
                "min_confidence must be in [0, 1], got {}",
                self.min_confidence
            )));
        }
        if !(self.min_area.is_finite() && self.min_area >= 0.0) {
            return Err(Error::Config(format!(
                "min_area must be non-negative, got {}",
                self.min_area
            )));
        }
        Ok(())
    }

    pub fn keeps(&self, det: &Detection, source: DetectionSource) -> bool {
        match source {
            DetectionSource::Supervised => det.confidence >= self.min_confidence,
            DetectionSource::Unsupervised => det.bbox.area() > self.min_area,
        }
    }
}

pub fn filter_detections(dets: &[Detection], source: DetectionSource, cfg: &DetectionFilterConfig) -> Vec<Detection> {
    dets.iter().filter(|d| cfg.keeps(d, source)).cloned().collect()
}

pub fn filter_sequence(
    seq: &[Vec<Detection>],
    source: DetectionSource,
    cfg: &DetectionFilterConfig,
) -> DetectionSequence {
    seq.iter().map(|f| filter_detections(f, source, cfg)).collect()
}

/// Gives each unsupervised box the label and confidence of the supervised box
/// it overlaps most (largest IoU, then higher confidence, then lower index).
/// Boxes overlapping nothing keep a null label. Geometry is never changed.
pub fn transfer_labels(unsup: &[Detection], sup: &[Detection]) -> Vec<Detection> {
    unsup
        .iter()
        .map(|u| {
            let mut best: Option<(f64, &Detection)> = None;
            for s in sup {
                let overlap = u.bbox.iou(&s.bbox);
                if overlap <= 0.0 {
                    continue;
                }
                let better = match best {
                    None => true,
                    Some((bo, bs)) => overlap > bo || (overlap == bo && s.confidence > bs.confidence),
                };
                if better {
                    best = Some((overlap, s));
                }
            }
            let mut out = u.clone();
            if let Some((_, s)) = best {
                out.label = s.label.clone();
                out.confidence = s.confidence;
            }
            out
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{BoundingBox, ClassLabel};
    use proptest::prelude::*;

    fn sup(x0: f64, y0: f64, x1: f64, y1: f64, label: &str, conf: f64) -> Detection {
        Detection::new(
            0,
            BoundingBox::new(x0, y0, x1, y1).unwrap(),
            ClassLabel::new(label),
            conf,
        )
        .unwrap()
    }

    fn unsup(x0: f64, y0: f64, x1: f64, y1: f64) -> Detection {
        Detection::unlabeled(0, BoundingBox::new(x0, y0, x1, y1).unwrap())
    }

    #[test]
    fn confidence_filter() {
        let cfg = DetectionFilterConfig::default();
        let dets = vec![
            sup(0., 0., 10., 10., "car", 0.39),
            sup(0., 0., 10., 10., "car", 0.4),
            sup(0., 0., 10., 10., "car", 0.41),
        ];
        let kept = filter_detections(&dets, DetectionSource::Supervised, &cfg);
        assert_eq!(kept.iter().map(|d| d.confidence).collect::<Vec<_>>(), vec![0.4, 0.41]);
    }

    #[test]
    fn area_filter() {
        let cfg = DetectionFilterConfig::default();
        let dets = vec![
            unsup(0., 0., 50., 50.),
            unsup(0., 0., 40., 40.),
            unsup(0., 0., 40., 50.),
        ];
        let kept = filter_detections(&dets, DetectionSource::Unsupervised, &cfg);
        assert_eq!(kept.len(), 1);
        assert_eq!(kept[0].bbox.area(), 2500.0);
        assert!(filter_detections(&[], DetectionSource::Unsupervised, &cfg).is_empty());
    }

    #[test]
    fn transfer_single_overlap() {
        let out = transfer_labels(&[unsup(0., 0., 50., 50.)], &[sup(10., 10., 60., 60., "car", 0.8)]);
        assert_eq!(out[0].label, ClassLabel::new("car"));
        assert_eq!(out[0].confidence, 0.8);
    }

    #[test]
    fn transfer_no_overlap_is_null() {
        let out = transfer_labels(&[unsup(0., 0., 50., 50.)], &[sup(100., 100., 150., 150., "car", 0.8)]);
        assert!(out[0].label.is_null());
        assert_eq!(out[0].confidence, 0.0);
    }

    #[test]
    fn transfer_prefers_largest_overlap() {
        let u = unsup(0., 0., 100., 100.);
        let high = sup(0., 0., 100., 60., "bus", 0.5);
        let low = sup(80., 80., 120., 180., "car", 0.99);
        assert!((u.bbox.iou(&high.bbox) - 0.6).abs() < 1e-12);
        let out = transfer_labels(&[u], &[low, high]);
        assert_eq!(out[0].label, ClassLabel::new("bus"));
    }

    #[test]
    fn transfer_tie_prefers_confidence_then_index() {
        let u = unsup(0., 0., 100., 100.);
        let a = sup(0., 0., 100., 50., "car", 0.6);
        let b = sup(0., 50., 100., 100., "bus", 0.7);
        assert_eq!(
            transfer_labels(std::slice::from_ref(&u), &[a.clone(), b])[0].label,
            ClassLabel::new("bus")
        );
        let c = sup(0., 50., 100., 100., "van", 0.6);
        assert_eq!(transfer_labels(&[u], &[a, c])[0].label, ClassLabel::new("car"));
    }

    fn arb_det() -> impl Strategy<Value = Detection> {
        (0.0..300.0f64, 0.0..300.0f64, 1.0..120.0f64, 1.0..120.0f64, 0.0..=1.0f64).prop_map(|(x, y, w, h, c)| {
            Detection::new(
                0,
                BoundingBox::from_xywh(x, y, w, h).unwrap(),
                ClassLabel::new("car"),
                c,
            )
            .unwrap()
        })
    }

    proptest! {
        #[test]
        fn filtering_is_idempotent(dets in prop::collection::vec(arb_det(), 0..30), unsupervised in any::<bool>()) {
            let source = if unsupervised { DetectionSource::Unsupervised } else { DetectionSource::Supervised };
            let cfg = DetectionFilterConfig::default();
            let once = filter_detections(&dets, source, &cfg);
            prop_assert_eq!(filter_detections(&once, source, &cfg), once);
        }

        #[test]
        fn transfer_keeps_geometry(u in prop::collection::vec(arb_det(), 0..10), s in prop::collection::vec(arb_det(), 0..10)) {
            let unl: Vec<_> = u.iter().map(|d| Detection::unlabeled(0, d.bbox)).collect();
            let out = transfer_labels(&unl, &s);
            prop_assert_eq!(out.len(), unl.len());
            for (a, b) in out.iter().zip(&unl) {
                prop_assert_eq!(a.bbox, b.bbox);
                prop_assert_eq!(a.frame_index, b.frame_index);
            }
        }
    }
}
