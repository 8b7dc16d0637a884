//! Appearance extraction and the four pairwise similarity costs.
//!
//! Every cost lies in `[0, 1]` with 0 meaning "same object". The fused cost is a
//! convex combination of the spatial, color, label and re-identification terms.

use std::str::FromStr;

use image::RgbImage;

use crate::error::{Error, Result};
use crate::types::{BoundingBox, ClassLabel, ColorHistogram, ReidEmbedding};

pub const DEFAULT_HISTOGRAM_BINS: usize = 256;

/// How the re-identification distance is turned into a cost.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ReidMode {
    /// `min(1, ||a - b|| / 2)` on unit vectors; identical features cost 0.
    #[default]
    Corrected,
    /// `1 - ||a - b||`, clamped to `[0, 1]`.
    Verbatim,
}

impl FromStr for ReidMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "corrected" => Ok(Self::Corrected),
            "verbatim" => Ok(Self::Verbatim),
            other => Err(Error::Config(format!(
                "unknown reid_mode '{other}' (expected corrected or verbatim)"
            ))),
        }
    }
}

impl std::fmt::Display for ReidMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Corrected => "corrected",
            Self::Verbatim => "verbatim",
        })
    }
}

/// Fusion weights and cost parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct CostConfig {
    /// Spatial weight.
    pub alpha: f64,
    /// Color weight.
    pub beta: f64,
    /// Label weight.
    pub gamma: f64,
    /// Re-identification weight.
    pub lambda: f64,
    /// Spatial normalizer in pixels.
    pub t_d: f64,
    pub reid_mode: ReidMode,
    /// Label cost used when either side has no label.
    pub null_label_cost: f64,
}

impl Default for CostConfig {
    fn default() -> Self {
        Self::for_frame(960, 540)
    }
}

impl CostConfig {
    /// Default weights with the spatial normalizer scaled to the frame: `0.1 * max(w, h)`.
    pub fn for_frame(width: u32, height: u32) -> Self {
        Self {
            alpha: 0.7,
            beta: 0.1,
            gamma: 0.1,
            lambda: 0.1,
            t_d: default_t_d(width, height),
            reid_mode: ReidMode::Corrected,
            null_label_cost: 0.5,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("gamma", self.gamma),
            ("lambda", self.lambda),
        ];
        for (name, w) in weights {
            if !(w.is_finite() && w >= 0.0) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {w}")));
            }
        }
        let sum: f64 = weights.iter().map(|(_, w)| w).sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("fusion weights must sum to 1, got {sum}")));
        }
        if !(self.t_d.is_finite() && self.t_d > 0.0) {
            return Err(Error::Config(format!("t_d must be positive, got {}", self.t_d)));
        }
        if !(0.0..=1.0).contains(&self.null_label_cost) {
            return Err(Error::Config(format!(
                "null_label_cost must be in [0, 1], got {}",
                self.null_label_cost
            )));
        }
        Ok(())
    }
}

pub fn default_t_d(width: u32, height: u32) -> f64 {
    0.1 * f64::from(width.max(height))
}

/// Per-channel histogram of the pixels covered by `bbox`, clipped to the image.
///
/// A pixel `(x, y)` is covered when its column lies in `floor(x_min)..ceil(x_max)`
/// and its row in `floor(y_min)..ceil(y_max)`.
pub fn extract_histogram(image: &RgbImage, bbox: &BoundingBox, bins: usize) -> Result<ColorHistogram> {
    if bins == 0 || bins > 256 {
        return Err(Error::Config(format!("histogram bins must be in 1..=256, got {bins}")));
    }
    let (x0, x1) = clip_span(bbox.x_min(), bbox.x_max(), image.width());
    let (y0, y1) = clip_span(bbox.y_min(), bbox.y_max(), image.height());
    if x0 >= x1 || y0 >= y1 {
        return Err(Error::EmptyRegion);
    }
    let mut hist = ColorHistogram::zeros(bins);
    for y in y0..y1 {
        for x in x0..x1 {
            let px = image.get_pixel(x, y).0;
            for (c, &v) in px.iter().enumerate() {
                hist.channel_mut(c)[usize::from(v) * bins / 256] += 1.0;
            }
        }
    }
    Ok(hist)
}

fn clip_span(lo: f64, hi: f64, limit: u32) -> (u32, u32) {
    let limit = f64::from(limit);
    let start = lo.floor().clamp(0.0, limit);
    let end = hi.ceil().clamp(0.0, limit);
    (start as u32, end as u32)
}

/// Mean absolute difference of the four corner coordinates.
pub fn mean_corner_distance(d: &BoundingBox, t: &BoundingBox) -> f64 {
    d.corners()
        .iter()
        .zip(t.corners().iter())
        .map(|(a, b)| (a - b).abs())
        .sum::<f64>()
        / 4.0
}

/// `1 - max(0, (t_d - SD) / t_d)` where `SD` is the mean corner distance.
pub fn spatial_cost(d: &BoundingBox, t: &BoundingBox, t_d: f64) -> Result<f64> {
    if !(t_d.is_finite() && t_d > 0.0) {
        return Err(Error::Config(format!("t_d must be positive, got {t_d}")));
    }
    let sd = mean_corner_distance(d, t);
    Ok(1.0 - ((t_d - sd) / t_d).max(0.0))
}

/// Bhattacharyya distance averaged over the three channels.
pub fn color_cost(hd: &ColorHistogram, ht: &ColorHistogram) -> Result<f64> {
    if hd.bins() != ht.bins() {
        return Err(Error::LengthMismatch {
            what: "histogram bins",
            left: hd.bins(),
            right: ht.bins(),
        });
    }
    let mut total = 0.0;
    for c in 0..3 {
        total += channel_bhattacharyya(hd.channel(c), ht.channel(c))?;
    }
    Ok(total / 3.0)
}

fn channel_bhattacharyya(hd: &[f64], ht: &[f64]) -> Result<f64> {
    let n = hd.len() as f64;
    let mean_d = hd.iter().sum::<f64>() / n;
    let mean_t = ht.iter().sum::<f64>() / n;
    if mean_d <= 0.0 || mean_t <= 0.0 {
        return Err(Error::EmptyHistogram);
    }
    let cross: f64 = hd.iter().zip(ht).map(|(a, b)| (a * b).sqrt()).sum();
    let radicand = 1.0 - cross / (mean_d * mean_t * n * n).sqrt();
    Ok(radicand.clamp(0.0, 1.0).sqrt())
}

pub fn label_cost(l_i: &ClassLabel, w_i: f64, l_j: &ClassLabel, w_j: f64, null_label_cost: f64) -> f64 {
    if l_i.is_null() || l_j.is_null() {
        null_label_cost
    } else if l_i == l_j {
        (1.0 - (w_i + w_j) / 2.0).clamp(0.0, 1.0)
    } else {
        1.0
    }
}

pub fn reid_cost(a: &ReidEmbedding, b: &ReidEmbedding, mode: ReidMode) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::LengthMismatch {
            what: "embedding length",
            left: a.len(),
            right: b.len(),
        });
    }
    let dist = a
        .values()
        .iter()
        .zip(b.values())
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt();
    match mode {
        ReidMode::Verbatim => Ok((1.0 - dist).clamp(0.0, 1.0)),
        ReidMode::Corrected => {
            for e in [a, b] {
                if !e.is_normalized() {
                    return Err(Error::NotNormalized(e.norm()));
                }
            }
            Ok((dist / 2.0).min(1.0))
        }
    }
}

/// Component costs for one track/detection pair. Missing appearance cues are `None`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostComponents {
    pub spatial: f64,
    pub color: Option<f64>,
    pub label: f64,
    pub reid: Option<f64>,
}

impl CostComponents {
    pub fn all(spatial: f64, color: f64, label: f64, reid: f64) -> Self {
        Self {
            spatial,
            color: Some(color),
            label,
            reid: Some(reid),
        }
    }
}

/// Weighted fusion of the component costs.
///
/// Absent components are dropped and the remaining weights renormalized so the
/// result stays in `[0, 1]`. If no remaining component carries weight the
/// spatial cost is returned on its own.
pub fn final_cost(c: &CostComponents, cfg: &CostConfig) -> f64 {
    let mut weighted = cfg.alpha * c.spatial + cfg.gamma * c.label;
    let mut weight = cfg.alpha + cfg.gamma;
    if let Some(color) = c.color {
        weighted += cfg.beta * color;
        weight += cfg.beta;
    }
    if let Some(reid) = c.reid {
        weighted += cfg.lambda * reid;
        weight += cfg.lambda;
    }
    if weight <= 0.0 {
        return c.spatial;
    }
    let complete = c.color.is_some() && c.reid.is_some();
    let fused = if complete { weighted } else { weighted / weight };
    fused.clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;
    use proptest::prelude::*;

    fn bb(a: f64, b: f64, c: f64, d: f64) -> BoundingBox {
        BoundingBox::new(a, b, c, d).unwrap()
    }

    fn one_channel(counts: Vec<f64>) -> ColorHistogram {
        ColorHistogram::uniform_channels(counts).unwrap()
    }

    #[test]
    fn histogram_of_black_region() {
        let img = RgbImage::new(10, 10);
        let h = extract_histogram(&img, &bb(0., 0., 10., 10.), 256).unwrap();
        for c in 0..3 {
            assert_eq!(h.channel(c)[0], 100.0);
            assert_eq!(h.channel(c).iter().sum::<f64>(), 100.0);
        }
    }

    #[test]
    fn histogram_of_two_tone_region() {
        let img = RgbImage::from_fn(10, 10, |x, _| if x < 5 { Rgb([0, 0, 0]) } else { Rgb([255, 255, 255]) });
        let h = extract_histogram(&img, &bb(0., 0., 10., 10.), 256).unwrap();
        for c in 0..3 {
            assert_eq!(h.channel(c)[0], 50.0);
            assert_eq!(h.channel(c)[255], 50.0);
        }
    }

    #[test]
    fn histogram_matches_pixel_count_oracle() {
        let img = RgbImage::from_fn(40, 30, |x, y| Rgb([(x * 6) as u8, (y * 8) as u8, ((x + y) * 3) as u8]));
        let region = bb(3.0, 4.0, 27.0, 22.0);
        let h = extract_histogram(&img, &region, 16).unwrap();
        let mut oracle = [[0.0f64; 16]; 3];
        for y in 4..22u32 {
            for x in 3..27u32 {
                let p = img.get_pixel(x, y).0;
                for c in 0..3 {
                    oracle[c][(p[c] / 16) as usize] += 1.0;
                }
            }
        }
        for (c, want) in oracle.iter().enumerate() {
            assert_eq!(h.channel(c), &want[..]);
        }
    }

    #[test]
    fn histogram_is_clipped_to_image() {
        let img = RgbImage::new(10, 10);
        let h = extract_histogram(&img, &bb(-5., -5., 5., 5.), 256).unwrap();
        assert_eq!(h.channel(0)[0], 25.0);
        assert!(matches!(
            extract_histogram(&img, &bb(20., 20., 30., 30.), 256),
            Err(Error::EmptyRegion)
        ));
    }

    #[test]
    fn spatial_cost_examples() {
        let d = bb(10., 10., 50., 50.);
        assert_eq!(spatial_cost(&d, &d, 40.).unwrap(), 0.0);
        let t = bb(14., 18., 54., 58.);
        assert!((spatial_cost(&d, &t, 40.).unwrap() - 0.15).abs() < 1e-12);
        let far = bb(50., 50., 90., 90.);
        assert_eq!(spatial_cost(&d, &far, 40.).unwrap(), 1.0);
        assert!(spatial_cost(&d, &t, 0.0).is_err());
        assert!(spatial_cost(&d, &t, -1.0).is_err());
    }

    #[test]
    fn color_cost_examples() {
        let h = one_channel(vec![3.0, 1.0]);
        assert_eq!(color_cost(&h, &h).unwrap(), 0.0);
        let disjoint_a = one_channel(vec![5.0, 0.0]);
        let disjoint_b = one_channel(vec![0.0, 5.0]);
        assert_eq!(color_cost(&disjoint_a, &disjoint_b).unwrap(), 1.0);
        let v = color_cost(&one_channel(vec![3.0, 1.0]), &one_channel(vec![1.0, 3.0])).unwrap();
        let expected = (1.0 - 3f64.sqrt() / 2.0).sqrt();
        assert!((v - expected).abs() < 1e-12);
    }

    #[test]
    fn color_cost_errors() {
        let a = one_channel(vec![1.0, 2.0]);
        let b = one_channel(vec![1.0, 2.0, 3.0]);
        assert!(matches!(color_cost(&a, &b), Err(Error::LengthMismatch { .. })));
        let z = one_channel(vec![0.0, 0.0]);
        assert!(matches!(color_cost(&a, &z), Err(Error::EmptyHistogram)));
    }

    #[test]
    fn label_cost_examples() {
        let car = ClassLabel::new("car");
        let bus = ClassLabel::new("bus");
        assert_eq!(label_cost(&car, 1.0, &car, 1.0, 0.5), 0.0);
        assert_eq!(label_cost(&car, 0.9, &bus, 0.8, 0.5), 1.0);
        assert!((label_cost(&car, 0.8, &car, 0.6, 0.5) - 0.3).abs() < 1e-12);
        assert_eq!(label_cost(&ClassLabel::null(), 0.0, &car, 0.9, 0.5), 0.5);
    }

    #[test]
    fn reid_cost_examples() {
        let a = ReidEmbedding::normalized(vec![1.0, 0.0, 0.0]);
        let b = ReidEmbedding::normalized(vec![0.0, 1.0, 0.0]);
        assert_eq!(reid_cost(&a, &a, ReidMode::Corrected).unwrap(), 0.0);
        assert_eq!(reid_cost(&a, &a, ReidMode::Verbatim).unwrap(), 1.0);
        let v = reid_cost(&a, &b, ReidMode::Corrected).unwrap();
        assert!((v - 2f64.sqrt() / 2.0).abs() < 1e-12);
        let raw = ReidEmbedding::new(vec![2.0, 0.0, 0.0]);
        assert!(matches!(
            reid_cost(&a, &raw, ReidMode::Corrected),
            Err(Error::NotNormalized(_))
        ));
        let short = ReidEmbedding::normalized(vec![1.0, 0.0]);
        assert!(matches!(
            reid_cost(&a, &short, ReidMode::Verbatim),
            Err(Error::LengthMismatch { .. })
        ));
    }

    #[test]
    fn final_cost_examples() {
        let cfg = CostConfig::default();
        assert_eq!(final_cost(&CostComponents::all(0., 0., 0., 0.), &cfg), 0.0);
        assert!((final_cost(&CostComponents::all(1., 1., 1., 1.), &cfg) - 1.0).abs() < 1e-12);
        let color = (1.0 - 3f64.sqrt() / 2.0).sqrt();
        let v = final_cost(&CostComponents::all(0.15, color, 0.3, 0.0), &cfg);
        assert!((v - (0.7 * 0.15 + 0.1 * color + 0.1 * 0.3)).abs() < 1e-12);
        assert!((v - 0.1716).abs() < 1e-4);
    }

    #[test]
    fn final_cost_renormalizes_missing_cues() {
        let cfg = CostConfig::default();
        let c = CostComponents {
            spatial: 0.2,
            color: Some(0.4),
            label: 0.6,
            reid: None,
        };
        let expected = (0.7 * 0.2 + 0.1 * 0.4 + 0.1 * 0.6) / 0.9;
        assert!((final_cost(&c, &cfg) - expected).abs() < 1e-12);
        let ones = CostComponents {
            spatial: 1.0,
            color: None,
            label: 1.0,
            reid: None,
        };
        assert!((final_cost(&ones, &cfg) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn config_validation() {
        assert!(CostConfig::default().validate().is_ok());
        let cfg = CostConfig {
            alpha: 0.8,
            ..CostConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = CostConfig {
            t_d: 0.0,
            ..CostConfig::default()
        };
        assert!(cfg.validate().is_err());
        assert_eq!(CostConfig::for_frame(960, 540).t_d, 96.0);
        assert_eq!("verbatim".parse::<ReidMode>().unwrap(), ReidMode::Verbatim);
        assert!("euclid".parse::<ReidMode>().is_err());
    }

    fn arb_box() -> impl Strategy<Value = BoundingBox> {
        (0.0..500.0f64, 0.0..500.0f64, 1.0..200.0f64, 1.0..200.0f64)
            .prop_map(|(x, y, w, h)| BoundingBox::from_xywh(x, y, w, h).unwrap())
    }

    fn arb_hist() -> impl Strategy<Value = ColorHistogram> {
        prop::collection::vec(0.0..50.0f64, 8)
            .prop_map(|mut v| {
                v[0] += 1.0;
                v
            })
            .prop_map(|v| ColorHistogram::uniform_channels(v).unwrap())
    }

    proptest! {
        #[test]
        fn spatial_cost_monotone_in_distance(d in arb_box(), dx1 in 0.0..80.0f64, extra in 0.0..80.0f64) {
            let t_d = 50.0;
            let near = d.translate(dx1, 0.0).unwrap();
            let far = d.translate(dx1 + extra, 0.0).unwrap();
            prop_assert!(spatial_cost(&d, &near, t_d).unwrap() <= spatial_cost(&d, &far, t_d).unwrap());
        }

        #[test]
        fn color_cost_scale_invariant(a in arb_hist(), b in arb_hist(), s in 0.01..100.0f64) {
            let base = color_cost(&a, &b).unwrap();
            let scaled = color_cost(&a.scaled(s), &b.scaled(s)).unwrap();
            prop_assert!((base - scaled).abs() < 1e-6);
        }

        #[test]
        fn final_cost_monotone(
            base in prop::array::uniform4(0.0..1.0f64),
            which in 0usize..4,
            bump in 0.0..1.0f64,
        ) {
            let cfg = CostConfig::default();
            let mut raised = base;
            raised[which] = (raised[which] + bump).min(1.0);
            let lo = final_cost(&CostComponents::all(base[0], base[1], base[2], base[3]), &cfg);
            let hi = final_cost(&CostComponents::all(raised[0], raised[1], raised[2], raised[3]), &cfg);
            prop_assert!(lo <= hi + 1e-15);
        }
    }
}
