//! Scripted synthetic scenes: solid rectangles moving over a textured static
//! background with seeded noise, plus their ground truth.

use image::{Rgb, RgbImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::detect::{DetectionSequence, GtRecord};
use crate::error::{Error, Result};
use crate::types::{BoundingBox, ClassLabel, Detection};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectScript {
    pub id: u64,
    /// First frame the object is present.
    pub entry: usize,
    /// Last frame the object is present (inclusive).
    pub exit: usize,
    /// Box at the entry frame, `[x_min, y_min, x_max, y_max]`.
    pub bbox: [f64; 4],
    /// Displacement per frame, `[dx, dy]`.
    #[serde(default)]
    pub velocity: [f64; 2],
    #[serde(default = "default_intensity")]
    pub intensity: [u8; 3],
    #[serde(default)]
    pub label: Option<String>,
}

fn default_intensity() -> [u8; 3] {
    [230, 230, 230]
}

impl ObjectScript {
    pub fn box_at(&self, frame: usize) -> Result<BoundingBox> {
        let dt = frame as f64 - self.entry as f64;
        let [x0, y0, x1, y1] = self.bbox;
        let [vx, vy] = self.velocity;
        BoundingBox::new(x0 + vx * dt, y0 + vy * dt, x1 + vx * dt, y1 + vy * dt)
    }

    pub fn present(&self, frame: usize) -> bool {
        (self.entry..=self.exit).contains(&frame)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticScene {
    pub width: u32,
    pub height: u32,
    pub num_frames: usize,
    /// Per-channel uniform noise amplitude in intensity units.
    #[serde(default)]
    pub noise: u8,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub objects: Vec<ObjectScript>,
}

impl SyntheticScene {
    pub fn from_toml(text: &str) -> Result<Self> {
        let scene: Self = toml::from_str(text).map_err(|e| Error::Scene(e.to_string()))?;
        scene.validate()?;
        Ok(scene)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scene serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 || self.num_frames == 0 {
            return Err(Error::Scene("width, height and num_frames must be positive".into()));
        }
        let mut ids = std::collections::BTreeSet::new();
        for obj in &self.objects {
            if !ids.insert(obj.id) {
                return Err(Error::Scene(format!("duplicate object id {}", obj.id)));
            }
            if obj.entry > obj.exit || obj.exit >= self.num_frames {
                return Err(Error::Scene(format!(
                    "object {}: frames {}..={} outside 0..{}",
                    obj.id, obj.entry, obj.exit, self.num_frames
                )));
            }
            for f in obj.entry..=obj.exit {
                let b = obj
                    .box_at(f)
                    .map_err(|e| Error::Scene(format!("object {}: {e}", obj.id)))?;
                if b.x_min() < 0.0
                    || b.y_min() < 0.0
                    || b.x_max() > f64::from(self.width)
                    || b.y_max() > f64::from(self.height)
                {
                    return Err(Error::Scene(format!("object {} leaves the frame at frame {f}", obj.id)));
                }
            }
        }
        Ok(())
    }

    /// Ground-truth rows ordered by frame, then script order.
    pub fn ground_truth(&self) -> Result<Vec<GtRecord>> {
        let mut out = Vec::new();
        for frame in 0..self.num_frames {
            for obj in self.objects.iter().filter(|o| o.present(frame)) {
                out.push(GtRecord {
                    frame,
                    object_id: obj.id,
                    bbox: obj.box_at(frame)?,
                    confidence: 1.0,
                    label: obj.label.clone().map(ClassLabel::new).unwrap_or_default(),
                });
            }
        }
        Ok(out)
    }
}

/// Deterministic static texture, values roughly 50..110.
pub fn background_pixel(x: u32, y: u32) -> Rgb<u8> {
    let checker = ((x / 16 + y / 16) % 2) as u8 * 20;
    let ripple = ((x * 7 + y * 13) % 23) as u8;
    let base = 50 + checker + ripple;
    Rgb([base, base.saturating_add(8), base.saturating_sub(6)])
}

pub fn generate_scene(scene: &SyntheticScene) -> Result<(Vec<RgbImage>, Vec<GtRecord>)> {
    scene.validate()?;
    let gt = scene.ground_truth()?;
    let background = RgbImage::from_fn(scene.width, scene.height, background_pixel);
    let mut rng = ChaCha8Rng::seed_from_u64(scene.seed);
    let amp = i16::from(scene.noise);
    let mut frames = Vec::with_capacity(scene.num_frames);
    for frame in 0..scene.num_frames {
        let mut img = background.clone();
        for obj in scene.objects.iter().filter(|o| o.present(frame)) {
            paint_box(&mut img, &obj.box_at(frame)?, Rgb(obj.intensity));
        }
        if amp > 0 {
            for px in img.pixels_mut() {
                for c in px.0.iter_mut() {
                    let n: i16 = rng.random_range(-amp..=amp);
                    *c = (i16::from(*c) + n).clamp(0, 255) as u8;
                }
            }
        }
        frames.push(img);
    }
    Ok((frames, gt))
}

/// Paints pixels whose centers fall inside `b`.
fn paint_box(img: &mut RgbImage, b: &BoundingBox, color: Rgb<u8>) {
    let span = |lo: f64, hi: f64, limit: u32| {
        let start = (lo - 0.5).ceil().max(0.0) as u32;
        let end = ((hi - 0.5).ceil().max(0.0) as u32).min(limit);
        start..end
    };
    for y in span(b.y_min(), b.y_max(), img.height()) {
        for x in span(b.x_min(), b.x_max(), img.width()) {
            img.put_pixel(x, y, color);
        }
    }
}

/// Perfect detector output derived from ground truth: confidence 1, same labels.
pub fn detections_from_ground_truth(gt: &[GtRecord], num_frames: usize) -> DetectionSequence {
    let mut seq: DetectionSequence = vec![Vec::new(); num_frames];
    for r in gt {
        if seq.len() <= r.frame {
            seq.resize_with(r.frame + 1, Vec::new);
        }
        seq[r.frame].push(Detection {
            frame_index: r.frame,
            bbox: r.bbox,
            label: r.label.clone(),
            confidence: 1.0,
            embedding: None,
            histogram: None,
        });
    }
    seq
}
