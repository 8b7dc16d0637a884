//! Median background model and connected-component foreground detection.

use std::collections::VecDeque;

use image::RgbImage;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::types::{BoundingBox, Detection};

pub const DEFAULT_DIFF_THRESHOLD: u8 = 30;

#[derive(Debug, Clone, PartialEq)]
pub struct BackgroundModel {
    pub median: RgbImage,
    /// A pixel is foreground when some channel differs from the median by more than this.
    pub diff_threshold: u8,
    /// Sorted indices of the frames the median was computed from.
    pub learned_from: Vec<usize>,
}

/// Draws `k` distinct frame indices out of `len`, reproducibly for a given seed.
pub fn sample_frames(len: usize, k: usize, seed: u64) -> Result<Vec<usize>> {
    if k == 0 {
        return Err(Error::Config("background sample count k must be positive".into()));
    }
    if k > len {
        return Err(Error::Config(format!(
            "background sample count k={k} exceeds sequence length {len}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, len, k).into_vec();
    picked.sort_unstable();
    Ok(picked)
}

pub fn learn_background(frames: &[RgbImage], k: usize, seed: u64) -> Result<BackgroundModel> {
    learn_background_with(frames.len(), k, seed, |i| Ok(frames[i].clone()))
}

/// Like [`learn_background`] but loads only the sampled frames through `load`.
pub fn learn_background_with(
    len: usize,
    k: usize,
    seed: u64,
    mut load: impl FnMut(usize) -> Result<RgbImage>,
) -> Result<BackgroundModel> {
    let picked = sample_frames(len, k, seed)?;
    let frames = picked.iter().map(|&i| load(i)).collect::<Result<Vec<_>>>()?;
    let median = median_image(&frames)?;
    Ok(BackgroundModel {
        median,
        diff_threshold: DEFAULT_DIFF_THRESHOLD,
        learned_from: picked,
    })
}

/// Per-pixel, per-channel median. For an even count the lower middle value is taken.
pub fn median_image(frames: &[RgbImage]) -> Result<RgbImage> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Input("no frames to build a background from".into()))?;
    let (w, h) = first.dimensions();
    for f in frames {
        check_dims(f, w, h)?;
    }
    let mid = (frames.len() - 1) / 2;
    let mut samples = vec![0u8; frames.len()];
    let mut out = RgbImage::new(w, h);
    let raws: Vec<&[u8]> = frames.iter().map(|f| f.as_raw().as_slice()).collect();
    for (idx, value) in out.iter_mut().enumerate() {
        for (s, raw) in samples.iter_mut().zip(&raws) {
            *s = raw[idx];
        }
        *value = *samples.select_nth_unstable(mid).1;
    }
    Ok(out)
}

fn check_dims(frame: &RgbImage, want_w: u32, want_h: u32) -> Result<()> {
    let (got_w, got_h) = frame.dimensions();
    if (got_w, got_h) != (want_w, want_h) {
        return Err(Error::DimensionMismatch {
            want_w,
            want_h,
            got_w,
            got_h,
        });
    }
    Ok(())
}

/// Binary foreground mask, row-major.
pub fn foreground_mask(frame: &RgbImage, model: &BackgroundModel) -> Result<Vec<bool>> {
    let (w, h) = model.median.dimensions();
    check_dims(frame, w, h)?;
    Ok(frame
        .pixels()
        .zip(model.median.pixels())
        .map(|(p, b)| {
            p.0.iter()
                .zip(b.0.iter())
                .map(|(x, y)| x.abs_diff(*y))
                .max()
                .unwrap_or(0)
                > model.diff_threshold
        })
        .collect())
}

/// Tight pixel bounds `(x0, y0, x1, y1)` (exclusive max) of the 8-connected
/// components of `mask`, in order of each component's first pixel in raster order.
pub fn connected_components(mask: &[bool], width: u32, height: u32) -> Vec<(u32, u32, u32, u32)> {
    let (w, h) = (width as usize, height as usize);
    debug_assert_eq!(mask.len(), w * h);
    let mut seen = vec![false; mask.len()];
    let mut queue = VecDeque::new();
    let mut out = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || seen[start] {
            continue;
        }
        seen[start] = true;
        queue.push_back(start);
        let (mut x0, mut y0, mut x1, mut y1) = (usize::MAX, usize::MAX, 0, 0);
        while let Some(p) = queue.pop_front() {
            let (x, y) = (p % w, p / w);
            x0 = x0.min(x);
            y0 = y0.min(y);
            x1 = x1.max(x);
            y1 = y1.max(y);
            for ny in y.saturating_sub(1)..=(y + 1).min(h - 1) {
                for nx in x.saturating_sub(1)..=(x + 1).min(w - 1) {
                    let q = ny * w + nx;
                    if mask[q] && !seen[q] {
                        seen[q] = true;
                        queue.push_back(q);
                    }
                }
            }
        }
        out.push((x0 as u32, y0 as u32, x1 as u32 + 1, y1 as u32 + 1));
    }
    out
}

/// Foreground blobs of `frame` as unlabeled detections. Components whose box
/// area is at most `min_area` are dropped.
pub fn detect_foreground(
    frame_index: usize,
    frame: &RgbImage,
    model: &BackgroundModel,
    min_area: f64,
) -> Result<Vec<Detection>> {
    let mask = foreground_mask(frame, model)?;
    let (w, h) = frame.dimensions();
    connected_components(&mask, w, h)
        .into_iter()
        .map(|(x0, y0, x1, y1)| BoundingBox::new(f64::from(x0), f64::from(y0), f64::from(x1), f64::from(y1)))
        .filter(|b| b.as_ref().map_or(true, |b| b.area() > min_area))
        .map(|b| b.map(|b| Detection::unlabeled(frame_index, b)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use image::Rgb;

    fn flat(w: u32, h: u32, v: u8) -> RgbImage {
        RgbImage::from_pixel(w, h, Rgb([v, v, v]))
    }

    fn paint(img: &mut RgbImage, x0: u32, y0: u32, x1: u32, y1: u32, v: u8) {
        for y in y0..y1 {
            for x in x0..x1 {
                img.put_pixel(x, y, Rgb([v, v, v]));
            }
        }
    }

    #[test]
    fn constant_sequence_median_is_exact() {
        let frames: Vec<_> = (0..6)
            .map(|_| RgbImage::from_fn(8, 5, |x, y| Rgb([x as u8, y as u8, 7])))
            .collect();
        let m = learn_background(&frames, 3, 1).unwrap();
        assert_eq!(m.median, frames[0]);
        assert_eq!(m.learned_from.len(), 3);
    }

    #[test]
    fn median_outvotes_moving_object() {
        let frames = vec![flat(2, 2, 10), flat(2, 2, 10), flat(2, 2, 200)];
        let m = median_image(&frames).unwrap();
        assert!(m.pixels().all(|p| p.0 == [10, 10, 10]));
    }

    #[test]
    fn k_larger_than_sequence_rejected() {
        let frames = vec![flat(2, 2, 0); 3];
        assert!(learn_background(&frames, 4, 0).is_err());
        assert!(learn_background(&frames, 0, 0).is_err());
    }

    #[test]
    fn sampling_is_seeded() {
        assert_eq!(sample_frames(100, 10, 42).unwrap(), sample_frames(100, 10, 42).unwrap());
        assert_ne!(sample_frames(100, 10, 42).unwrap(), sample_frames(100, 10, 43).unwrap());
        let s = sample_frames(100, 10, 42).unwrap();
        assert!(s.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn median_is_order_free() {
        let frames = vec![flat(3, 3, 5), flat(3, 3, 90), flat(3, 3, 40), flat(3, 3, 41)];
        let mut rev = frames.clone();
        rev.reverse();
        assert_eq!(median_image(&frames).unwrap(), median_image(&rev).unwrap());
    }

    #[test]
    fn background_frame_has_no_detections() {
        let bg = flat(100, 100, 50);
        let m = learn_background(&[bg.clone(), bg.clone()], 2, 0).unwrap();
        assert!(detect_foreground(0, &bg, &m, 0.0).unwrap().is_empty());
    }

    #[test]
    fn square_is_detected() {
        let bg = flat(200, 150, 20);
        let m = learn_background(std::slice::from_ref(&bg), 1, 0).unwrap();
        let mut f = bg.clone();
        paint(&mut f, 30, 40, 90, 100, 230);
        let dets = detect_foreground(4, &f, &m, 2000.0).unwrap();
        assert_eq!(dets.len(), 1);
        let truth = BoundingBox::new(30., 40., 90., 100.).unwrap();
        assert!(dets[0].bbox.iou(&truth) >= 0.9);
        assert_eq!(dets[0].frame_index, 4);
        assert!(dets[0].label.is_null());
    }

    #[test]
    fn separated_squares_are_two_components() {
        let bg = flat(200, 100, 20);
        let m = learn_background(std::slice::from_ref(&bg), 1, 0).unwrap();
        let mut f = bg.clone();
        paint(&mut f, 10, 10, 60, 60, 230);
        paint(&mut f, 62, 10, 112, 60, 230);
        assert_eq!(detect_foreground(0, &f, &m, 0.0).unwrap().len(), 2);
        // Diagonal contact merges under 8-connectivity.
        let mut g = bg.clone();
        paint(&mut g, 10, 10, 20, 20, 230);
        paint(&mut g, 20, 20, 30, 30, 230);
        assert_eq!(detect_foreground(0, &g, &m, 0.0).unwrap().len(), 1);
    }

    #[test]
    fn small_blobs_filtered() {
        let bg = flat(200, 100, 20);
        let m = learn_background(std::slice::from_ref(&bg), 1, 0).unwrap();
        let mut f = bg.clone();
        paint(&mut f, 10, 10, 50, 50, 230);
        assert!(detect_foreground(0, &f, &m, 2000.0).unwrap().is_empty());
        assert_eq!(detect_foreground(0, &f, &m, 1599.0).unwrap().len(), 1);
    }

    #[test]
    fn dimension_mismatch_rejected() {
        let m = learn_background(&[flat(10, 10, 0)], 1, 0).unwrap();
        assert!(matches!(
            detect_foreground(0, &flat(10, 11, 0), &m, 0.0),
            Err(Error::DimensionMismatch { .. })
        ));
    }
}
