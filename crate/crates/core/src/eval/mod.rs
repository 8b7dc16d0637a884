//! CLEAR MOT evaluation.
//!
//! Correspondences from the previous frame are kept while their IoU stays at
//! or above the threshold; the remaining ground-truth and hypothesis boxes are
//! matched by minimum-cost assignment on `1 - IoU`. A mismatch is counted when
//! a ground-truth object is matched to a different hypothesis id than the one
//! it was last matched to. MOTP is the mean IoU of matched pairs.

pub mod synth;

pub use synth::{background_pixel, detections_from_ground_truth, generate_scene, ObjectScript, SyntheticScene};

use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use crate::assignment::{self, CostMatrix};
use crate::detect::GtRecord;
use crate::error::{Error, Result};

pub const DEFAULT_IOU_THRESHOLD: f64 = 0.3;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct FrameTally {
    pub frame: usize,
    pub gt: usize,
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct MotReport {
    pub frames: Vec<FrameTally>,
    pub matches: usize,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
    pub gt_count: usize,
    /// Sum of IoU over matched pairs.
    pub iou_sum: f64,
    pub mota: f64,
    pub motp: f64,
}

impl MotReport {
    fn from_frames(frames: Vec<FrameTally>, iou_sum: f64) -> Result<Self> {
        let mut r = MotReport {
            iou_sum,
            ..Default::default()
        };
        for t in &frames {
            r.matches += t.matches;
            r.misses += t.misses;
            r.false_positives += t.false_positives;
            r.mismatches += t.mismatches;
            r.gt_count += t.gt;
        }
        r.frames = frames;
        r.finish()?;
        Ok(r)
    }

    fn finish(&mut self) -> Result<()> {
        if self.gt_count == 0 {
            return Err(Error::Input("ground truth is empty; MOTA is undefined".into()));
        }
        let errors = (self.misses + self.false_positives + self.mismatches) as f64;
        self.mota = 1.0 - errors / self.gt_count as f64;
        self.motp = if self.matches == 0 {
            0.0
        } else {
            self.iou_sum / self.matches as f64
        };
        Ok(())
    }

    /// `MOTA=<v> MOTP=<v> FN=<n> FP=<n> IDSW=<n> GT=<n>`
    pub fn summary_line(&self) -> String {
        format!(
            "MOTA={:.6} MOTP={:.6} FN={} FP={} IDSW={} GT={}",
            self.mota, self.motp, self.misses, self.false_positives, self.mismatches, self.gt_count
        )
    }

    /// Per-frame tallies followed by the summary line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for t in &self.frames {
            let _ = writeln!(
                out,
                "frame={} GT={} TP={} FN={} FP={} IDSW={}",
                t.frame, t.gt, t.matches, t.misses, t.false_positives, t.mismatches
            );
        }
        out.push_str(&self.summary_line());
        out.push('\n');
        out
    }
}

/// Parsed `key=value` summary tokens.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub mota: f64,
    pub motp: f64,
    pub misses: usize,
    pub false_positives: usize,
    pub mismatches: usize,
    pub gt_count: usize,
}

/// Finds and parses the first summary line (`MOTA=... GT=...`) in a report.
pub fn parse_summary(text: &str) -> Option<Summary> {
    text.lines().find_map(|line| {
        let kv: BTreeMap<&str, &str> = line.split_whitespace().filter_map(|t| t.split_once('=')).collect();
        if !kv.contains_key("MOTA") || !kv.contains_key("GT") {
            return None;
        }
        Some(Summary {
            mota: kv.get("MOTA")?.parse().ok()?,
            motp: kv.get("MOTP")?.parse().ok()?,
            misses: kv.get("FN")?.parse().ok()?,
            false_positives: kv.get("FP")?.parse().ok()?,
            mismatches: kv.get("IDSW")?.parse().ok()?,
            gt_count: kv.get("GT")?.parse().ok()?,
        })
    })
}

fn group_by_frame<'a>(records: &'a [GtRecord], what: &'static str) -> Result<BTreeMap<usize, Vec<&'a GtRecord>>> {
    let mut seen = HashSet::new();
    let mut out: BTreeMap<usize, Vec<&GtRecord>> = BTreeMap::new();
    for r in records {
        if !seen.insert((r.frame, r.object_id)) {
            return Err(Error::Duplicate {
                what,
                frame: r.frame,
                id: r.object_id,
            });
        }
        out.entry(r.frame).or_default().push(r);
    }
    Ok(out)
}

pub fn evaluate(gt: &[GtRecord], hyp: &[GtRecord], iou_threshold: f64) -> Result<MotReport> {
    if !(iou_threshold > 0.0 && iou_threshold < 1.0) {
        return Err(Error::Config(format!(
            "iou threshold must be in (0, 1), got {iou_threshold}"
        )));
    }
    let gt_frames = group_by_frame(gt, "ground truth")?;
    let hyp_frames = group_by_frame(hyp, "hypotheses")?;
    let mut frames: Vec<usize> = gt_frames.keys().chain(hyp_frames.keys()).copied().collect();
    frames.sort_unstable();
    frames.dedup();

    let empty = Vec::new();
    let mut last_match: BTreeMap<u64, u64> = BTreeMap::new();
    let mut tallies = Vec::with_capacity(frames.len());
    let mut iou_sum = 0.0;

    for frame in frames {
        let gts = gt_frames.get(&frame).unwrap_or(&empty);
        let hyps = hyp_frames.get(&frame).unwrap_or(&empty);
        let mut gt_used = vec![false; gts.len()];
        let mut hyp_used = vec![false; hyps.len()];
        let mut tally = FrameTally {
            frame,
            gt: gts.len(),
            ..Default::default()
        };

        for (g, gt_rec) in gts.iter().enumerate() {
            let Some(&hid) = last_match.get(&gt_rec.object_id) else {
                continue;
            };
            let Some(h) = hyps.iter().position(|r| r.object_id == hid) else {
                continue;
            };
            if hyp_used[h] {
                continue;
            }
            let overlap = gt_rec.bbox.iou(&hyps[h].bbox);
            if overlap >= iou_threshold {
                gt_used[g] = true;
                hyp_used[h] = true;
                tally.matches += 1;
                iou_sum += overlap;
            }
        }

        let free_g: Vec<usize> = (0..gts.len()).filter(|&g| !gt_used[g]).collect();
        let free_h: Vec<usize> = (0..hyps.len()).filter(|&h| !hyp_used[h]).collect();
        let mut m = CostMatrix::forbidden(free_g.len(), free_h.len());
        for (a, &g) in free_g.iter().enumerate() {
            for (b, &h) in free_h.iter().enumerate() {
                let overlap = gts[g].bbox.iou(&hyps[h].bbox);
                if overlap >= iou_threshold {
                    m.set(a, b, Some(1.0 - overlap));
                }
            }
        }
        for (a, b, _) in assignment::solve(&m).matched {
            let (g, h) = (free_g[a], free_h[b]);
            gt_used[g] = true;
            hyp_used[h] = true;
            let gid = gts[g].object_id;
            let hid = hyps[h].object_id;
            if last_match.get(&gid).is_some_and(|&prev| prev != hid) {
                tally.mismatches += 1;
            }
            last_match.insert(gid, hid);
            tally.matches += 1;
            iou_sum += gts[g].bbox.iou(&hyps[h].bbox);
        }

        tally.misses = gt_used.iter().filter(|u| !**u).count();
        tally.false_positives = hyp_used.iter().filter(|u| !**u).count();
        tallies.push(tally);
    }

    MotReport::from_frames(tallies, iou_sum)
}

/// Reports from several videos: per-video MOTA/MOTP averages plus pooled counts.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregateReport {
    pub videos: Vec<(String, MotReport)>,
    pub mean_mota: f64,
    pub mean_motp: f64,
    pub pooled: MotReport,
}

pub fn aggregate(videos: Vec<(String, MotReport)>) -> Result<AggregateReport> {
    if videos.is_empty() {
        return Err(Error::Input("no videos to aggregate".into()));
    }
    let n = videos.len() as f64;
    let mean_mota = videos.iter().map(|(_, r)| r.mota).sum::<f64>() / n;
    let mean_motp = videos.iter().map(|(_, r)| r.motp).sum::<f64>() / n;
    let mut pooled = MotReport::default();
    for (_, r) in &videos {
        pooled.matches += r.matches;
        pooled.misses += r.misses;
        pooled.false_positives += r.false_positives;
        pooled.mismatches += r.mismatches;
        pooled.gt_count += r.gt_count;
        pooled.iou_sum += r.iou_sum;
    }
    pooled.finish()?;
    Ok(AggregateReport {
        videos,
        mean_mota,
        mean_motp,
        pooled,
    })
}

impl AggregateReport {
    pub fn headline(&self) -> String {
        format!(
            "scope=mean videos={} MOTA={:.6} MOTP={:.6}",
            self.videos.len(),
            self.mean_mota,
            self.mean_motp
        )
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (name, r) in &self.videos {
            let _ = writeln!(out, "scope=video name={name} {}", r.summary_line());
        }
        let _ = writeln!(out, "scope=pooled {}", self.pooled.summary_line());
        let _ = writeln!(out, "{}", self.headline());
        out
    }
}
