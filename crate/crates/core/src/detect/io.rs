//! Detection, ground-truth and re-identification sidecar files.
//!
//! Detection rows are `frame,x_min,y_min,x_max,y_max,confidence,label` with
//! 0-based frames and the literal `null` for a missing label. Ground-truth and
//! track files add an `object_id` column after `frame`. MOTChallenge rows
//! (`frame,id,x,y,w,h,conf,...`, 1-based frames) are accepted as input.
//! Lines starting with `#` and a leading `frame,...` header are ignored.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::types::{BoundingBox, ClassLabel, Detection, ReidEmbedding, Track};

/// Detections grouped by frame; index `f` holds frame `f`'s detections in file order.
pub type DetectionSequence = Vec<Vec<Detection>>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DetectionFormat {
    #[default]
    Native,
    MotChallenge,
}

impl FromStr for DetectionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "native" | "csv" => Ok(Self::Native),
            "mot" | "motchallenge" => Ok(Self::MotChallenge),
            other => Err(Error::Config(format!("unknown detection format '{other}'"))),
        }
    }
}

fn csv_reader<R: Read>(reader: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(reader)
}

/// Iterates data records, skipping blank lines and a `frame` header.
fn for_each_record<R: Read>(
    reader: R,
    source: &str,
    mut f: impl FnMut(&csv::StringRecord, u64) -> Result<()>,
) -> Result<()> {
    let mut rdr = csv_reader(reader);
    let mut first = true;
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            Error::parse(source, line, e.to_string())
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if first && rec.get(0).is_some_and(|s| s.eq_ignore_ascii_case("frame")) {
            first = false;
            continue;
        }
        first = false;
        f(&rec, line)?;
    }
    Ok(())
}

fn field<T: FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, source: &str, line: u64) -> Result<T> {
    let raw = rec
        .get(idx)
        .ok_or_else(|| Error::parse(source, line, format!("missing column '{name}'")))?;
    raw.parse()
        .map_err(|_| Error::parse(source, line, format!("invalid {name} '{raw}'")))
}

fn parse_label(raw: &str) -> ClassLabel {
    if raw.is_empty() || raw == "null" {
        ClassLabel::null()
    } else {
        ClassLabel::new(raw)
    }
}

fn push_at(seq: &mut DetectionSequence, det: Detection) {
    let f = det.frame_index;
    if seq.len() <= f {
        seq.resize_with(f + 1, Vec::new);
    }
    seq[f].push(det);
}

pub fn read_detections<R: Read>(reader: R, fmt: DetectionFormat, source: &str) -> Result<DetectionSequence> {
    let mut seq = DetectionSequence::new();
    for_each_record(reader, source, |rec, line| {
        let det = match fmt {
            DetectionFormat::Native => {
                if rec.len() != 7 {
                    return Err(Error::parse(
                        source,
                        line,
                        format!("expected 7 columns, found {}", rec.len()),
                    ));
                }
                let frame: usize = field(rec, 0, "frame", source, line)?;
                let c: [f64; 4] = [
                    field(rec, 1, "x_min", source, line)?,
                    field(rec, 2, "y_min", source, line)?,
                    field(rec, 3, "x_max", source, line)?,
                    field(rec, 4, "y_max", source, line)?,
                ];
                let confidence: f64 = field(rec, 5, "confidence", source, line)?;
                let bbox =
                    BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::parse(source, line, e.to_string()))?;
                Detection::new(frame, bbox, parse_label(&rec[6]), confidence)
                    .map_err(|e| Error::parse(source, line, e.to_string()))?
            }
            DetectionFormat::MotChallenge => {
                if rec.len() < 7 {
                    return Err(Error::parse(
                        source,
                        line,
                        format!("expected at least 7 columns, found {}", rec.len()),
                    ));
                }
                let frame: usize = field(rec, 0, "frame", source, line)?;
                if frame == 0 {
                    return Err(Error::parse(source, line, "MOTChallenge frames are 1-based"));
                }
                let x: f64 = field(rec, 2, "x", source, line)?;
                let y: f64 = field(rec, 3, "y", source, line)?;
                let w: f64 = field(rec, 4, "w", source, line)?;
                let h: f64 = field(rec, 5, "h", source, line)?;
                let conf: f64 = field(rec, 6, "conf", source, line)?;
                let bbox = BoundingBox::from_xywh(x, y, w, h).map_err(|e| Error::parse(source, line, e.to_string()))?;
                // MOT files use -1 for "not applicable" and unbounded detector scores.
                let confidence = if conf.is_finite() { conf.clamp(0.0, 1.0) } else { 0.0 };
                Detection::new(frame - 1, bbox, ClassLabel::null(), confidence)?
            }
        };
        push_at(&mut seq, det);
        Ok(())
    })?;
    Ok(seq)
}

pub fn load_detections(path: impl AsRef<Path>, fmt: DetectionFormat) -> Result<DetectionSequence> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_detections(BufReader::new(file), fmt, &path.display().to_string())
}

pub fn write_detections<W: Write>(mut w: W, seq: &[Vec<Detection>]) -> std::io::Result<()> {
    for det in seq.iter().flatten() {
        let [x0, y0, x1, y1] = det.bbox.corners();
        writeln!(
            w,
            "{},{},{},{},{},{},{}",
            det.frame_index, x0, y0, x1, y1, det.confidence, det.label
        )?;
    }
    Ok(())
}

pub fn save_detections(path: impl AsRef<Path>, seq: &[Vec<Detection>]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_detections(&mut w, seq)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Joins a re-identification sidecar onto `seq` by `(frame, row index within frame)`.
///
/// Every detection must receive exactly one embedding. With `normalize` set the
/// vectors are scaled to unit length on load.
pub fn read_reid_sidecar<R: Read>(reader: R, seq: &mut [Vec<Detection>], normalize: bool, source: &str) -> Result<()> {
    let mut buf = BufReader::new(reader);
    let mut header = String::new();
    let mut header_line = 0u64;
    loop {
        header.clear();
        header_line += 1;
        if buf.read_line(&mut header).map_err(|e| Error::io(source, e))? == 0 {
            return Err(Error::parse(source, header_line, "missing 'dim=D' header"));
        }
        let t = header.trim();
        if !t.is_empty() && !t.starts_with('#') {
            break;
        }
    }
    let dim: usize = header
        .trim()
        .strip_prefix("dim=")
        .and_then(|d| d.trim().parse().ok())
        .filter(|&d| d > 0)
        .ok_or_else(|| {
            Error::parse(
                source,
                header_line,
                format!("expected 'dim=D' header, found '{}'", header.trim()),
            )
        })?;

    let mut assigned = 0usize;
    let mut rdr = csv_reader(buf);
    for rec in rdr.records() {
        let rec = rec.map_err(|e| {
            Error::parse(
                source,
                header_line + e.position().map_or(0, |p| p.line()),
                e.to_string(),
            )
        })?;
        let line = header_line + rec.position().map_or(0, |p| p.line());
        if rec.iter().all(str::is_empty) {
            continue;
        }
        if rec.len() != dim + 2 {
            return Err(Error::parse(
                source,
                line,
                format!("expected {} columns, found {}", dim + 2, rec.len()),
            ));
        }
        let frame: usize = field(&rec, 0, "frame", source, line)?;
        let row: usize = field(&rec, 1, "det_row_index", source, line)?;
        let values = (0..dim)
            .map(|i| field::<f64>(&rec, i + 2, "feature value", source, line))
            .collect::<Result<Vec<_>>>()?;
        let det = seq
            .get_mut(frame)
            .and_then(|dets| dets.get_mut(row))
            .ok_or_else(|| Error::parse(source, line, format!("no detection {row} in frame {frame}")))?;
        if det.embedding.is_some() {
            return Err(Error::parse(
                source,
                line,
                format!("duplicate embedding for frame {frame} row {row}"),
            ));
        }
        det.embedding = Some(if normalize {
            ReidEmbedding::normalized(values)
        } else {
            ReidEmbedding::new(values)
        });
        assigned += 1;
    }
    let total: usize = seq.iter().map(Vec::len).sum();
    if assigned != total {
        return Err(Error::LengthMismatch {
            what: "re-id sidecar rows vs detections",
            left: assigned,
            right: total,
        });
    }
    Ok(())
}

pub fn load_reid_sidecar(path: impl AsRef<Path>, seq: &mut [Vec<Detection>], normalize: bool) -> Result<()> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_reid_sidecar(file, seq, normalize, &path.display().to_string())
}

/// Writes embeddings for every detection that has one. Detections without an
/// embedding are skipped, so a partial sequence will not load back.
pub fn write_reid_sidecar<W: Write>(mut w: W, seq: &[Vec<Detection>], dim: usize) -> std::io::Result<()> {
    writeln!(w, "dim={dim}")?;
    for (frame, dets) in seq.iter().enumerate() {
        for (row, det) in dets.iter().enumerate() {
            if let Some(e) = &det.embedding {
                write!(w, "{frame},{row}")?;
                for v in e.values() {
                    write!(w, ",{v}")?;
                }
                writeln!(w)?;
            }
        }
    }
    Ok(())
}

/// One row of a ground-truth or track file.
#[derive(Debug, Clone, PartialEq)]
pub struct GtRecord {
    pub frame: usize,
    pub object_id: u64,
    pub bbox: BoundingBox,
    pub confidence: f64,
    pub label: ClassLabel,
}

pub fn read_ground_truth<R: Read>(reader: R, source: &str) -> Result<Vec<GtRecord>> {
    let mut out = Vec::new();
    for_each_record(reader, source, |rec, line| {
        if rec.len() != 8 {
            return Err(Error::parse(
                source,
                line,
                format!("expected 8 columns, found {}", rec.len()),
            ));
        }
        let frame = field(rec, 0, "frame", source, line)?;
        let object_id = field(rec, 1, "object_id", source, line)?;
        let c: [f64; 4] = [
            field(rec, 2, "x_min", source, line)?,
            field(rec, 3, "y_min", source, line)?,
            field(rec, 4, "x_max", source, line)?,
            field(rec, 5, "y_max", source, line)?,
        ];
        let confidence: f64 = field(rec, 6, "confidence", source, line)?;
        if !(0.0..=1.0).contains(&confidence) {
            return Err(Error::parse(
                source,
                line,
                format!("confidence {confidence} outside [0, 1]"),
            ));
        }
        let bbox = BoundingBox::new(c[0], c[1], c[2], c[3]).map_err(|e| Error::parse(source, line, e.to_string()))?;
        out.push(GtRecord {
            frame,
            object_id,
            bbox,
            confidence,
            label: parse_label(&rec[7]),
        });
        Ok(())
    })?;
    Ok(out)
}

pub fn load_ground_truth(path: impl AsRef<Path>) -> Result<Vec<GtRecord>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_ground_truth(BufReader::new(file), &path.display().to_string())
}

pub fn write_ground_truth<W: Write>(mut w: W, records: &[GtRecord]) -> std::io::Result<()> {
    for r in records {
        let [x0, y0, x1, y1] = r.bbox.corners();
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.frame, r.object_id, x0, y0, x1, y1, r.confidence, r.label
        )?;
    }
    Ok(())
}

pub fn save_ground_truth(path: impl AsRef<Path>, records: &[GtRecord]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    write_ground_truth(&mut w, records)
        .and_then(|_| w.flush())
        .map_err(|e| Error::io(path, e))
}

/// Flattens tracks into file rows ordered by frame, then track id. The
/// confidence column carries the track's label confidence.
pub fn tracks_to_records(tracks: &[Track]) -> Vec<GtRecord> {
    let mut out: Vec<GtRecord> = tracks
        .iter()
        .flat_map(|t| {
            t.observations.iter().map(move |o| GtRecord {
                frame: o.frame_index,
                object_id: t.id,
                bbox: o.bbox,
                confidence: t.label_confidence,
                label: t.label.clone(),
            })
        })
        .collect();
    out.sort_by_key(|r| (r.frame, r.object_id));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn parse(text: &str) -> Result<DetectionSequence> {
        read_detections(text.as_bytes(), DetectionFormat::Native, "test")
    }

    #[test]
    fn empty_file_is_empty_sequence() {
        assert!(parse("").unwrap().is_empty());
        assert!(parse("# only a comment\n\n").unwrap().is_empty());
    }

    #[test]
    fn single_row() {
        let seq = parse("0,10,10,50,50,0.9,car\n").unwrap();
        assert_eq!(seq.len(), 1);
        let d = &seq[0][0];
        assert_eq!(d.frame_index, 0);
        assert_eq!(d.bbox, BoundingBox::new(10., 10., 50., 50.).unwrap());
        assert_eq!(d.confidence, 0.9);
        assert_eq!(d.label, ClassLabel::new("car"));
    }

    #[test]
    fn header_null_labels_and_grouping() {
        let seq = parse(
            "frame,x_min,y_min,x_max,y_max,confidence,label\n2,0,0,5,5,0,null\n0,1,1,4,4,0.5,bus\n2,6,6,9,9,0.2,car\n",
        )
        .unwrap();
        assert_eq!(seq.len(), 3);
        assert!(seq[1].is_empty());
        assert!(seq[2][0].label.is_null());
        assert_eq!(seq[2][1].label, ClassLabel::new("car"));
    }

    #[test]
    fn malformed_rows_report_line() {
        let err = parse("0,1,1,4,4,0.5,car\n1,1,1,x,4,0.5,car\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");
        let err = parse("0,1,1,4,4,0.5\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse("0,5,1,4,4,0.5,car\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse("0,1,1,4,4,1.5,car\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn motchallenge_conversion() {
        let seq = read_detections(
            "1,-1,10,20,30,40,0.8,-1,-1,-1\n3,-1,0,0,5,5,-1\n".as_bytes(),
            DetectionFormat::MotChallenge,
            "mot",
        )
        .unwrap();
        assert_eq!(seq[0][0].bbox, BoundingBox::new(10., 20., 40., 60.).unwrap());
        assert_eq!(seq[0][0].confidence, 0.8);
        assert_eq!(seq[2][0].confidence, 0.0);
        assert!(read_detections("0,-1,1,1,2,2,1\n".as_bytes(), DetectionFormat::MotChallenge, "mot").is_err());
    }

    #[test]
    fn sidecar_join_and_errors() {
        let mut seq = parse("0,0,0,5,5,1,car\n0,10,10,15,15,1,car\n1,0,0,5,5,1,car\n").unwrap();
        let side = "dim=2\n0,1,0,2\n0,0,3,4\n1,0,1,0\n";
        read_reid_sidecar(side.as_bytes(), &mut seq, true, "side").unwrap();
        assert_eq!(seq[0][0].embedding.as_ref().unwrap().values(), &[0.6, 0.8]);
        assert_eq!(seq[0][1].embedding.as_ref().unwrap().values(), &[0.0, 1.0]);

        let mut seq = parse("0,0,0,5,5,1,car\n0,10,10,15,15,1,car\n").unwrap();
        let short = "dim=2\n0,0,1,0\n";
        assert!(matches!(
            read_reid_sidecar(short.as_bytes(), &mut seq, true, "side"),
            Err(Error::LengthMismatch { .. })
        ));
        let mut seq = parse("0,0,0,5,5,1,car\n").unwrap();
        assert!(read_reid_sidecar("0,0,1,0\n".as_bytes(), &mut seq, true, "side").is_err());
        let mut seq = parse("0,0,0,5,5,1,car\n").unwrap();
        assert!(matches!(
            read_reid_sidecar("dim=3\n0,0,1,0\n".as_bytes(), &mut seq, true, "side"),
            Err(Error::Parse { line: 2, .. })
        ));
        let mut seq = parse("0,0,0,5,5,1,car\n").unwrap();
        assert!(read_reid_sidecar("dim=2\n0,4,1,0\n".as_bytes(), &mut seq, true, "side").is_err());
    }

    #[test]
    fn ground_truth_round_trip() {
        let text = "0,7,1,2,30,40,1,car\n1,7,2,2,31,40,1,null\n";
        let recs = read_ground_truth(text.as_bytes(), "gt").unwrap();
        assert_eq!(recs.len(), 2);
        assert!(recs[1].label.is_null());
        let mut out = Vec::new();
        write_ground_truth(&mut out, &recs).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
    }

    fn arb_detection() -> impl Strategy<Value = Detection> {
        (
            0usize..20,
            -100.0..1000.0f64,
            -100.0..1000.0f64,
            0.01..400.0f64,
            0.01..400.0f64,
            0.0..=1.0f64,
            prop::option::of("[a-z]{1,8}"),
        )
            .prop_filter_map("valid box", |(f, x, y, w, h, c, l)| {
                let bbox = BoundingBox::new(x, y, x + w, y + h).ok()?;
                let label = l.filter(|s| s != "null").map(ClassLabel::new).unwrap_or_default();
                Detection::new(f, bbox, label, c).ok()
            })
    }

    proptest! {
        #[test]
        fn write_then_load_is_lossless(dets in prop::collection::vec(arb_detection(), 0..40)) {
            let mut seq = DetectionSequence::new();
            for d in dets {
                push_at(&mut seq, d);
            }
            let mut buf = Vec::new();
            write_detections(&mut buf, &seq).unwrap();
            let back = read_detections(buf.as_slice(), DetectionFormat::Native, "rt").unwrap();
            // Trailing empty frames are not representable in the file.
            let trimmed_len = seq.iter().rposition(|f| !f.is_empty()).map_or(0, |i| i + 1);
            prop_assert_eq!(&back[..], &seq[..trimmed_len]);
        }
    }
}
