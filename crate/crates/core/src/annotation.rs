//! Per-frame detection annotations and their JSON Lines wire format.
//!
//! One frame per line: `{"frame": 12, "t": 0.48, "det": [{"p": "car", "c": 0.91}]}`.
//! Detection entries may carry a `bbox` field, which is accepted and dropped.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub const DEFAULT_FPS: f64 = 25.0;

#[derive(Debug, Error)]
pub enum AnnotationError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}: frame {frame} is not after previous frame {previous}")]
    OutOfOrder { line: usize, previous: u64, frame: u64 },
    #[error("line {line}: duplicate frame {frame}")]
    DuplicateFrame { line: usize, frame: u64 },
    #[error("line {line}: timestamp {t} inconsistent with frame {frame} at {fps} fps")]
    Timestamp { line: usize, frame: u64, t: f64, fps: f64 },
    #[error("labels outside the declared vocabulary: {}", .0.join(", "))]
    Vocabulary(Vec<String>),
    #[error("invalid annotation: {0}")]
    Invalid(String),
    #[error("ground truth: {0}")]
    GroundTruth(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionRecord {
    pub proposition: String,
    pub raw_confidence: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameAnnotation {
    pub frame_index: u64,
    pub timestamp_s: f64,
    pub detections: Vec<DetectionRecord>,
}

impl FrameAnnotation {
    /// Builds a frame, collapsing repeated labels to their highest confidence.
    /// Labels keep their first-occurrence order.
    pub fn new(
        frame_index: u64,
        timestamp_s: f64,
        detections: impl IntoIterator<Item = DetectionRecord>,
    ) -> Result<Self, AnnotationError> {
        if !(timestamp_s >= 0.0) || !timestamp_s.is_finite() {
            return Err(AnnotationError::Invalid(format!("timestamp {timestamp_s} must be a non-negative number")));
        }
        let mut out: Vec<DetectionRecord> = Vec::new();
        for d in detections {
            if d.proposition.trim().is_empty() {
                return Err(AnnotationError::Invalid("empty proposition label".into()));
            }
            if !(0.0..=1.0).contains(&d.raw_confidence) {
                return Err(AnnotationError::Invalid(format!(
                    "confidence {} for '{}' outside [0,1]",
                    d.raw_confidence, d.proposition
                )));
            }
            match out.iter_mut().find(|e| e.proposition == d.proposition) {
                Some(e) => e.raw_confidence = e.raw_confidence.max(d.raw_confidence),
                None => out.push(d),
            }
        }
        Ok(FrameAnnotation { frame_index, timestamp_s, detections: out })
    }

    /// Raw confidence for `label`; detector silence reads as 0.
    pub fn confidence(&self, label: &str) -> f64 {
        self.detections.iter().find(|d| d.proposition == label).map_or(0.0, |d| d.raw_confidence)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VideoAnnotation {
    pub video_id: String,
    pub fps: f64,
    pub frames: Vec<FrameAnnotation>,
}

impl VideoAnnotation {
    pub fn new(video_id: impl Into<String>, fps: f64, frames: Vec<FrameAnnotation>) -> Result<Self, AnnotationError> {
        let v = VideoAnnotation { video_id: video_id.into(), fps, frames };
        v.validate()?;
        Ok(v)
    }

    pub fn validate(&self) -> Result<(), AnnotationError> {
        if !(self.fps > 0.0) || !self.fps.is_finite() {
            return Err(AnnotationError::Invalid(format!("fps must be positive, got {}", self.fps)));
        }
        for (i, w) in self.frames.windows(2).enumerate() {
            if w[1].frame_index <= w[0].frame_index {
                let line = i + 2;
                return Err(if w[1].frame_index == w[0].frame_index {
                    AnnotationError::DuplicateFrame { line, frame: w[1].frame_index }
                } else {
                    AnnotationError::OutOfOrder { line, previous: w[0].frame_index, frame: w[1].frame_index }
                });
            }
        }
        if let Some(first) = self.frames.first() {
            for (i, f) in self.frames.iter().enumerate() {
                check_timestamp(first, f, self.fps, i + 1)?;
            }
        }
        Ok(())
    }

    /// Number of frame slots covered, i.e. last frame index + 1.
    pub fn length(&self) -> u64 {
        self.frames.last().map_or(0, |f| f.frame_index + 1)
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

// Timestamps are checked relative to the first frame so streams with a start offset are accepted.
fn check_timestamp(first: &FrameAnnotation, f: &FrameAnnotation, fps: f64, line: usize) -> Result<(), AnnotationError> {
    let expected = (f.frame_index - first.frame_index) as f64 / fps;
    let actual = f.timestamp_s - first.timestamp_s;
    if (actual - expected).abs() > 1.0 / fps + 1e-9 {
        return Err(AnnotationError::Timestamp { line, frame: f.frame_index, t: f.timestamp_s, fps });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct GroundTruthInterval {
    #[serde(rename = "start")]
    pub start_frame: u64,
    #[serde(rename = "end")]
    pub end_frame: u64,
    pub spec_id: String,
}

impl GroundTruthInterval {
    pub fn new(start_frame: u64, end_frame: u64, spec_id: impl Into<String>) -> Result<Self, AnnotationError> {
        if start_frame > end_frame {
            return Err(AnnotationError::GroundTruth(format!("start {start_frame} after end {end_frame}")));
        }
        Ok(GroundTruthInterval { start_frame, end_frame, spec_id: spec_id.into() })
    }

    pub fn check_bounds(&self, video_length: u64) -> Result<(), AnnotationError> {
        if self.start_frame > self.end_frame || self.end_frame >= video_length {
            return Err(AnnotationError::GroundTruth(format!(
                "interval ({}, {}) outside video of length {video_length}",
                self.start_frame, self.end_frame
            )));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default)]
pub struct ReadOptions {
    pub video_id: String,
    /// When absent, inferred from the first and last timestamps.
    pub fps: Option<f64>,
}

#[derive(Deserialize)]
struct WireFrame {
    frame: Value,
    t: Value,
    #[serde(default)]
    det: Vec<WireDet>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Deserialize)]
struct WireDet {
    p: Value,
    c: Value,
    #[serde(default, rename = "bbox")]
    _bbox: Option<Value>,
    #[serde(flatten)]
    extra: BTreeMap<String, Value>,
}

#[derive(Serialize)]
struct WireFrameOut<'a> {
    frame: u64,
    t: f64,
    det: Vec<WireDetOut<'a>>,
}

#[derive(Serialize)]
struct WireDetOut<'a> {
    p: &'a str,
    c: f64,
}

fn parse_frame_line(text: &str, line: usize) -> Result<FrameAnnotation, AnnotationError> {
    let schema = |message: String| AnnotationError::Schema { line, message };
    let wire: WireFrame = serde_json::from_str(text).map_err(|e| schema(format!("malformed frame record: {e}")))?;
    for key in wire.extra.keys() {
        log::warn!("line {line}: ignoring unknown field '{key}'");
    }
    let frame = wire
        .frame
        .as_u64()
        .ok_or_else(|| schema(format!("field 'frame' must be a non-negative integer, got {}", wire.frame)))?;
    let t = wire
        .t
        .as_f64()
        .filter(|t| *t >= 0.0)
        .ok_or_else(|| schema(format!("field 't' must be a non-negative number, got {}", wire.t)))?;
    let mut dets = Vec::with_capacity(wire.det.len());
    for (j, d) in wire.det.into_iter().enumerate() {
        for key in d.extra.keys() {
            log::warn!("line {line}: ignoring unknown field 'det[{j}].{key}'");
        }
        let p =
            d.p.as_str()
                .filter(|p| !p.trim().is_empty())
                .ok_or_else(|| schema(format!("field 'det[{j}].p' must be a non-empty string")))?;
        let c =
            d.c.as_f64()
                .filter(|c| (0.0..=1.0).contains(c))
                .ok_or_else(|| schema(format!("field 'det[{j}].c' must be a number in [0,1], got {}", d.c)))?;
        dets.push(DetectionRecord { proposition: p.to_string(), raw_confidence: c });
    }
    FrameAnnotation::new(frame, t, dets).map_err(|e| schema(e.to_string()))
}

/// Parses a JSONL annotation stream. Blank lines are skipped.
pub fn read_annotations(reader: impl BufRead, opts: &ReadOptions) -> Result<VideoAnnotation, AnnotationError> {
    let mut frames: Vec<FrameAnnotation> = Vec::new();
    let mut lines: Vec<usize> = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let frame = parse_frame_line(&text, line)?;
        if let Some(prev) = frames.last() {
            if frame.frame_index == prev.frame_index {
                return Err(AnnotationError::DuplicateFrame { line, frame: frame.frame_index });
            }
            if frame.frame_index < prev.frame_index {
                return Err(AnnotationError::OutOfOrder { line, previous: prev.frame_index, frame: frame.frame_index });
            }
        }
        frames.push(frame);
        lines.push(line);
    }
    let fps = match opts.fps {
        Some(fps) => fps,
        None => infer_fps(&frames),
    };
    if !(fps > 0.0) || !fps.is_finite() {
        return Err(AnnotationError::Invalid(format!("fps must be positive, got {fps}")));
    }
    if let Some(first) = frames.first() {
        for (f, &line) in frames.iter().zip(&lines) {
            check_timestamp(first, f, fps, line)?;
        }
    }
    Ok(VideoAnnotation { video_id: opts.video_id.clone(), fps, frames })
}

fn infer_fps(frames: &[FrameAnnotation]) -> f64 {
    match (frames.first(), frames.last()) {
        (Some(a), Some(b)) if b.timestamp_s > a.timestamp_s => {
            (b.frame_index - a.frame_index) as f64 / (b.timestamp_s - a.timestamp_s)
        }
        _ => DEFAULT_FPS,
    }
}

pub fn write_annotations(video: &VideoAnnotation, mut writer: impl Write) -> Result<(), AnnotationError> {
    for f in &video.frames {
        let wire = WireFrameOut {
            frame: f.frame_index,
            t: f.timestamp_s,
            det: f.detections.iter().map(|d| WireDetOut { p: &d.proposition, c: d.raw_confidence }).collect(),
        };
        serde_json::to_writer(&mut writer, &wire).map_err(|e| AnnotationError::Invalid(e.to_string()))?;
        writer.write_all(b"\n")?;
    }
    Ok(())
}

/// Turns per-frame ground-truth label lists into a video whose detections all have confidence 1.
pub fn ingest_ground_truth_labels<S: AsRef<str>>(
    frames: &[Vec<S>],
    vocabulary: &BTreeSet<String>,
    video_id: impl Into<String>,
    fps: f64,
) -> Result<VideoAnnotation, AnnotationError> {
    let unknown: BTreeSet<&str> =
        frames.iter().flatten().map(AsRef::as_ref).filter(|l| !vocabulary.contains(*l)).collect();
    if !unknown.is_empty() {
        return Err(AnnotationError::Vocabulary(unknown.into_iter().map(String::from).collect()));
    }
    let out = frames
        .iter()
        .enumerate()
        .map(|(i, labels)| {
            let dets =
                labels.iter().map(|l| DetectionRecord { proposition: l.as_ref().to_string(), raw_confidence: 1.0 });
            FrameAnnotation::new(i as u64, i as f64 / fps, dets)
        })
        .collect::<Result<Vec<_>, _>>()?;
    VideoAnnotation::new(video_id, fps, out)
}

#[derive(Deserialize)]
struct LabelLine {
    labels: Vec<String>,
}

/// Reads a label stream: one `{"labels": [...]}` object per line, in frame order.
pub fn read_label_stream(reader: impl BufRead) -> Result<Vec<Vec<String>>, AnnotationError> {
    let mut out = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let text = text?;
        if text.trim().is_empty() {
            continue;
        }
        let parsed: LabelLine = serde_json::from_str(&text)
            .map_err(|e| AnnotationError::Schema { line: i + 1, message: format!("malformed label record: {e}") })?;
        out.push(parsed.labels);
    }
    Ok(out)
}

pub fn read_ground_truth(reader: impl std::io::Read) -> Result<Vec<GroundTruthInterval>, AnnotationError> {
    let intervals: Vec<GroundTruthInterval> =
        serde_json::from_reader(reader).map_err(|e| AnnotationError::GroundTruth(e.to_string()))?;
    for g in &intervals {
        if g.start_frame > g.end_frame {
            return Err(AnnotationError::GroundTruth(format!("start {} after end {}", g.start_frame, g.end_frame)));
        }
    }
    Ok(intervals)
}

pub fn write_ground_truth(intervals: &[GroundTruthInterval], mut writer: impl Write) -> Result<(), AnnotationError> {
    serde_json::to_writer(&mut writer, intervals).map_err(|e| AnnotationError::GroundTruth(e.to_string()))?;
    writer.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn opts(fps: f64) -> ReadOptions {
        ReadOptions { video_id: "v".into(), fps: Some(fps) }
    }

    #[test]
    fn reads_two_frames() {
        let text = "{\"frame\":0,\"t\":0.0,\"det\":[{\"p\":\"a\",\"c\":0.5}]}\n{\"frame\":1,\"t\":0.04,\"det\":[]}\n";
        let v = read_annotations(text.as_bytes(), &opts(25.0)).unwrap();
        assert_eq!(v.frames.len(), 2);
        assert_eq!(v.frames[0].confidence("a"), 0.5);
        assert_eq!(v.frames[1].confidence("a"), 0.0);
    }

    #[test]
    fn confidence_out_of_range_names_field_and_line() {
        let text = "{\"frame\":0,\"t\":0,\"det\":[]}\n{\"frame\":1,\"t\":0.04,\"det\":[{\"p\":\"a\",\"c\":1.2}]}\n";
        let err = read_annotations(text.as_bytes(), &opts(25.0)).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2") && msg.contains("det[0].c"), "{msg}");
    }

    #[test]
    fn duplicate_labels_keep_max() {
        let text = r#"{"frame":0,"t":0,"det":[{"p":"a","c":0.3},{"p":"a","c":0.8}]}"#;
        let v = read_annotations(text.as_bytes(), &opts(25.0)).unwrap();
        assert_eq!(v.frames[0].detections, vec![DetectionRecord { proposition: "a".into(), raw_confidence: 0.8 }]);
    }

    #[test]
    fn ordering_errors() {
        let dup = "{\"frame\":3,\"t\":0}\n{\"frame\":3,\"t\":0}\n";
        assert!(matches!(
            read_annotations(dup.as_bytes(), &opts(25.0)),
            Err(AnnotationError::DuplicateFrame { line: 2, frame: 3 })
        ));
        let back = "{\"frame\":3,\"t\":0.12}\n{\"frame\":2,\"t\":0.08}\n";
        assert!(matches!(
            read_annotations(back.as_bytes(), &opts(25.0)),
            Err(AnnotationError::OutOfOrder { line: 2, .. })
        ));
        let bad = "{\"frame\":0,\"t\":0}\nnot json\n";
        assert!(matches!(read_annotations(bad.as_bytes(), &opts(25.0)), Err(AnnotationError::Schema { line: 2, .. })));
    }

    #[test]
    fn unknown_fields_and_bbox_are_ignored() {
        let text = r#"{"frame":0,"t":0,"src":"cam1","det":[{"p":"a","c":0.5,"bbox":[1,2,3,4],"cls":7}]}"#;
        let v = read_annotations(text.as_bytes(), &opts(25.0)).unwrap();
        assert_eq!(v.frames[0].confidence("a"), 0.5);
    }

    #[test]
    fn timestamps_must_track_fps() {
        let text = "{\"frame\":0,\"t\":0}\n{\"frame\":10,\"t\":5.0}\n";
        assert!(matches!(read_annotations(text.as_bytes(), &opts(25.0)), Err(AnnotationError::Timestamp { .. })));
        let v = read_annotations(text.as_bytes(), &ReadOptions::default()).unwrap();
        assert_eq!(v.fps, 2.0);
    }

    #[test]
    fn ground_truth_ingest() {
        let vocab: BTreeSet<String> = ["person", "car", "bike"].iter().map(|s| s.to_string()).collect();
        let v = ingest_ground_truth_labels(&[vec!["person", "car"], vec![]], &vocab, "w", 10.0).unwrap();
        assert_eq!(v.frames[0].detections.len(), 2);
        assert!(v.frames[0].detections.iter().all(|d| d.raw_confidence == 1.0));
        assert!(v.frames[1].detections.is_empty());
        let err = ingest_ground_truth_labels(&[vec!["person", "tram"]], &vocab, "w", 10.0).unwrap_err();
        assert!(err.to_string().contains("tram"));

        let frames: Vec<Vec<&str>> = (0..100).map(|i| if i % 3 == 0 { vec!["car"] } else { vec![] }).collect();
        let v = ingest_ground_truth_labels(&frames, &vocab, "w", 10.0).unwrap();
        assert_eq!(v.frames.len(), 100);
        assert_eq!(v.frames.iter().filter(|f| !f.detections.is_empty()).count(), 34);
    }

    #[test]
    fn empty_video_writes_nothing() {
        let v = VideoAnnotation::new("e", 25.0, vec![]).unwrap();
        let mut buf = Vec::new();
        write_annotations(&v, &mut buf).unwrap();
        assert!(buf.is_empty());
        assert_eq!(
            read_annotations(buf.as_slice(), &opts(25.0)).unwrap(),
            VideoAnnotation { video_id: "v".into(), ..v }
        );
    }

    #[test]
    fn ground_truth_file_round_trip() {
        let gt = vec![GroundTruthInterval::new(0, 4, "s").unwrap(), GroundTruthInterval::new(7, 7, "s").unwrap()];
        let mut buf = Vec::new();
        write_ground_truth(&gt, &mut buf).unwrap();
        assert_eq!(
            String::from_utf8(buf.clone()).unwrap().trim(),
            r#"[{"start":0,"end":4,"spec_id":"s"},{"start":7,"end":7,"spec_id":"s"}]"#
        );
        assert_eq!(read_ground_truth(buf.as_slice()).unwrap(), gt);
        assert!(read_ground_truth(r#"[{"start":5,"end":4,"spec_id":"s"}]"#.as_bytes()).is_err());
        assert!(gt[0].check_bounds(4).is_err());
        assert!(gt[0].check_bounds(5).is_ok());
    }

    #[test]
    fn label_stream() {
        let s = read_label_stream("{\"labels\":[\"a\"]}\n\n{\"labels\":[]}\n".as_bytes()).unwrap();
        assert_eq!(s, vec![vec!["a".to_string()], vec![]]);
    }

    fn arb_video() -> impl Strategy<Value = VideoAnnotation> {
        let label = prop::sample::select(vec!["a", "b", "car", "ß汽车", "x \"q\""]);
        let det =
            (label, 0.0f64..=1.0).prop_map(|(p, c)| DetectionRecord { proposition: p.to_string(), raw_confidence: c });
        let frame = (1u64..4, prop::collection::vec(det, 0..4));
        (prop::collection::vec(frame, 0..50), 1.0f64..60.0).prop_map(|(frames, fps)| {
            let mut idx = 0;
            let frames = frames
                .into_iter()
                .map(|(step, dets)| {
                    idx += step;
                    FrameAnnotation::new(idx, idx as f64 / fps, dets).unwrap()
                })
                .collect();
            VideoAnnotation::new("v", fps, frames).unwrap()
        })
    }

    proptest! {
        #[test]
        fn write_read_round_trip(v in arb_video()) {
            let mut buf = Vec::new();
            write_annotations(&v, &mut buf).unwrap();
            let back = read_annotations(buf.as_slice(), &opts(v.fps)).unwrap();
            prop_assert_eq!(back, v);
        }
    }
}
