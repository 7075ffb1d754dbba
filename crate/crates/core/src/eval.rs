//! Frame-level precision/recall/F1 and the video-length sweep.

use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::annotation::GroundTruthInterval;
use crate::datagen::{generate_synthetic, DatagenError, GenOptions, NoiseModel, TemplateSpec, TlvTemplate};
use crate::scalar::Scalar;
use crate::search::{search_compiled, CompiledQuery, SceneInterval, SearchConfig, SearchError};

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("{kind} interval ({start}, {end}) outside video of length {length}")]
    OutOfBounds { kind: &'static str, start: u64, end: u64, length: u64 },
    #[error("sweep lengths must be non-empty and strictly increasing")]
    Lengths,
    #[error(transparent)]
    Datagen(#[from] DatagenError),
    #[error(transparent)]
    Search(#[from] SearchError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FrameCounts {
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl FrameCounts {
    /// Zero when nothing was predicted.
    pub fn precision(&self) -> f64 {
        ratio(self.tp, self.tp + self.fp)
    }

    /// Zero when there is nothing to find.
    pub fn recall(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn f1(&self) -> f64 {
        let (p, r) = (self.precision(), self.recall());
        if p + r > 0.0 {
            2.0 * p * r / (p + r)
        } else {
            0.0
        }
    }
}

impl std::ops::Add for FrameCounts {
    type Output = FrameCounts;

    fn add(self, o: FrameCounts) -> FrameCounts {
        FrameCounts { tp: self.tp + o.tp, fp: self.fp + o.fp, fn_: self.fn_ + o.fn_ }
    }
}

impl std::iter::Sum for FrameCounts {
    fn sum<I: Iterator<Item = FrameCounts>>(iter: I) -> Self {
        iter.fold(FrameCounts::default(), |a, b| a + b)
    }
}

fn ratio(n: u64, d: u64) -> f64 {
    if d == 0 {
        0.0
    } else {
        n as f64 / d as f64
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VideoScore {
    pub video_id: String,
    #[serde(flatten)]
    pub counts: FrameCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl VideoScore {
    pub fn new(video_id: impl Into<String>, counts: FrameCounts) -> Self {
        VideoScore {
            video_id: video_id.into(),
            counts,
            precision: counts.precision(),
            recall: counts.recall(),
            f1: counts.f1(),
        }
    }
}

/// Micro-averaged scores over all frames of all videos.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    #[serde(flatten)]
    pub counts: FrameCounts,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub videos: Vec<VideoScore>,
}

impl EvalReport {
    /// Videos are listed sorted by id, so the result does not depend on input order.
    pub fn aggregate(scores: impl IntoIterator<Item = VideoScore>) -> Self {
        let mut videos: Vec<VideoScore> = scores.into_iter().collect();
        videos.sort_by(|a, b| a.video_id.cmp(&b.video_id));
        let counts: FrameCounts = videos.iter().map(|v| v.counts).sum();
        EvalReport { counts, precision: counts.precision(), recall: counts.recall(), f1: counts.f1(), videos }
    }

    pub fn to_json(&self) -> Value {
        let mut v = serde_json::to_value(self).expect("serializable");
        v["v"] = json!(1);
        v
    }
}

fn rasterize(mask: &mut [bool], spans: impl Iterator<Item = (u64, u64)>, kind: &'static str) -> Result<(), EvalError> {
    let length = mask.len() as u64;
    for (start, end) in spans {
        if start > end || end >= length {
            return Err(EvalError::OutOfBounds { kind, start, end, length });
        }
        mask[start as usize..=end as usize].iter_mut().for_each(|m| *m = true);
    }
    Ok(())
}

/// Frame-wise confusion counts of predicted against true intervals.
pub fn frame_counts(
    predicted: &[SceneInterval],
    truth: &[GroundTruthInterval],
    video_length: u64,
) -> Result<FrameCounts, EvalError> {
    let n = video_length as usize;
    let mut pred = vec![false; n];
    let mut gt = vec![false; n];
    rasterize(&mut pred, predicted.iter().map(|i| (i.start_frame, i.end_frame)), "predicted")?;
    rasterize(&mut gt, truth.iter().map(|i| (i.start_frame, i.end_frame)), "ground-truth")?;
    let mut c = FrameCounts::default();
    for (&p, &g) in pred.iter().zip(&gt) {
        match (p, g) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => {}
        }
    }
    Ok(c)
}

pub fn evaluate(
    predicted: &[SceneInterval],
    truth: &[GroundTruthInterval],
    video_length: u64,
) -> Result<EvalReport, EvalError> {
    let counts = frame_counts(predicted, truth, video_length)?;
    Ok(EvalReport::aggregate([VideoScore::new("", counts)]))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepOptions {
    pub template: TlvTemplate,
    pub seed: u64,
    /// Timed repetitions per length; the fastest is reported.
    pub runs: usize,
    /// Repeat short searches until at least this many frames are timed per run.
    pub min_timed_frames: usize,
    /// Skip timing so the output is reproducible byte for byte.
    pub timing: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { template: TlvTemplate::AUntilB, seed: 0, runs: 3, min_timed_frames: 20_000, timing: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub length: usize,
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    /// Absent when timing is off.
    pub mean_frame_latency_us: Option<f64>,
}

/// F1 and per-frame search latency as the video grows, one sweep-mode video per length.
pub fn length_sweep<T: Scalar>(
    lengths: &[usize],
    noise: &NoiseModel,
    cfg: &SearchConfig<T>,
    opts: &SweepOptions,
) -> Result<Vec<SweepRow>, EvalError> {
    if lengths.is_empty() || lengths.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::Lengths);
    }
    let ts = TemplateSpec::with_defaults(opts.template);
    let gen = GenOptions { sweep: true, ..GenOptions::default() };
    // The satisfying window spans the whole video, so the layer cap must admit it.
    let cfg = SearchConfig {
        max_automaton_layers: cfg.max_automaton_layers.max(*lengths.last().expect("non-empty")),
        ..cfg.clone()
    };
    let query = CompiledQuery::new(&ts.spec(), cfg.lambda, cfg.max_propositions)?;

    let mut rows = Vec::with_capacity(lengths.len());
    for (i, &len) in lengths.iter().enumerate() {
        let noise = NoiseModel { seed: noise.seed.wrapping_add(i as u64), ..*noise };
        let g = generate_synthetic(&format!("sweep_{len}"), &ts, len, &noise, opts.seed.wrapping_add(i as u64), &gen)?;
        let found = search_compiled(&g.video, &query, &cfg)?;
        let counts = frame_counts(&found, &g.truth, len as u64)?;
        let latency = if opts.timing {
            let reps = opts.min_timed_frames.div_ceil(len).max(1);
            let mut best = f64::INFINITY;
            for _ in 0..opts.runs.max(1) {
                let t0 = Instant::now();
                for _ in 0..reps {
                    std::hint::black_box(search_compiled(&g.video, &query, &cfg)?);
                }
                best = best.min(t0.elapsed().as_secs_f64() / (reps * len) as f64);
            }
            Some(best * 1e6)
        } else {
            None
        };
        rows.push(SweepRow {
            length: len,
            f1: counts.f1(),
            precision: counts.precision(),
            recall: counts.recall(),
            mean_frame_latency_us: latency,
        });
    }
    Ok(rows)
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["length", "f1", "precision", "recall", "mean_frame_latency_us"]).expect("in-memory write");
    for r in rows {
        let lat = r.mean_frame_latency_us.map_or_else(String::new, |l| format!("{l:.6}"));
        w.write_record([r.length.to_string(), r.f1.to_string(), r.precision.to_string(), r.recall.to_string(), lat])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8")
}

pub fn sweep_json(rows: &[SweepRow]) -> Value {
    json!({ "v": 1, "rows": rows })
}
