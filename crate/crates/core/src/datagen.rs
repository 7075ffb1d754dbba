//! Synthetic annotated videos with ground-truth intervals for the five
//! benchmark templates, plus annotation of real label streams.

use std::collections::BTreeSet;
use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::annotation::{
    ingest_ground_truth_labels, write_annotations, write_ground_truth, AnnotationError, DetectionRecord,
    FrameAnnotation, GroundTruthInterval, VideoAnnotation, DEFAULT_FPS,
};
use crate::calibration::CalibrationSample;
use crate::search::{oracle_intervals, SearchConfig, SearchError, ORACLE_MAX_FRAMES};
use crate::spec_lang::{Spec, SpecAst};

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("unknown template '{0}' (expected eventually_a, always_a, a_and_b, a_until_b or a_and_b_until_c)")]
    UnknownTemplate(String),
    #[error("template {template} needs {expected} propositions, got {got}")]
    Arity { template: TlvTemplate, expected: usize, got: usize },
    #[error("cannot place {instances} window(s) of at least {min_window} frames in a video of {length} frames")]
    Placement { instances: usize, min_window: usize, length: usize },
    #[error(
        "template {0} cannot be annotated on a real stream: only until-templates apply, \
         the others would require altering the original frame sequence"
    )]
    RealStreamTemplate(TlvTemplate),
    #[error("invalid noise model: {0}")]
    Noise(String),
    #[error("invalid generator options: {0}")]
    Options(String),
    #[error(transparent)]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Search(#[from] SearchError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TlvTemplate {
    EventuallyA,
    AlwaysA,
    AAndB,
    AUntilB,
    AAndBUntilC,
}

impl TlvTemplate {
    pub const ALL: [TlvTemplate; 5] = [
        TlvTemplate::EventuallyA,
        TlvTemplate::AlwaysA,
        TlvTemplate::AAndB,
        TlvTemplate::AUntilB,
        TlvTemplate::AAndBUntilC,
    ];

    pub fn id(self) -> &'static str {
        match self {
            TlvTemplate::EventuallyA => "eventually_a",
            TlvTemplate::AlwaysA => "always_a",
            TlvTemplate::AAndB => "a_and_b",
            TlvTemplate::AUntilB => "a_until_b",
            TlvTemplate::AAndBUntilC => "a_and_b_until_c",
        }
    }

    pub fn arity(self) -> usize {
        match self {
            TlvTemplate::EventuallyA | TlvTemplate::AlwaysA => 1,
            TlvTemplate::AAndB | TlvTemplate::AUntilB => 2,
            TlvTemplate::AAndBUntilC => 3,
        }
    }

    /// Shortest window that realizes the template.
    pub fn min_window(self) -> usize {
        match self {
            TlvTemplate::AUntilB | TlvTemplate::AAndBUntilC => 2,
            _ => 1,
        }
    }

    pub fn is_until(self) -> bool {
        matches!(self, TlvTemplate::AUntilB | TlvTemplate::AAndBUntilC)
    }

    pub fn default_propositions(self) -> Vec<String> {
        ["a", "b", "c"][..self.arity()].iter().map(|s| s.to_string()).collect()
    }

    pub fn formula(self, props: &[String]) -> Result<SpecAst, DatagenError> {
        if props.len() != self.arity() {
            return Err(DatagenError::Arity { template: self, expected: self.arity(), got: props.len() });
        }
        let p = |i: usize| SpecAst::prop(&props[i]);
        Ok(match self {
            TlvTemplate::EventuallyA => SpecAst::eventually(p(0)),
            TlvTemplate::AlwaysA => SpecAst::always(p(0)),
            TlvTemplate::AAndB => SpecAst::and(p(0), p(1)),
            TlvTemplate::AUntilB => SpecAst::until(p(0), p(1)),
            TlvTemplate::AAndBUntilC => SpecAst::until(SpecAst::and(p(0), p(1)), p(2)),
        })
    }

    /// Truth assignment (indices into the proposition list) of frame `i` of a window of length `w`.
    fn window_frame(self, i: usize, w: usize) -> &'static [usize] {
        let last = i + 1 == w;
        match self {
            TlvTemplate::EventuallyA | TlvTemplate::AlwaysA => &[0],
            TlvTemplate::AAndB => &[0, 1],
            TlvTemplate::AUntilB if last => &[1],
            TlvTemplate::AUntilB => &[0],
            TlvTemplate::AAndBUntilC if last => &[2],
            TlvTemplate::AAndBUntilC => &[0, 1],
        }
    }
}

impl fmt::Display for TlvTemplate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for TlvTemplate {
    type Err = DatagenError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TlvTemplate::ALL.into_iter().find(|t| t.id() == s).ok_or_else(|| DatagenError::UnknownTemplate(s.to_string()))
    }
}

/// A template bound to concrete proposition labels.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TemplateSpec {
    pub template: TlvTemplate,
    pub propositions: Vec<String>,
}

impl TemplateSpec {
    pub fn new(template: TlvTemplate, propositions: Vec<String>) -> Result<Self, DatagenError> {
        template.formula(&propositions)?;
        if propositions.iter().collect::<BTreeSet<_>>().len() != propositions.len() {
            return Err(DatagenError::Options("template propositions must be distinct".into()));
        }
        Ok(TemplateSpec { template, propositions })
    }

    pub fn with_defaults(template: TlvTemplate) -> Self {
        TemplateSpec { template, propositions: template.default_propositions() }
    }

    pub fn spec(&self) -> Spec {
        Spec::new(None, self.template.formula(&self.propositions).expect("arity checked"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ConfidenceDist {
    Fixed { value: f64 },
    Beta { alpha: f64, beta: f64 },
}

impl ConfidenceDist {
    fn validate(&self) -> Result<(), DatagenError> {
        match *self {
            ConfidenceDist::Fixed { value } if (0.0..=1.0).contains(&value) => Ok(()),
            ConfidenceDist::Beta { alpha, beta }
                if alpha > 0.0 && beta > 0.0 && alpha.is_finite() && beta.is_finite() =>
            {
                Ok(())
            }
            other => Err(DatagenError::Noise(format!("bad confidence distribution {other:?}"))),
        }
    }

    fn sampler(&self) -> Sampler {
        match *self {
            ConfidenceDist::Fixed { value } => Sampler::Fixed(value),
            ConfidenceDist::Beta { alpha, beta } => Sampler::Beta(Beta::new(alpha, beta).expect("validated")),
        }
    }
}

enum Sampler {
    Fixed(f64),
    Beta(Beta<f64>),
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            Sampler::Fixed(v) => *v,
            Sampler::Beta(b) => b.sample(rng).clamp(0.0, 1.0),
        }
    }
}

/// Simulated detector behavior over a truth timeline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseModel {
    /// Confidence of a truly present proposition.
    pub tp_confidence: ConfidenceDist,
    /// Chance that a truly absent proposition is reported anyway.
    pub fp_rate: f64,
    pub fp_confidence: ConfidenceDist,
    pub seed: u64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        NoiseModel {
            tp_confidence: ConfidenceDist::Beta { alpha: 8.0, beta: 2.0 },
            fp_rate: 0.05,
            fp_confidence: ConfidenceDist::Beta { alpha: 2.0, beta: 8.0 },
            seed: 0,
        }
    }
}

impl NoiseModel {
    /// Perfect detector: present at confidence 1, nothing spurious.
    pub fn noise_free(seed: u64) -> Self {
        NoiseModel {
            tp_confidence: ConfidenceDist::Fixed { value: 1.0 },
            fp_rate: 0.0,
            fp_confidence: ConfidenceDist::Fixed { value: 0.0 },
            seed,
        }
    }

    /// Detector output that carries no information about the truth.
    pub fn uninformative(seed: u64) -> Self {
        let d = ConfidenceDist::Beta { alpha: 2.0, beta: 8.0 };
        NoiseModel { tp_confidence: d, fp_rate: 1.0, fp_confidence: d, seed }
    }

    pub fn validate(&self) -> Result<(), DatagenError> {
        if !(0.0..=1.0).contains(&self.fp_rate) {
            return Err(DatagenError::Noise(format!("fp_rate must lie in [0,1], got {}", self.fp_rate)));
        }
        self.tp_confidence.validate()?;
        self.fp_confidence.validate()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GenOptions {
    pub instances: usize,
    pub min_window: usize,
    pub max_window: usize,
    /// One window covering the whole video (A from the first frame, B on the last).
    pub sweep: bool,
    /// Labels that background frames may show; never part of a template.
    pub distractors: Vec<String>,
    /// Chance that a background frame shows a distractor label.
    pub distractor_rate: f64,
    pub fps: f64,
}

pub const COCO_DISTRACTORS: &[&str] =
    &["bicycle", "bench", "bird", "traffic light", "umbrella", "chair", "potted plant", "clock"];
pub const IMAGENET_DISTRACTORS: &[&str] =
    &["goldfish", "tabby", "volcano", "daisy", "espresso", "jellyfish", "lighthouse"];

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            instances: 1,
            min_window: 1,
            max_window: 24,
            sweep: false,
            distractors: COCO_DISTRACTORS.iter().map(|s| s.to_string()).collect(),
            distractor_rate: 0.5,
            fps: DEFAULT_FPS,
        }
    }
}

impl GenOptions {
    fn validate(&self) -> Result<(), DatagenError> {
        if self.instances == 0 && !self.sweep {
            return Err(DatagenError::Options("instances must be at least 1".into()));
        }
        if self.min_window > self.max_window {
            return Err(DatagenError::Options(format!(
                "min_window {} exceeds max_window {}",
                self.min_window, self.max_window
            )));
        }
        if !(0.0..=1.0).contains(&self.distractor_rate) {
            return Err(DatagenError::Options("distractor_rate must lie in [0,1]".into()));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(DatagenError::Options("fps must be positive".into()));
        }
        Ok(())
    }
}

/// Per-frame truth: template proposition indices, then distractor labels.
#[derive(Clone, Debug, Default, PartialEq)]
struct TruthFrame {
    present: Vec<usize>,
    distractors: Vec<usize>,
}

fn place_windows(
    template: TlvTemplate,
    length: usize,
    opts: &GenOptions,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<(usize, usize)>, DatagenError> {
    let lo = opts.min_window.max(template.min_window());
    if opts.sweep {
        if length < lo {
            return Err(DatagenError::Placement { instances: 1, min_window: lo, length });
        }
        return Ok(vec![(0, length)]);
    }
    let k = opts.instances;
    // Separate neighbouring windows by at least one background frame.
    let room = length.saturating_sub(k - 1) / k;
    let hi = opts.max_window.max(lo).min(room);
    if length < k * lo + (k - 1) || hi < lo {
        return Err(DatagenError::Placement { instances: k, min_window: lo, length });
    }
    let widths: Vec<usize> = (0..k).map(|_| rng.gen_range(lo..=hi)).collect();
    let free = length - widths.iter().sum::<usize>() - (k - 1);
    // Random composition of the free frames into k + 1 gaps.
    let mut cuts: Vec<usize> = (0..k).map(|_| rng.gen_range(0..=free)).collect();
    cuts.sort_unstable();
    let mut out = Vec::with_capacity(k);
    let mut pos = 0;
    let mut prev = 0;
    for (i, (&w, &c)) in widths.iter().zip(&cuts).enumerate() {
        pos += c - prev + usize::from(i > 0);
        prev = c;
        out.push((pos, w));
        pos += w;
    }
    Ok(out)
}

fn truth_timeline(
    template: TlvTemplate,
    length: usize,
    opts: &GenOptions,
    rng: &mut ChaCha8Rng,
) -> Result<(Vec<TruthFrame>, Vec<(usize, usize)>), DatagenError> {
    let windows = place_windows(template, length, opts, rng)?;
    let mut frames = vec![TruthFrame::default(); length];
    for &(start, w) in &windows {
        for i in 0..w {
            frames[start + i].present = template.window_frame(i, w).to_vec();
        }
    }
    if !opts.distractors.is_empty() {
        for f in frames.iter_mut().filter(|f| f.present.is_empty()) {
            if rng.gen_bool(opts.distractor_rate) {
                let n = rng.gen_range(1..=2.min(opts.distractors.len()));
                let mut picked: Vec<usize> = (0..opts.distractors.len()).collect::<Vec<_>>();
                picked.partial_shuffle(rng, n);
                picked.truncate(n);
                picked.sort_unstable();
                f.distractors = picked;
            }
        }
    }
    Ok((frames, windows))
}

fn render(
    video_id: &str,
    ts: &TemplateSpec,
    truth: &[TruthFrame],
    opts: &GenOptions,
    noise: &NoiseModel,
) -> Result<VideoAnnotation, DatagenError> {
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let tp = noise.tp_confidence.sampler();
    let fp = noise.fp_confidence.sampler();
    let mut frames = Vec::with_capacity(truth.len());
    for (i, t) in truth.iter().enumerate() {
        let mut dets = Vec::new();
        for (k, label) in ts.propositions.iter().enumerate() {
            // Every cell draws the same numbers whatever the rates, so at a fixed
            // seed a higher fp_rate only adds false positives.
            let (u, c_tp, c_fp) = (rng.gen::<f64>(), tp.sample(&mut rng), fp.sample(&mut rng));
            let c = if t.present.contains(&k) {
                Some(c_tp)
            } else if u < noise.fp_rate {
                Some(c_fp)
            } else {
                None
            };
            if let Some(c) = c.filter(|&c| c > 0.0) {
                dets.push(DetectionRecord { proposition: label.clone(), raw_confidence: c });
            }
        }
        for &d in &t.distractors {
            let c = tp.sample(&mut rng);
            if c > 0.0 {
                dets.push(DetectionRecord { proposition: opts.distractors[d].clone(), raw_confidence: c });
            }
        }
        frames.push(FrameAnnotation::new(i as u64, i as f64 / opts.fps, dets)?);
    }
    Ok(VideoAnnotation::new(video_id, opts.fps, frames)?)
}

/// A generated video with its ground truth.
#[derive(Clone, Debug)]
pub struct Generated {
    pub video: VideoAnnotation,
    pub truth: Vec<GroundTruthInterval>,
    /// Per frame, bit `k` set when template proposition `k` is truly present.
    pub presence: Vec<u32>,
}

/// Labelled detections of the template propositions, for fitting a calibration:
/// a detection is correct when its proposition is truly present.
pub fn calibration_samples(g: &Generated, ts: &TemplateSpec) -> Vec<CalibrationSample<f64>> {
    let mut out = Vec::new();
    for (frame, &mask) in g.video.frames.iter().zip(&g.presence) {
        for (k, label) in ts.propositions.iter().enumerate() {
            if let Some(d) = frame.detections.iter().find(|d| &d.proposition == label) {
                out.push(CalibrationSample::new(d.raw_confidence, mask >> k & 1 == 1).expect("confidence in [0,1]"));
            }
        }
    }
    out
}

fn presence_masks(truth: &[TruthFrame]) -> Vec<u32> {
    truth.iter().map(|t| t.present.iter().fold(0, |m, &k| m | 1 << k)).collect()
}

/// Builds one video realizing `ts` `opts.instances` times (or once across the
/// whole video in sweep mode). Ground truth is computed on the noise-free
/// timeline, so it does not depend on `noise`.
pub fn generate_synthetic(
    video_id: &str,
    ts: &TemplateSpec,
    length: usize,
    noise: &NoiseModel,
    placement_seed: u64,
    opts: &GenOptions,
) -> Result<Generated, DatagenError> {
    noise.validate()?;
    opts.validate()?;
    if length == 0 {
        return Err(DatagenError::Placement { instances: opts.instances.max(1), min_window: 1, length });
    }
    if opts.distractors.iter().any(|d| ts.propositions.contains(d)) {
        return Err(DatagenError::Options("distractor vocabulary overlaps the template propositions".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(placement_seed);
    let (truth, windows) = truth_timeline(ts.template, length, opts, &mut rng)?;
    let spec = ts.spec();
    let spec_id = spec.to_string();

    let intervals = if length > ORACLE_MAX_FRAMES {
        if !opts.sweep {
            return Err(SearchError::OracleTooLong { frames: length, limit: ORACLE_MAX_FRAMES }.into());
        }
        // A single window spanning the video; its extent is known by construction.
        windows
            .iter()
            .map(|&(s, w)| GroundTruthInterval::new(s as u64, (s + w - 1) as u64, spec_id.clone()))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        let clean = render(video_id, ts, &truth, opts, &NoiseModel::noise_free(0))?;
        oracle_intervals(&clean, &spec, &SearchConfig::<f64>::default())?
            .into_iter()
            .map(|iv| GroundTruthInterval::new(iv.start_frame, iv.end_frame, spec_id.clone()))
            .collect::<Result<Vec<_>, _>>()?
    };
    let video = render(video_id, ts, &truth, opts, noise)?;
    Ok(Generated { video, truth: intervals, presence: presence_masks(&truth) })
}

/// Builds a video from per-frame ground-truth labels and computes its intervals.
pub fn annotate_real<S: AsRef<str>>(
    video_id: &str,
    labels: &[Vec<S>],
    vocabulary: &BTreeSet<String>,
    ts: &TemplateSpec,
    fps: f64,
) -> Result<Generated, DatagenError> {
    if !ts.template.is_until() {
        return Err(DatagenError::RealStreamTemplate(ts.template));
    }
    let video = ingest_ground_truth_labels(labels, vocabulary, video_id, fps)?;
    let presence = labels
        .iter()
        .map(|frame| {
            ts.propositions
                .iter()
                .enumerate()
                .filter(|(_, p)| frame.iter().any(|l| l.as_ref() == p.as_str()))
                .fold(0u32, |m, (k, _)| m | 1 << k)
        })
        .collect();
    let spec = ts.spec();
    let spec_id = spec.to_string();
    let truth = oracle_intervals(&video, &spec, &SearchConfig::<f64>::default())?
        .into_iter()
        .map(|iv| GroundTruthInterval::new(iv.start_frame, iv.end_frame, spec_id.clone()))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(Generated { video, truth, presence })
}

/// One cell of the benchmark mix: a template, an image source and a frame budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteCell {
    pub template: TlvTemplate,
    pub source: String,
    pub frames: usize,
}

/// The benchmark template mix at 1/100 of its frame counts.
pub fn default_cells() -> Vec<SuiteCell> {
    use TlvTemplate::*;
    let cell = |template, source: &str, frames| SuiteCell { template, source: source.into(), frames };
    vec![
        cell(EventuallyA, "coco", 157),
        cell(EventuallyA, "imagenet", 157),
        cell(AlwaysA, "coco", 157),
        cell(AlwaysA, "imagenet", 157),
        cell(AAndB, "coco", 315),
        cell(AUntilB, "coco", 157),
        cell(AUntilB, "imagenet", 157),
        cell(AAndBUntilC, "coco", 315),
    ]
}

pub fn vocabulary(source: &str) -> &'static [&'static str] {
    match source {
        "imagenet" => &["dog", "cat", "car", "airplane", "ship", "horse", "truck"],
        _ => &["person", "car", "dog", "bus", "bottle", "cup", "truck", "horse"],
    }
}

fn distractors_for(source: &str) -> Vec<String> {
    let d = if source == "imagenet" { IMAGENET_DISTRACTORS } else { COCO_DISTRACTORS };
    d.iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteOptions {
    pub cells: Vec<SuiteCell>,
    pub seed: u64,
    pub noise: NoiseModel,
    /// Longest video; a cell with more frames is split.
    pub max_video_frames: usize,
    pub instances: usize,
    pub min_window: usize,
    pub max_window: usize,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        SuiteOptions {
            cells: default_cells(),
            seed: 0,
            noise: NoiseModel::default(),
            max_video_frames: 160,
            instances: 3,
            min_window: 2,
            max_window: 24,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub video_id: String,
    pub template: TlvTemplate,
    pub source: String,
    pub propositions: Vec<String>,
    pub spec: String,
    pub frames: usize,
    pub placement_seed: u64,
    pub noise_seed: u64,
}

#[derive(Clone, Debug)]
pub struct SuiteVideo {
    pub entry: SuiteEntry,
    pub data: Generated,
}

fn split_seed(seed: u64, index: u64, stream: u64) -> u64 {
    // SplitMix64 over (seed, index, stream) gives independent per-video streams.
    let mut z = seed ^ index.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ stream.wrapping_mul(0xD1B5_4A32_D192_ED03);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Generates every video of a suite in memory.
pub fn generate_suite(opts: &SuiteOptions) -> Result<Vec<SuiteVideo>, DatagenError> {
    if opts.max_video_frames == 0 {
        return Err(DatagenError::Options("max_video_frames must be at least 1".into()));
    }
    let mut out = Vec::new();
    let mut index = 0u64;
    for (ci, cell) in opts.cells.iter().enumerate() {
        let pieces = cell.frames.div_ceil(opts.max_video_frames);
        let mut remaining = cell.frames;
        for piece in 0..pieces {
            let frames = remaining.div_ceil(pieces - piece);
            remaining -= frames;
            let placement_seed = split_seed(opts.seed, index, 0);
            let noise_seed = split_seed(opts.seed, index, 1);
            index += 1;

            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(opts.seed, index, 2));
            let vocab = vocabulary(&cell.source);
            let propositions: Vec<String> =
                vocab.choose_multiple(&mut rng, cell.template.arity()).map(|s| s.to_string()).collect();
            let ts = TemplateSpec::new(cell.template, propositions)?;

            let gen_opts = GenOptions {
                instances: opts.instances,
                min_window: opts.min_window,
                max_window: opts.max_window,
                distractors: distractors_for(&cell.source),
                ..GenOptions::default()
            };
            // Short videos hold fewer instances rather than failing.
            let lo = gen_opts.min_window.max(cell.template.min_window());
            let fit = (frames + 1) / (lo + 1);
            let gen_opts = GenOptions { instances: gen_opts.instances.min(fit.max(1)), ..gen_opts };

            let video_id = format!("{}_{}_{ci:02}_{piece:02}", cell.template, cell.source);
            let noise = NoiseModel { seed: noise_seed, ..opts.noise };
            let data = generate_synthetic(&video_id, &ts, frames, &noise, placement_seed, &gen_opts)?;
            let entry = SuiteEntry {
                video_id,
                template: cell.template,
                source: cell.source.clone(),
                spec: ts.spec().to_string(),
                propositions: ts.propositions,
                frames,
                placement_seed,
                noise_seed,
            };
            out.push(SuiteVideo { entry, data });
        }
    }
    Ok(out)
}

/// Manifest document describing a written suite.
pub fn manifest_json(opts: &SuiteOptions, videos: &[SuiteVideo]) -> Value {
    let entries: Vec<Value> = videos
        .iter()
        .map(|v| {
            let mut e = serde_json::to_value(&v.entry).expect("serializable");
            e["video_file"] = json!(format!("{}.jsonl", v.entry.video_id));
            e["ground_truth_file"] = json!(format!("{}.truth.json", v.entry.video_id));
            e
        })
        .collect();
    json!({ "v": 1, "seed": opts.seed, "noise": opts.noise, "videos": entries })
}

/// Writes videos, ground truth and `manifest.json` into `dir`.
pub fn write_suite(dir: &Path, opts: &SuiteOptions, videos: &[SuiteVideo]) -> Result<Value, DatagenError> {
    std::fs::create_dir_all(dir)?;
    for v in videos {
        let mut w = BufWriter::new(File::create(dir.join(format!("{}.jsonl", v.entry.video_id)))?);
        write_annotations(&v.data.video, &mut w)?;
        w.flush()?;
        let mut w = BufWriter::new(File::create(dir.join(format!("{}.truth.json", v.entry.video_id)))?);
        write_ground_truth(&v.data.truth, &mut w)?;
        w.flush()?;
    }
    let manifest = manifest_json(opts, videos);
    let mut w = BufWriter::new(File::create(dir.join("manifest.json"))?);
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(std::io::Error::from)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::search::search;

    fn spans(t: &[GroundTruthInterval]) -> Vec<(u64, u64)> {
        t.iter().map(|g| (g.start_frame, g.end_frame)).collect()
    }

    #[test]
    fn until_template_noise_free() {
        let ts = TemplateSpec::with_defaults(TlvTemplate::AUntilB);
        let g = generate_synthetic("v", &ts, 12, &NoiseModel::noise_free(0), 3, &GenOptions::default()).unwrap();
        assert_eq!(g.truth.len(), 1);
        let (s, e) = (g.truth[0].start_frame as usize, g.truth[0].end_frame as usize);
        for f in &g.video.frames[s..e] {
            assert_eq!(f.confidence("a"), 1.0);
        }
        assert_eq!(g.video.frames[e].confidence("b"), 1.0);
        let found = search(&g.video, &ts.spec(), &SearchConfig::<f64>::default()).unwrap();
        assert_eq!(found.iter().map(|i| (i.start_frame, i.end_frame)).collect::<Vec<_>>(), spans(&g.truth));
    }

    #[test]
    fn eventually_on_one_frame() {
        let ts = TemplateSpec::with_defaults(TlvTemplate::EventuallyA);
        let g = generate_synthetic("v", &ts, 1, &NoiseModel::noise_free(0), 0, &GenOptions::default()).unwrap();
        assert_eq!(spans(&g.truth), vec![(0, 0)]);
    }

    #[test]
    fn truth_is_independent_of_noise() {
        let ts = TemplateSpec::with_defaults(TlvTemplate::AAndBUntilC);
        let opts = GenOptions { instances: 3, ..GenOptions::default() };
        let clean = generate_synthetic("v", &ts, 120, &NoiseModel::noise_free(1), 9, &opts).unwrap();
        let noisy = NoiseModel { fp_rate: 0.3, seed: 4, ..NoiseModel::default() };
        let dirty = generate_synthetic("v", &ts, 120, &noisy, 9, &opts).unwrap();
        assert_eq!(clean.truth, dirty.truth);
        assert_eq!(clean.truth.len(), 3);
        assert_ne!(clean.video, dirty.video);
        assert_eq!(clean.presence, dirty.presence);
        let samples = calibration_samples(&dirty, &ts);
        assert!(samples.iter().any(|s| s.is_correct) && samples.iter().any(|s| !s.is_correct));
        assert!(calibration_samples(&clean, &ts).iter().all(|s| s.is_correct && s.raw_confidence == 1.0));
    }

    #[test]
    fn placement_errors() {
        let ts = TemplateSpec::with_defaults(TlvTemplate::AUntilB);
        let err = generate_synthetic("v", &ts, 1, &NoiseModel::noise_free(0), 0, &GenOptions::default()).unwrap_err();
        assert!(matches!(err, DatagenError::Placement { .. }));
        let opts = GenOptions { instances: 3, ..GenOptions::default() };
        assert!(generate_synthetic("v", &ts, 7, &NoiseModel::noise_free(0), 0, &opts).is_err());
        assert!(generate_synthetic("v", &ts, 8, &NoiseModel::noise_free(0), 0, &opts).is_ok());
    }

    #[test]
    fn sweep_mode_spans_the_video() {
        let ts = TemplateSpec::with_defaults(TlvTemplate::AUntilB);
        let opts = GenOptions { sweep: true, ..GenOptions::default() };
        for len in [2, 100, 12_000] {
            let g = generate_synthetic("v", &ts, len, &NoiseModel::noise_free(0), 0, &opts).unwrap();
            assert_eq!(spans(&g.truth), vec![(0, len as u64 - 1)]);
        }
    }

    #[test]
    fn real_streams_accept_only_until_templates() {
        let vocab: BTreeSet<String> = ["pedestrian", "vehicle"].iter().map(|s| s.to_string()).collect();
        let labels = vec![vec!["pedestrian"], vec!["pedestrian"], vec!["vehicle"], vec![]];
        let ts = TemplateSpec::new(TlvTemplate::AUntilB, vec!["pedestrian".into(), "vehicle".into()]).unwrap();
        let g = annotate_real("w", &labels, &vocab, &ts, 10.0).unwrap();
        assert_eq!(spans(&g.truth), vec![(0, 2)]);

        let always = TemplateSpec::new(TlvTemplate::AlwaysA, vec!["pedestrian".into()]).unwrap();
        let err = annotate_real("w", &labels, &vocab, &always, 10.0).unwrap_err();
        assert!(err.to_string().contains("only until-templates"));

        let empty: Vec<Vec<String>> = Vec::new();
        let g = annotate_real("w", &empty, &vocab, &ts, 10.0).unwrap();
        assert!(g.video.frames.is_empty() && g.truth.is_empty());
    }

    #[test]
    fn suite_mix_and_determinism() {
        let opts = SuiteOptions::default();
        let a = generate_suite(&opts).unwrap();
        let b = generate_suite(&opts).unwrap();
        let frames: usize = a.iter().map(|v| v.entry.frames).sum();
        assert_eq!(frames, 157 * 6 + 315 * 2);
        assert_eq!(manifest_json(&opts, &a), manifest_json(&opts, &b));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.data.video, y.data.video);
        }
        let empty = SuiteOptions { cells: vec![], ..SuiteOptions::default() };
        assert!(generate_suite(&empty).unwrap().is_empty());
    }

    #[test]
    fn template_ids_round_trip() {
        for t in TlvTemplate::ALL {
            assert_eq!(t.id().parse::<TlvTemplate>().unwrap(), t);
            assert_eq!(serde_json::to_value(t).unwrap(), t.id());
        }
        assert!("sometimes_a".parse::<TlvTemplate>().is_err());
    }
}
