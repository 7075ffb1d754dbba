mod config;

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};

use tlscene::annotation::{
    read_annotations, read_ground_truth, read_label_stream, AnnotationError, ReadOptions, VideoAnnotation,
};
use tlscene::automaton::{AutomatonError, ProbabilisticAutomaton};
use tlscene::calibration::{fit_calibration, read_samples_csv, write_samples_csv, CalibrationError, CalibrationFile};
use tlscene::checker::{check, CheckError};
use tlscene::datagen::{
    annotate_real, calibration_samples, generate_suite, generate_synthetic, write_suite, ConfidenceDist, DatagenError,
    GenOptions, NoiseModel, SuiteEntry, SuiteOptions, SuiteVideo, TemplateSpec, TlvTemplate,
};
use tlscene::eval::{
    frame_counts, length_sweep, sweep_csv, sweep_json, EvalError, EvalReport, SweepOptions, VideoScore,
};
use tlscene::search::{
    oracle_intervals, result_json, search_compiled, CompiledQuery, InvalidFramePolicy, SceneInterval, SearchError,
};
use tlscene::spec_lang::{parse_spec, Spec, SpecError};
use tlscene::validation::{FrameValidator, VcMode};

use config::EngineConfig;

/// An error with its exit code: 2 spec, 3 data, 4 internal.
#[derive(Debug)]
pub struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
}

impl Failure {
    fn new(code: u8, kind: &'static str, message: impl Into<String>) -> Self {
        Failure { code, kind, message: message.into() }
    }

    pub fn spec(message: impl Into<String>) -> Self {
        Failure::new(2, "spec", message)
    }

    pub fn data(message: impl Into<String>) -> Self {
        Failure::new(3, "data", message)
    }

    pub fn internal(message: impl Into<String>) -> Self {
        Failure::new(4, "internal", message)
    }
}

impl From<SpecError> for Failure {
    fn from(e: SpecError) -> Self {
        Failure::spec(e.to_string())
    }
}

impl From<AnnotationError> for Failure {
    fn from(e: AnnotationError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<CalibrationError> for Failure {
    fn from(e: CalibrationError) -> Self {
        Failure::data(e.to_string())
    }
}

impl From<AutomatonError> for Failure {
    fn from(e: AutomatonError) -> Self {
        match e {
            AutomatonError::StateExplosion { .. } => Failure::spec(e.to_string()),
            AutomatonError::Format(_) | AutomatonError::NotIncreasing { .. } => Failure::data(e.to_string()),
            _ => Failure::internal(e.to_string()),
        }
    }
}

impl From<CheckError> for Failure {
    fn from(e: CheckError) -> Self {
        match e {
            CheckError::Automaton(a) => a.into(),
            CheckError::StateBlowUp { .. } | CheckError::TooLarge(_) => Failure::spec(e.to_string()),
            CheckError::EmptyAutomaton | CheckError::EmptyWord => Failure::data(e.to_string()),
            CheckError::PathOverflow { .. } => Failure::internal(e.to_string()),
        }
    }
}

impl From<SearchError> for Failure {
    fn from(e: SearchError) -> Self {
        match e {
            SearchError::Automaton(a) => a.into(),
            SearchError::Check(c) => c.into(),
            SearchError::Config(_) | SearchError::OracleTooLong { .. } => Failure::data(e.to_string()),
        }
    }
}

impl From<DatagenError> for Failure {
    fn from(e: DatagenError) -> Self {
        match e {
            DatagenError::Search(s) => s.into(),
            DatagenError::Io(_) => Failure::internal(e.to_string()),
            _ => Failure::data(e.to_string()),
        }
    }
}

impl From<EvalError> for Failure {
    fn from(e: EvalError) -> Self {
        match e {
            EvalError::Datagen(d) => d.into(),
            EvalError::Search(s) => s.into(),
            _ => Failure::data(e.to_string()),
        }
    }
}

type Res<T> = Result<T, Failure>;

#[derive(Parser)]
#[command(name = "tlscene", version, about = "Temporal-logic scene search over per-frame detections")]
struct Cli {
    /// Increase log verbosity on stderr (repeatable).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Find the frame intervals of annotated videos that satisfy a specification.
    Search(SearchArgs),
    /// Fit calibration parameters from labelled detector confidences.
    Calibrate(CalibrateArgs),
    /// Generate synthetic annotated videos with ground truth.
    Gen(GenArgs),
    /// Score predicted intervals against ground truth, frame by frame.
    Eval(EvalArgs),
    /// Compute the probability that an automaton satisfies a specification.
    Check(CheckArgs),
    /// Build the automaton of the valid frames of an annotated video.
    Automaton(AutomatonArgs),
    /// F1 and per-frame latency as video length grows.
    Sweep(SweepArgs),
}

#[derive(Args, Clone)]
struct SpecArgs {
    /// Specification text.
    #[arg(long, conflicts_with = "spec_file", required_unless_present = "spec_file")]
    spec: Option<String>,
    /// File holding the specification.
    #[arg(long)]
    spec_file: Option<PathBuf>,
}

impl SpecArgs {
    fn load(&self) -> Res<Spec> {
        let text = match (&self.spec, &self.spec_file) {
            (Some(s), _) => s.clone(),
            (None, Some(p)) => {
                std::fs::read_to_string(p).map_err(|e| Failure::spec(format!("{}: {e}", p.display())))?
            }
            (None, None) => return Err(Failure::spec("no specification given")),
        };
        Ok(parse_spec(text.trim())?)
    }
}

#[derive(Args, Clone)]
struct EngineArgs {
    /// Engine configuration (TOML or JSON).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Satisfaction threshold for specs without a probability quantifier.
    #[arg(long)]
    lambda: Option<f64>,
    /// Calibration file applied to every proposition.
    #[arg(long)]
    calibration: Option<PathBuf>,
    /// What to do with a frame that fails validation: skip or reset
    #[arg(long, value_parser = parse_policy)]
    invalid_frame_policy: Option<InvalidFramePolicy>,
    /// Detection gate: literal, positive, or any
    #[arg(long, value_parser = parse_vc_mode)]
    vc_mode: Option<VcMode>,
    /// Calibrated confidence at which a proposition counts as present
    #[arg(long)]
    presence_threshold: Option<f64>,
    /// Drop automaton states whose mass falls below this
    #[arg(long)]
    prune_epsilon: Option<f64>,
    /// Reset a candidate that grows past this many frames
    #[arg(long)]
    max_automaton_layers: Option<usize>,
    /// Largest number of distinct propositions a spec may use
    #[arg(long)]
    max_propositions: Option<usize>,
    /// Keep abutting intervals separate.
    #[arg(long)]
    no_merge: bool,
    /// Keep candidates alive even when they can no longer reach the threshold.
    #[arg(long)]
    no_dead_reset: bool,
    /// Frame rate of annotation files.
    #[arg(long)]
    fps: Option<f64>,
}

fn parse_policy(s: &str) -> Result<InvalidFramePolicy, String> {
    match s {
        "skip" => Ok(InvalidFramePolicy::Skip),
        "reset" => Ok(InvalidFramePolicy::Reset),
        _ => Err(format!("expected skip or reset, got '{s}'")),
    }
}

fn parse_vc_mode(s: &str) -> Result<VcMode, String> {
    match s {
        "literal" => Ok(VcMode::Literal),
        "positive" => Ok(VcMode::Positive),
        "any" => Ok(VcMode::Any),
        _ => Err(format!("expected literal, positive or any, got '{s}'")),
    }
}

impl EngineArgs {
    fn load(&self) -> Res<EngineConfig> {
        let mut cfg = match &self.config {
            Some(p) => EngineConfig::load(p)?,
            None => EngineConfig::default(),
        };
        if let Some(v) = self.lambda {
            cfg.lambda = v;
        }
        if let Some(v) = &self.calibration {
            cfg.calibration_file = Some(v.clone());
        }
        if let Some(v) = self.invalid_frame_policy {
            cfg.invalid_frame_policy = v;
        }
        if let Some(v) = self.vc_mode {
            cfg.validation.vc_mode = v;
        }
        if let Some(v) = self.presence_threshold {
            cfg.validation.presence_threshold = v;
        }
        if let Some(v) = self.prune_epsilon {
            cfg.prune_epsilon = v;
        }
        if let Some(v) = self.max_automaton_layers {
            cfg.max_automaton_layers = v;
        }
        if let Some(v) = self.max_propositions {
            cfg.max_propositions = v;
        }
        if self.no_merge {
            cfg.merge_adjacent = false;
        }
        if self.no_dead_reset {
            cfg.dead_state_reset = false;
        }
        if let Some(v) = self.fps {
            cfg.fps = Some(v);
        }
        Ok(cfg)
    }
}

#[derive(Args)]
struct SearchArgs {
    /// Annotation JSONL files, one video each.
    #[arg(long = "annotations", required = true, num_args = 1..)]
    annotations: Vec<PathBuf>,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// Report the thresholded reference intervals instead of searching.
    #[arg(long)]
    oracle: bool,
    /// Worker threads across videos.
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CalibrateArgs {
    /// CSV of `raw_confidence,is_correct` rows.
    #[arg(long)]
    samples: PathBuf,
    /// Highest tolerated fraction of correct detections below `gamma_fp`.
    #[arg(long, default_value_t = 0.05)]
    fp_rate: f64,
    /// Lowest required precision at or above `gamma_tp`.
    #[arg(long, default_value_t = 0.95)]
    tp_rate: f64,
    #[arg(long, default_value = "detector")]
    model_id: String,
    /// Also write the result here.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct NoiseArgs {
    /// Perfect detections: present at confidence 1, no false positives.
    #[arg(long, conflicts_with_all = ["tp_alpha", "tp_beta", "fp_rate", "fp_alpha", "fp_beta"])]
    noise_free: bool,
    #[arg(long, default_value_t = 8.0)]
    tp_alpha: f64,
    #[arg(long, default_value_t = 2.0)]
    tp_beta: f64,
    #[arg(long, default_value_t = 0.05)]
    fp_rate: f64,
    #[arg(long, default_value_t = 2.0)]
    fp_alpha: f64,
    #[arg(long, default_value_t = 8.0)]
    fp_beta: f64,
    #[arg(long, default_value_t = 0)]
    noise_seed: u64,
}

impl NoiseArgs {
    fn model(&self) -> NoiseModel {
        if self.noise_free {
            return NoiseModel::noise_free(self.noise_seed);
        }
        NoiseModel {
            tp_confidence: ConfidenceDist::Beta { alpha: self.tp_alpha, beta: self.tp_beta },
            fp_rate: self.fp_rate,
            fp_confidence: ConfidenceDist::Beta { alpha: self.fp_alpha, beta: self.fp_beta },
            seed: self.noise_seed,
        }
    }
}

#[derive(Args)]
struct GenArgs {
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    /// Generate the full benchmark mix instead of a single video.
    #[arg(long, conflicts_with_all = ["template", "labels"])]
    suite: bool,
    /// eventually_a, always_a, a_and_b, a_until_b or a_and_b_until_c.
    #[arg(long, required_unless_present_any = ["suite", "labels"])]
    template: Option<TlvTemplate>,
    /// Comma-separated proposition labels for the template.
    #[arg(long, value_delimiter = ',')]
    props: Option<Vec<String>>,
    #[arg(long, default_value_t = 157)]
    length: usize,
    #[arg(long, default_value_t = 1)]
    instances: usize,
    #[arg(long, default_value_t = 1)]
    min_window: usize,
    #[arg(long, default_value_t = 24)]
    max_window: usize,
    /// One window across the whole video.
    #[arg(long)]
    sweep: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Annotate a real label stream (`{"labels": [...]}` per line) instead of generating.
    #[arg(long, requires = "template")]
    labels: Option<PathBuf>,
    #[arg(long, default_value_t = tlscene::annotation::DEFAULT_FPS)]
    fps: f64,
    /// Also write `raw_confidence,is_correct` samples for `calibrate` to this CSV.
    #[arg(long)]
    calibration_samples: Option<PathBuf>,
    #[command(flatten)]
    noise: NoiseArgs,
}

#[derive(Args)]
struct EvalArgs {
    /// Search result JSON.
    #[arg(long, required_unless_present = "manifest")]
    pred: Option<PathBuf>,
    /// Ground-truth interval JSON.
    #[arg(long, required_unless_present = "manifest")]
    truth: Option<PathBuf>,
    /// Video length in frames.
    #[arg(long, conflicts_with = "annotations")]
    length: Option<u64>,
    /// Take the video length from this annotation file.
    #[arg(long)]
    annotations: Option<PathBuf>,
    /// Search every video of a generated suite and score it against its ground truth.
    #[arg(long, conflicts_with_all = ["pred", "truth"])]
    manifest: Option<PathBuf>,
    #[command(flatten)]
    engine: EngineArgs,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
}

#[derive(Args)]
struct CheckArgs {
    /// Automaton JSON, as written by the `automaton` command.
    #[arg(long)]
    automaton: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[arg(long, default_value_t = tlscene::checker::DEFAULT_LAMBDA)]
    lambda: f64,
}

#[derive(Args)]
struct AutomatonArgs {
    #[arg(long)]
    annotations: PathBuf,
    #[command(flatten)]
    spec: SpecArgs,
    #[command(flatten)]
    engine: EngineArgs,
    /// First frame index to include.
    #[arg(long)]
    from: Option<u64>,
    /// Last frame index to include.
    #[arg(long)]
    to: Option<u64>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated, strictly increasing video lengths.
    #[arg(long, value_delimiter = ',', default_values_t = [100usize, 1000, 10000])]
    lengths: Vec<usize>,
    #[arg(long, default_value = "a_until_b")]
    template: TlvTemplate,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    runs: usize,
    /// Omit latency so the output is reproducible.
    #[arg(long)]
    no_timing: bool,
    /// Print CSV instead of JSON.
    #[arg(long)]
    csv: bool,
    #[command(flatten)]
    noise: NoiseArgs,
    #[command(flatten)]
    engine: EngineArgs,
}

fn open(path: &Path) -> Res<BufReader<File>> {
    File::open(path).map(BufReader::new).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn read_json(path: &Path) -> Res<Value> {
    serde_json::from_reader(open(path)?).map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn load_video(path: &Path, fps: Option<f64>) -> Res<VideoAnnotation> {
    let video_id = path.file_stem().map_or_else(|| "video".to_string(), |s| s.to_string_lossy().into_owned());
    read_annotations(open(path)?, &ReadOptions { video_id, fps })
        .map_err(|e| Failure::data(format!("{}: {e}", path.display())))
}

fn emit(value: &Value) -> Res<()> {
    let mut out = std::io::stdout().lock();
    serde_json::to_writer_pretty(&mut out, value).map_err(|e| Failure::internal(e.to_string()))?;
    out.write_all(b"\n").map_err(|e| Failure::internal(e.to_string()))
}

fn pool(jobs: usize) -> Res<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new().num_threads(jobs.max(1)).build().map_err(|e| Failure::internal(e.to_string()))
}

fn cmd_search(a: SearchArgs) -> Res<()> {
    let spec = a.spec.load()?;
    let engine = a.engine.load()?;
    let cfg = engine.search_config()?;
    let query = CompiledQuery::new(&spec, cfg.lambda, cfg.max_propositions)?;
    let run = |path: &PathBuf| -> Res<Value> {
        let video = load_video(path, engine.fps)?;
        let found =
            if a.oracle { oracle_intervals(&video, &spec, &cfg)? } else { search_compiled(&video, &query, &cfg)? };
        Ok(result_json(&video.video_id, &query, &found))
    };
    let results: Vec<Value> = pool(a.jobs)?.install(|| a.annotations.par_iter().map(run).collect::<Res<_>>())?;
    if results.len() == 1 {
        emit(&results[0])
    } else {
        emit(&json!({ "v": 1, "results": results }))
    }
}

fn cmd_calibrate(a: CalibrateArgs) -> Res<()> {
    let samples = read_samples_csv(open(&a.samples)?)?;
    let params = fit_calibration(&samples, a.fp_rate, a.tp_rate)?;
    let file = CalibrationFile::from_params(a.model_id, &params);
    if let Some(out) = &a.out {
        let mut w = File::create(out).map_err(|e| Failure::data(format!("{}: {e}", out.display())))?;
        file.write(&mut w)?;
    }
    emit(&serde_json::to_value(&file).map_err(|e| Failure::internal(e.to_string()))?)
}

fn cmd_gen(a: GenArgs) -> Res<()> {
    let noise = a.noise.model();
    if a.suite {
        let opts = SuiteOptions { seed: a.seed, noise, ..SuiteOptions::default() };
        let videos = generate_suite(&opts)?;
        let manifest = write_suite(&a.out, &opts, &videos)?;
        write_samples(a.calibration_samples.as_deref(), &videos)?;
        return emit(&manifest);
    }
    let template = a.template.expect("required by clap");
    let ts = match a.props {
        Some(p) => TemplateSpec::new(template, p)?,
        None => TemplateSpec::with_defaults(template),
    };
    let (video_id, data) = if let Some(labels) = &a.labels {
        let stream = read_label_stream(open(labels)?)?;
        let vocab: BTreeSet<String> = stream.iter().flatten().cloned().chain(ts.propositions.iter().cloned()).collect();
        let id = labels.file_stem().map_or_else(|| "real".to_string(), |s| s.to_string_lossy().into_owned());
        let data = annotate_real(&id, &stream, &vocab, &ts, a.fps)?;
        (id, data)
    } else {
        let opts = GenOptions {
            instances: a.instances,
            min_window: a.min_window,
            max_window: a.max_window,
            sweep: a.sweep,
            fps: a.fps,
            ..GenOptions::default()
        };
        let id = format!("{}_{}", template, a.seed);
        let data = generate_synthetic(&id, &ts, a.length, &noise, a.seed, &opts)?;
        (id, data)
    };
    let entry = SuiteEntry {
        video_id,
        template,
        source: if a.labels.is_some() { "labels".into() } else { "synthetic".into() },
        spec: ts.spec().to_string(),
        frames: data.video.frames.len(),
        propositions: ts.propositions,
        placement_seed: a.seed,
        noise_seed: noise.seed,
    };
    let opts = SuiteOptions { cells: vec![], seed: a.seed, noise, ..SuiteOptions::default() };
    let videos = [SuiteVideo { entry, data }];
    let manifest = write_suite(&a.out, &opts, &videos)?;
    write_samples(a.calibration_samples.as_deref(), &videos)?;
    emit(&manifest)
}

fn write_samples(path: Option<&Path>, videos: &[SuiteVideo]) -> Res<()> {
    let Some(path) = path else { return Ok(()) };
    let mut samples = Vec::new();
    for v in videos {
        let ts = TemplateSpec::new(v.entry.template, v.entry.propositions.clone())?;
        samples.extend(calibration_samples(&v.data, &ts));
    }
    let f = File::create(path).map_err(|e| Failure::internal(format!("{}: {e}", path.display())))?;
    write_samples_csv(&samples, std::io::BufWriter::new(f))?;
    Ok(())
}

fn intervals_of(doc: &Value, path: &Path) -> Res<Vec<SceneInterval>> {
    let list = doc.get("intervals").unwrap_or(doc);
    serde_json::from_value(list.clone())
        .map_err(|e| Failure::data(format!("{}: expected a search result or an interval list: {e}", path.display())))
}

fn cmd_eval(a: EvalArgs) -> Res<()> {
    if let Some(dir) = &a.manifest {
        return eval_manifest(dir, &a);
    }
    let (pred, truth) = (a.pred.as_ref().expect("clap"), a.truth.as_ref().expect("clap"));
    let predicted = intervals_of(&read_json(pred)?, pred)?;
    let truth_iv = read_ground_truth(open(truth)?).map_err(|e| Failure::data(format!("{}: {e}", truth.display())))?;
    let length = match (a.length, &a.annotations) {
        (Some(n), _) => n,
        (None, Some(p)) => load_video(p, None)?.length(),
        (None, None) => return Err(Failure::data("video length unknown: pass --length or --annotations")),
    };
    let id = pred.file_stem().map_or_else(String::new, |s| s.to_string_lossy().into_owned());
    let counts = frame_counts(&predicted, &truth_iv, length)?;
    emit(&EvalReport::aggregate([VideoScore::new(id, counts)]).to_json())
}

fn eval_manifest(dir: &Path, a: &EvalArgs) -> Res<()> {
    let manifest = read_json(&dir.join("manifest.json"))?;
    let entries = manifest["videos"].as_array().ok_or_else(|| Failure::data("manifest has no 'videos' list"))?;
    let engine = a.engine.load()?;
    let cfg = engine.search_config()?;
    let score = |e: &Value| -> Res<VideoScore> {
        let field = |k: &str| e[k].as_str().ok_or_else(|| Failure::data(format!("manifest entry lacks '{k}'")));
        let spec = parse_spec(field("spec")?)?;
        let video = load_video(&dir.join(field("video_file")?), engine.fps)?;
        let truth = read_ground_truth(open(&dir.join(field("ground_truth_file")?))?)?;
        let query = CompiledQuery::new(&spec, cfg.lambda, cfg.max_propositions)?;
        let found = search_compiled(&video, &query, &cfg)?;
        Ok(VideoScore::new(video.video_id.clone(), frame_counts(&found, &truth, video.length())?))
    };
    let scores: Vec<VideoScore> = pool(a.jobs)?.install(|| entries.par_iter().map(score).collect::<Res<_>>())?;
    emit(&EvalReport::aggregate(scores).to_json())
}

fn cmd_check(a: CheckArgs) -> Res<()> {
    let spec = a.spec.load()?;
    let automaton = ProbabilisticAutomaton::<f64>::from_json(&read_json(&a.automaton)?)?;
    emit(&check(&automaton, &spec, a.lambda)?.to_json())
}

fn cmd_automaton(a: AutomatonArgs) -> Res<()> {
    let spec = a.spec.load()?;
    let engine = a.engine.load()?;
    let cfg = engine.search_config()?;
    let video = load_video(&a.annotations, engine.fps)?;
    let validator = FrameValidator::new(spec.surface(), cfg.calibration.clone(), cfg.validation);
    let mut automaton = ProbabilisticAutomaton::with_cap(spec.propositions(), cfg.max_propositions)?;
    let range = a.from.unwrap_or(0)..=a.to.unwrap_or(u64::MAX);
    for frame in video.frames.iter().filter(|f| range.contains(&f.frame_index)) {
        let g = validator.confidences(frame);
        if validator.validate_with(&g) {
            automaton.append_confidences(frame.frame_index, &g, cfg.prune_epsilon)?;
        }
    }
    emit(&automaton.to_json())
}

fn cmd_sweep(a: SweepArgs) -> Res<()> {
    let cfg = a.engine.load()?.search_config()?;
    let opts = SweepOptions {
        template: a.template,
        seed: a.seed,
        runs: a.runs,
        timing: !a.no_timing,
        ..SweepOptions::default()
    };
    let rows = length_sweep(&a.lengths, &a.noise.model(), &cfg, &opts)?;
    if a.csv {
        print!("{}", sweep_csv(&rows));
        Ok(())
    } else {
        emit(&sweep_json(&rows))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    let result = match cli.command {
        Command::Search(a) => cmd_search(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Gen(a) => cmd_gen(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Check(a) => cmd_check(a),
        Command::Automaton(a) => cmd_automaton(a),
        Command::Sweep(a) => cmd_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            let doc = json!({ "v": 1, "error": { "kind": f.kind, "message": f.message } });
            eprintln!("{doc}");
            ExitCode::from(f.code)
        }
    }
}
