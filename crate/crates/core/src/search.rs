//! Streaming scene search: validate, append, check, emit, reset.

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::annotation::{FrameAnnotation, VideoAnnotation};
use crate::automaton::{AutomatonError, ProbabilisticAutomaton, DEFAULT_PROPOSITION_CAP, DEFAULT_PRUNE_EPSILON};
use crate::calibration::Calibrator;
use crate::checker::{
    compile_formula, threshold_of, CheckError, FormulaAutomaton, ProductTracker, WordEvaluator, DEFAULT_LAMBDA,
};
use crate::scalar::Scalar;
use crate::spec_lang::{positive_propositions, Comparator, Proposition, PropositionSet, Spec};
use crate::validation::{any_relevant, psi_eval, FrameValidator, ValidationConfig, VcMode};

pub const ORACLE_MAX_FRAMES: usize = 10_000;

#[derive(Debug, Error)]
pub enum SearchError {
    #[error("invalid search configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
    #[error(transparent)]
    Check(#[from] CheckError),
    #[error("oracle scan limited to {limit} frames, video has {frames}")]
    OracleTooLong { frames: usize, limit: usize },
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InvalidFramePolicy {
    /// Ignore the frame; the automaton persists.
    #[default]
    Skip,
    /// Clear the automaton without emitting.
    Reset,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default, bound(deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SearchConfig<T> {
    pub lambda: f64,
    pub prune_epsilon: f64,
    pub max_automaton_layers: usize,
    pub max_propositions: usize,
    pub invalid_frame_policy: InvalidFramePolicy,
    /// Reset as soon as no extension can reach the threshold any more.
    pub dead_state_reset: bool,
    /// Coalesce emissions whose frame ranges touch.
    pub merge_adjacent: bool,
    pub calibration: Calibrator<T>,
    pub validation: ValidationConfig,
}

impl<T: Scalar> Default for SearchConfig<T> {
    fn default() -> Self {
        SearchConfig {
            lambda: DEFAULT_LAMBDA,
            prune_epsilon: DEFAULT_PRUNE_EPSILON,
            max_automaton_layers: 4096,
            max_propositions: DEFAULT_PROPOSITION_CAP,
            invalid_frame_policy: InvalidFramePolicy::Skip,
            dead_state_reset: true,
            merge_adjacent: true,
            calibration: Calibrator::default(),
            validation: ValidationConfig::default(),
        }
    }
}

impl<T: Scalar> SearchConfig<T> {
    pub fn validate(&self) -> Result<(), SearchError> {
        let bad = |m: String| Err(SearchError::Config(m));
        if !(0.0..=1.0).contains(&self.lambda) {
            return bad(format!("lambda must lie in [0,1], got {}", self.lambda));
        }
        if !(0.0..1.0).contains(&self.prune_epsilon) {
            return bad(format!("prune_epsilon must lie in [0,1), got {}", self.prune_epsilon));
        }
        if self.max_automaton_layers == 0 {
            return bad("max_automaton_layers must be at least 1".into());
        }
        self.validation.validate().map_err(SearchError::Config)?;
        self.calibration.validate().map_err(|e| SearchError::Config(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneInterval {
    #[serde(rename = "start")]
    pub start_frame: u64,
    #[serde(rename = "end")]
    pub end_frame: u64,
    pub probability: f64,
    #[serde(skip)]
    pub spec_id: String,
}

fn collect(out: &mut Vec<SceneInterval>, iv: SceneInterval, merge: bool) {
    if let Some(last) = out.last_mut() {
        if merge && last.end_frame + 1 == iv.start_frame {
            last.end_frame = iv.end_frame;
            last.probability = last.probability.min(iv.probability);
            return;
        }
    }
    out.push(iv);
}

/// A spec compiled once for repeated searches.
#[derive(Clone, Debug)]
pub struct CompiledQuery {
    spec: Spec,
    spec_id: String,
    props: PropositionSet,
    fa: FormulaAutomaton,
    comparator: Comparator,
    lambda: f64,
}

impl CompiledQuery {
    pub fn new(spec: &Spec, default_lambda: f64, max_propositions: usize) -> Result<Self, SearchError> {
        let props = spec.propositions();
        if props.len() > max_propositions {
            return Err(AutomatonError::StateExplosion { count: props.len(), cap: max_propositions }.into());
        }
        let fa = compile_formula(spec.surface(), &props)?;
        let (comparator, lambda) = threshold_of(spec, default_lambda);
        Ok(CompiledQuery { spec: spec.clone(), spec_id: spec.to_string(), props, fa, comparator, lambda })
    }

    pub fn spec(&self) -> &Spec {
        &self.spec
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn comparator(&self) -> Comparator {
        self.comparator
    }

    pub fn automaton(&self) -> &FormulaAutomaton {
        &self.fa
    }

    fn is_dead(&self, live: f64) -> bool {
        match self.comparator {
            Comparator::Ge => live < self.lambda,
            Comparator::Gt => live <= self.lambda,
            Comparator::Lt | Comparator::Le => false,
        }
    }
}

/// Frame-at-a-time search over one video.
pub struct SceneSearch<'a, T: Scalar> {
    query: &'a CompiledQuery,
    cfg: &'a SearchConfig<T>,
    validator: FrameValidator<T>,
    automaton: ProbabilisticAutomaton<T>,
    tracker: ProductTracker<'a, T>,
    prune: T,
}

impl<'a, T: Scalar> SceneSearch<'a, T> {
    pub fn new(query: &'a CompiledQuery, cfg: &'a SearchConfig<T>) -> Result<Self, SearchError> {
        cfg.validate()?;
        let validator = FrameValidator::new(query.spec.surface(), cfg.calibration.clone(), cfg.validation);
        debug_assert_eq!(validator.propositions(), &query.props);
        Ok(SceneSearch {
            query,
            cfg,
            validator,
            automaton: ProbabilisticAutomaton::with_cap(query.props.clone(), cfg.max_propositions)?,
            tracker: ProductTracker::new(&query.fa, &query.props),
            prune: T::lit(cfg.prune_epsilon),
        })
    }

    pub fn automaton(&self) -> &ProbabilisticAutomaton<T> {
        &self.automaton
    }

    pub fn reset(&mut self) {
        self.automaton.reset();
        self.tracker.reset();
    }

    /// Feeds one frame; returns an interval when the automaton satisfies the spec.
    pub fn push(&mut self, frame: &FrameAnnotation) -> Result<Option<SceneInterval>, SearchError> {
        let g = self.validator.confidences(frame);
        if !self.validator.validate_with(&g) {
            if self.cfg.invalid_frame_policy == InvalidFramePolicy::Reset {
                self.reset();
            }
            return Ok(None);
        }
        self.append_and_check(frame.frame_index, &g, true)
    }

    fn append_and_check(
        &mut self,
        frame_index: u64,
        g: &[T],
        may_retry: bool,
    ) -> Result<Option<SceneInterval>, SearchError> {
        let layer = self.automaton.append_confidences(frame_index, g, self.prune)?;
        self.tracker.push(layer);
        let p = self.tracker.accepted_mass().as_f64();
        if self.query.comparator.holds(p, self.query.lambda) {
            let start = self.automaton.first_frame().expect("non-empty");
            self.reset();
            return Ok(Some(SceneInterval {
                start_frame: start,
                end_frame: frame_index,
                probability: p,
                spec_id: self.query.spec_id.clone(),
            }));
        }
        if self.cfg.dead_state_reset && self.query.is_dead(self.tracker.live_mass().as_f64()) {
            let retry = may_retry && self.automaton.len() > 1;
            self.reset();
            // The frame that killed the old candidate may still start a new one.
            return if retry { self.append_and_check(frame_index, g, false) } else { Ok(None) };
        }
        if self.automaton.len() >= self.cfg.max_automaton_layers {
            log::info!(
                "automaton reached {} layers at frame {frame_index} without satisfaction; resetting",
                self.automaton.len()
            );
            self.reset();
        }
        Ok(None)
    }
}

pub fn search_compiled<T: Scalar>(
    video: &VideoAnnotation,
    query: &CompiledQuery,
    cfg: &SearchConfig<T>,
) -> Result<Vec<SceneInterval>, SearchError> {
    let mut engine = SceneSearch::new(query, cfg)?;
    let mut out = Vec::new();
    for frame in &video.frames {
        if let Some(iv) = engine.push(frame)? {
            collect(&mut out, iv, cfg.merge_adjacent);
        }
    }
    Ok(out)
}

pub fn search<T: Scalar>(
    video: &VideoAnnotation,
    spec: &Spec,
    cfg: &SearchConfig<T>,
) -> Result<Vec<SceneInterval>, SearchError> {
    let query = CompiledQuery::new(spec, cfg.lambda, cfg.max_propositions)?;
    search_compiled(video, &query, cfg)
}

/// Result document: `{"v":1,"video_id":..,"spec":..,"lambda":..,"intervals":[{"start","end","probability"}]}`.
pub fn result_json(video_id: &str, query: &CompiledQuery, intervals: &[SceneInterval]) -> Value {
    json!({
        "v": 1,
        "video_id": video_id,
        "spec": query.spec.to_string(),
        "lambda": query.lambda,
        "intervals": intervals,
    })
}

/// Reference intervals from thresholded detections.
///
/// Frames are turned into truth assignments (raw confidence at or above the
/// presence threshold), frames the validator would reject are dropped (skip)
/// or split the video (reset), and a left-to-right scan emits, from each
/// start, the shortest window satisfying the formula. Quadratic in length.
pub fn oracle_intervals<T: Scalar>(
    video: &VideoAnnotation,
    spec: &Spec,
    cfg: &SearchConfig<T>,
) -> Result<Vec<SceneInterval>, SearchError> {
    if video.frames.len() > ORACLE_MAX_FRAMES {
        return Err(SearchError::OracleTooLong { frames: video.frames.len(), limit: ORACLE_MAX_FRAMES });
    }
    let props = spec.propositions();
    let surface = spec.surface();
    let positive_mask: u32 =
        positive_propositions(surface).iter().filter_map(|p| props.position(p)).fold(0, |m, i| m | 1 << i);
    let full = (1u32 << props.len()) - 1;
    let relevant_always = any_relevant(surface);
    let threshold = cfg.validation.presence_threshold;

    let letter_of = |f: &FrameAnnotation| -> u32 {
        props.iter().enumerate().filter(|(_, p)| f.confidence(p.as_str()) >= threshold).fold(0, |m, (i, _)| m | 1 << i)
    };
    let valid = |letter: u32| -> bool {
        let gate = match cfg.validation.vc_mode {
            VcMode::Literal => letter == full,
            VcMode::Positive => letter & positive_mask == positive_mask,
            VcMode::Any => positive_mask == 0 || letter & positive_mask != 0,
        };
        let present = |p: &Proposition| props.position(p).is_some_and(|i| letter >> i & 1 == 1);
        gate && (relevant_always || psi_eval(surface, &present))
    };

    let mut segments: Vec<Vec<(u64, u32)>> = vec![Vec::new()];
    for f in &video.frames {
        let letter = letter_of(f);
        if valid(letter) {
            segments.last_mut().expect("non-empty").push((f.frame_index, letter));
        } else if cfg.invalid_frame_policy == InvalidFramePolicy::Reset
            && !segments.last().expect("non-empty").is_empty()
        {
            segments.push(Vec::new());
        }
    }

    let ev = WordEvaluator::new(surface, &props);
    let spec_id = spec.to_string();
    let mut out = Vec::new();
    for seg in &segments {
        let first = shortest_windows(&ev, seg);
        let mut i = 0;
        while i < seg.len() {
            match first[i] {
                Some(j) => {
                    let iv = SceneInterval {
                        start_frame: seg[i].0,
                        end_frame: seg[j].0,
                        probability: 1.0,
                        spec_id: spec_id.clone(),
                    };
                    collect(&mut out, iv, cfg.merge_adjacent);
                    i = j + 1;
                }
                None => i += 1,
            }
        }
    }
    Ok(out)
}

/// `first[i]`: smallest `j >= i` such that the word `seg[i..=j]` satisfies the formula.
fn shortest_windows(ev: &WordEvaluator, seg: &[(u64, u32)]) -> Vec<Option<usize>> {
    use crate::automaton::StateLabel;
    let m = seg.len();
    let mut first = vec![None; m];
    let mut lo = 0;
    let mut cur = vec![false; ev.len()];
    let mut next = vec![false; ev.len()];
    for j in 0..m {
        while lo < m && first[lo].is_some() {
            lo += 1;
        }
        if lo > j {
            continue;
        }
        for k in (lo..=j).rev() {
            ev.step(StateLabel(seg[k].1), (k < j).then_some(next.as_slice()), &mut cur);
            if first[k].is_none() && WordEvaluator::root(&cur) {
                first[k] = Some(j);
            }
            std::mem::swap(&mut cur, &mut next);
        }
    }
    first
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::DetectionRecord;
    use crate::spec_lang::parse_spec;

    fn video(frames: &[&[&str]]) -> VideoAnnotation {
        let frames = frames
            .iter()
            .enumerate()
            .map(|(i, labels)| {
                let dets = labels.iter().map(|l| DetectionRecord { proposition: l.to_string(), raw_confidence: 1.0 });
                FrameAnnotation::new(i as u64, i as f64 / 25.0, dets).unwrap()
            })
            .collect();
        VideoAnnotation::new("v", 25.0, frames).unwrap()
    }

    fn spans(ivs: &[SceneInterval]) -> Vec<(u64, u64)> {
        ivs.iter().map(|i| (i.start_frame, i.end_frame)).collect()
    }

    fn both(v: &VideoAnnotation, spec: &str, cfg: &SearchConfig<f64>) -> (Vec<(u64, u64)>, Vec<(u64, u64)>) {
        let spec = parse_spec(spec).unwrap();
        (spans(&search(v, &spec, cfg).unwrap()), spans(&oracle_intervals(v, &spec, cfg).unwrap()))
    }

    #[test]
    fn clean_until_video() {
        let mut frames: Vec<&[&str]> = vec![&["a"]; 10];
        frames.push(&["b"]);
        frames.extend([&["x"] as &[&str]; 4]);
        let v = video(&frames);
        let spec = parse_spec(r#""a" U "b""#).unwrap();
        let found = search(&v, &spec, &SearchConfig::<f64>::default()).unwrap();
        assert_eq!(spans(&found), vec![(0, 10)]);
        assert_eq!(found[0].probability, 1.0);
        assert_eq!(spans(&oracle_intervals(&v, &spec, &SearchConfig::<f64>::default()).unwrap()), vec![(0, 10)]);
    }

    #[test]
    fn no_detections_means_no_intervals() {
        let v = video(&[&[], &[], &[]]);
        for spec in [r#"F "a""#, r#""a" U "b""#] {
            let (s, o) = both(&v, spec, &SearchConfig::default());
            assert!(s.is_empty() && o.is_empty(), "{spec}: {s:?} {o:?}");
        }
        // A purely negative formula has nothing to gate on and holds everywhere.
        let (s, o) = both(&v, r#"G !"a""#, &SearchConfig::default());
        assert_eq!((s, o), (vec![(0, 2)], vec![(0, 2)]));
    }

    #[test]
    fn eventually_single_frame() {
        let (s, _) = both(&video(&[&["a"]]), r#"F "a""#, &SearchConfig::default());
        assert_eq!(s, vec![(0, 0)]);
    }

    #[test]
    fn always_on_all_a_video_is_one_interval() {
        let v = video(&[&["a"] as &[&str]; 7]);
        let (s, o) = both(&v, r#"G "a""#, &SearchConfig::default());
        assert_eq!(s, vec![(0, 6)]);
        assert_eq!(o, vec![(0, 6)]);
    }

    #[test]
    fn gap_under_reset_policy_moves_the_start() {
        let mut frames: Vec<&[&str]> = vec![&["a"]; 8];
        frames[5] = &["x"];
        frames.push(&["b"]);
        let v = video(&frames);
        let cfg = SearchConfig::<f64> { invalid_frame_policy: InvalidFramePolicy::Reset, ..SearchConfig::default() };
        let (s, o) = both(&v, r#""a" U "b""#, &cfg);
        assert_eq!(o, vec![(6, 8)]);
        assert_eq!(s, o);
        // Skipping bridges the gap instead.
        let (s, o) = both(&v, r#""a" U "b""#, &SearchConfig::default());
        assert_eq!(o, vec![(0, 8)]);
        assert_eq!(s, o);
    }

    #[test]
    fn dead_candidate_is_retried_from_the_killing_frame() {
        // {a,b} {a,b} {a} {a,b} {c}: the third frame breaks the first run but
        // cannot start a new one; the fourth starts the satisfied window.
        let v = video(&[&["a", "b"], &["a", "b"], &["a"], &["a", "b"], &["c"]]);
        let (s, o) = both(&v, r#"("a" & "b") U "c""#, &SearchConfig::default());
        assert_eq!(o, vec![(3, 4)]);
        assert_eq!(s, o);
        let v = video(&[&["a", "b"], &["b"], &["c"]]);
        let (s, o) = both(&v, r#"("a" & "b") U "c""#, &SearchConfig::default());
        assert_eq!((s.clone(), o.clone()), (vec![(2, 2)], vec![(2, 2)]));
    }

    #[test]
    fn layer_cap_resets_without_emission() {
        let mut frames: Vec<&[&str]> = vec![&["a"]; 6];
        frames.push(&["b"]);
        let v = video(&frames);
        let spec = parse_spec(r#""a" U "b""#).unwrap();
        let cfg = SearchConfig::<f64> { max_automaton_layers: 4, ..SearchConfig::default() };
        assert_eq!(spans(&search(&v, &spec, &cfg).unwrap()), vec![(4, 6)]);
    }

    #[test]
    fn probabilistic_threshold_and_result_json() {
        let frames = (0..3)
            .map(|i| {
                let c = if i < 2 { 0.8 } else { 0.0 };
                let dets = [
                    DetectionRecord { proposition: "a".into(), raw_confidence: c },
                    DetectionRecord { proposition: "b".into(), raw_confidence: if i == 2 { 0.97 } else { 0.0 } },
                ];
                FrameAnnotation::new(i, i as f64 / 25.0, dets).unwrap()
            })
            .collect();
        let v = VideoAnnotation::new("clip", 25.0, frames).unwrap();
        // g(0.8) = 1/(1+e^-3) with the default calibration; two such frames then a certain b.
        let z = 1.0 / (1.0 + (-3.0f64).exp());
        let spec = parse_spec(r#"P>=0.8 ["a" U "b"]"#).unwrap();
        let cfg = SearchConfig::<f64>::default();
        let found = search(&v, &spec, &cfg).unwrap();
        assert_eq!(spans(&found), vec![(0, 2)]);
        assert!((found[0].probability - z * z).abs() < 1e-12);
        let q = CompiledQuery::new(&spec, 0.5, 10).unwrap();
        let doc = result_json("clip", &q, &found);
        assert_eq!(doc["v"], 1);
        assert_eq!(doc["lambda"], 0.8);
        assert_eq!(doc["intervals"][0]["start"], 0);

        let strict = parse_spec(r#"P>=0.99 ["a" U "b"]"#).unwrap();
        // Too weak from frame 0; frame 2 alone is certain (0.97 is above gamma_tp).
        assert_eq!(spans(&search(&v, &strict, &cfg).unwrap()), vec![(2, 2)]);
    }

    #[test]
    fn too_many_propositions() {
        let labels: Vec<String> = (0..11).map(|i| format!("\"p{i}\"")).collect();
        let spec = parse_spec(&labels.join(" & ")).unwrap();
        let err = search(&video(&[&[]]), &spec, &SearchConfig::<f64>::default()).unwrap_err();
        assert!(err.to_string().contains("state explosion"));
    }

    #[test]
    fn config_validation() {
        let cfg = SearchConfig::<f64> { max_automaton_layers: 0, ..SearchConfig::default() };
        let spec = parse_spec(r#"F "a""#).unwrap();
        assert!(matches!(search(&video(&[&[]]), &spec, &cfg), Err(SearchError::Config(_))));
    }
}
