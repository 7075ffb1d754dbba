//! Frame validation: a detection gate, a propositional consistency check,
//! a temporal relevance test, and their combination.

use serde::{Deserialize, Serialize};

use crate::annotation::FrameAnnotation;
use crate::calibration::Calibrator;
use crate::scalar::Scalar;
use crate::spec_lang::{positive_propositions, propositions_of, Proposition, PropositionSet, SpecAst};

/// Which propositions the detection gate ranges over.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum VcMode {
    /// Every proposition of the formula must have `g > 0`.
    Literal,
    /// Every positively occurring proposition must have `g > 0`.
    Positive,
    /// At least one positively occurring proposition has `g > 0`.
    #[default]
    Any,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ValidationConfig {
    pub vc_mode: VcMode,
    pub presence_threshold: f64,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig { vc_mode: VcMode::Any, presence_threshold: 0.5 }
    }
}

impl ValidationConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.presence_threshold) {
            return Err(format!("presence_threshold must lie in [0,1], got {}", self.presence_threshold));
        }
        Ok(())
    }
}

/// Calibrated confidence for every proposition in `props`, in order.
pub fn frame_confidences<T: Scalar>(
    frame: &FrameAnnotation,
    props: &PropositionSet,
    calibrator: &Calibrator<T>,
) -> Vec<T> {
    props.iter().map(|p| calibrator.calibrate(p.as_str(), T::lit(frame.confidence(p.as_str())))).collect()
}

fn gate<T: Scalar>(g: &[T], props: &PropositionSet, range: &PropositionSet, mode: VcMode) -> bool {
    let positive = |p: &Proposition| props.position(p).is_some_and(|i| g[i] > T::zero());
    match mode {
        VcMode::Literal => g.iter().all(|&x| x > T::zero()),
        VcMode::Positive => range.iter().all(positive),
        VcMode::Any => range.is_empty() || range.iter().any(positive),
    }
}

pub fn detection_verify<T: Scalar>(
    frame: &FrameAnnotation,
    spec: &SpecAst,
    calibrator: &Calibrator<T>,
    cfg: &ValidationConfig,
) -> bool {
    let props = propositions_of(spec);
    let g = frame_confidences(frame, &props, calibrator);
    gate(&g, &props, &positive_propositions(spec), cfg.vc_mode)
}

/// Propositional reading of a formula under a presence predicate.
pub fn psi_eval(ast: &SpecAst, present: &dyn Fn(&Proposition) -> bool) -> bool {
    match ast {
        SpecAst::True => true,
        SpecAst::False => false,
        SpecAst::Prop(p) => present(p),
        SpecAst::Not(a) => !psi_eval(a, present),
        SpecAst::And(l, r) => psi_eval(l, present) && psi_eval(r, present),
        SpecAst::Or(l, r) => psi_eval(l, present) || psi_eval(r, present),
        SpecAst::Implies(l, r) => !psi_eval(l, present) || psi_eval(r, present),
        // Both sides must hold: a frame carrying the negated right operand is
        // rejected even when the left side is satisfied.
        SpecAst::Until(l, r) => psi_eval(l, present) && psi_eval(r, present),
        SpecAst::Next(a) | SpecAst::Always(a) | SpecAst::Eventually(a) => psi_eval(a, present),
    }
}

/// Propositional reading of the formula on one frame, with presence meaning
/// `g ≥ presence_threshold`.
pub fn psi_satisfied<T: Scalar>(
    frame: &FrameAnnotation,
    spec: &SpecAst,
    calibrator: &Calibrator<T>,
    cfg: &ValidationConfig,
) -> bool {
    let threshold = T::lit(cfg.presence_threshold);
    let present = |p: &Proposition| calibrator.calibrate(p.as_str(), T::lit(frame.confidence(p.as_str()))) >= threshold;
    psi_eval(spec, &present)
}

fn mark_relevant(ast: &SpecAst, under_temporal: bool, prop: &Proposition) -> bool {
    match ast {
        SpecAst::Prop(p) => under_temporal && p == prop,
        _ => {
            let t = under_temporal || ast.is_temporal();
            ast.children().into_iter().any(|c| mark_relevant(c, t, prop))
        }
    }
}

/// True iff `prop` occurs inside an operand of a temporal operator.
pub fn temporal_relevance(prop: &Proposition, spec: &SpecAst) -> bool {
    mark_relevant(spec, false, prop)
}

/// Whether any proposition of the formula is temporally relevant.
pub fn any_relevant(spec: &SpecAst) -> bool {
    propositions_of(spec).iter().any(|p| temporal_relevance(p, spec))
}

pub fn symbolic_verify<T: Scalar>(
    frame: &FrameAnnotation,
    spec: &SpecAst,
    calibrator: &Calibrator<T>,
    cfg: &ValidationConfig,
) -> bool {
    any_relevant(spec) || psi_satisfied(frame, spec, calibrator, cfg)
}

pub fn validate_frame<T: Scalar>(
    frame: &FrameAnnotation,
    spec: &SpecAst,
    calibrator: &Calibrator<T>,
    cfg: &ValidationConfig,
) -> bool {
    detection_verify(frame, spec, calibrator, cfg) && symbolic_verify(frame, spec, calibrator, cfg)
}

/// Validation with the per-spec work (proposition sets, relevance) done once.
#[derive(Clone, Debug)]
pub struct FrameValidator<T> {
    spec: SpecAst,
    props: PropositionSet,
    positive: PropositionSet,
    any_relevant: bool,
    calibrator: Calibrator<T>,
    cfg: ValidationConfig,
}

impl<T: Scalar> FrameValidator<T> {
    pub fn new(spec: &SpecAst, calibrator: Calibrator<T>, cfg: ValidationConfig) -> Self {
        FrameValidator {
            spec: spec.clone(),
            props: propositions_of(spec),
            positive: positive_propositions(spec),
            any_relevant: any_relevant(spec),
            calibrator,
            cfg,
        }
    }

    pub fn propositions(&self) -> &PropositionSet {
        &self.props
    }

    pub fn calibrator(&self) -> &Calibrator<T> {
        &self.calibrator
    }

    pub fn confidences(&self, frame: &FrameAnnotation) -> Vec<T> {
        frame_confidences(frame, &self.props, &self.calibrator)
    }

    /// Validity given precomputed calibrated confidences over [`Self::propositions`].
    pub fn validate_with(&self, g: &[T]) -> bool {
        if !gate(g, &self.props, &self.positive, self.cfg.vc_mode) {
            return false;
        }
        if self.any_relevant {
            return true;
        }
        let threshold = T::lit(self.cfg.presence_threshold);
        let present = |p: &Proposition| self.props.position(p).is_some_and(|i| g[i] >= threshold);
        psi_eval(&self.spec, &present)
    }

    pub fn validate(&self, frame: &FrameAnnotation) -> bool {
        self.validate_with(&self.confidences(frame))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::annotation::DetectionRecord;
    use crate::calibration::CalibrationParams;
    use crate::spec_lang::parse_formula;
    use proptest::prelude::*;

    fn frame(dets: &[(&str, f64)]) -> FrameAnnotation {
        FrameAnnotation::new(
            0,
            0.0,
            dets.iter().map(|(p, c)| DetectionRecord { proposition: p.to_string(), raw_confidence: *c }),
        )
        .unwrap()
    }

    fn cal() -> Calibrator<f64> {
        CalibrationParams::new(10.0, 0.5, 0.1, 0.9).unwrap().into()
    }

    fn cfg(vc_mode: VcMode) -> ValidationConfig {
        ValidationConfig { vc_mode, presence_threshold: 0.5 }
    }

    const CROSSING: &str = r#"("crosswalk_sign" & "children") U !"adults""#;
    const RUNNING: &str = r#"("crosswalk_sign" & "children") U !"crosswalk_sign""#;

    #[test]
    fn detection_gate_examples() {
        let ab = parse_formula(r#""a" & "b""#).unwrap();
        for mode in [VcMode::Literal, VcMode::Positive, VcMode::Any] {
            assert!(detection_verify(&frame(&[("a", 0.95), ("b", 0.99)]), &ab, &cal(), &cfg(mode)));
        }
        let low = frame(&[("a", 0.95), ("b", 0.05)]);
        assert!(!detection_verify(&low, &ab, &cal(), &cfg(VcMode::Literal)));
        assert!(!detection_verify(&low, &ab, &cal(), &cfg(VcMode::Positive)));
        assert!(detection_verify(&low, &ab, &cal(), &cfg(VcMode::Any)));

        let crossing = parse_formula(CROSSING).unwrap();
        let f = frame(&[("crosswalk_sign", 0.95), ("children", 0.95)]);
        assert!(detection_verify(&f, &crossing, &cal(), &cfg(VcMode::Positive)));
        assert!(!detection_verify(&f, &crossing, &cal(), &cfg(VcMode::Literal)));
    }

    #[test]
    fn psi_examples() {
        let crossing = parse_formula(CROSSING).unwrap();
        let all = frame(&[("crosswalk_sign", 0.95), ("children", 0.95), ("adults", 0.95)]);
        assert!(!psi_satisfied(&all, &crossing, &cal(), &cfg(VcMode::Any)));
        let good = frame(&[("crosswalk_sign", 0.95), ("children", 0.95)]);
        assert!(psi_satisfied(&good, &crossing, &cal(), &cfg(VcMode::Any)));
        let or = parse_formula(r#""a" | "b""#).unwrap();
        assert!(psi_satisfied(&frame(&[("b", 0.95)]), &or, &cal(), &cfg(VcMode::Any)));
        // Presence uses the calibrated value: g(0.45) < 0.5.
        assert!(!psi_satisfied(&frame(&[("b", 0.45)]), &or, &cal(), &cfg(VcMode::Any)));
    }

    #[test]
    fn temporal_relevance_examples() {
        let running = parse_formula(RUNNING).unwrap();
        assert!(temporal_relevance(&Proposition::new("crosswalk_sign").unwrap(), &running));
        let ab = parse_formula(r#""a" & "b""#).unwrap();
        assert!(!temporal_relevance(&Proposition::new("a").unwrap(), &ab));
        let mixed = parse_formula(r#"F "a" & "b""#).unwrap();
        assert!(temporal_relevance(&Proposition::new("a").unwrap(), &mixed));
        assert!(!temporal_relevance(&Proposition::new("b").unwrap(), &mixed));
    }

    #[test]
    fn symbolic_and_combined_examples() {
        let running = parse_formula(RUNNING).unwrap();
        assert!(symbolic_verify(&frame(&[]), &running, &cal(), &cfg(VcMode::Any)));
        let ab = parse_formula(r#""a" & "b""#).unwrap();
        assert!(!symbolic_verify(&frame(&[("a", 0.95)]), &ab, &cal(), &cfg(VcMode::Any)));
        assert!(symbolic_verify(&frame(&[("a", 0.95), ("b", 0.95)]), &ab, &cal(), &cfg(VcMode::Any)));

        assert!(validate_frame(&frame(&[("a", 0.95), ("b", 0.95)]), &ab, &cal(), &cfg(VcMode::Literal)));
        assert!(!validate_frame(&frame(&[("a", 0.0), ("b", 0.0)]), &ab, &cal(), &cfg(VcMode::Any)));
        let children = frame(&[("children", 0.95)]);
        assert!(!validate_frame(&children, &running, &cal(), &cfg(VcMode::Positive)));
        assert!(validate_frame(&children, &running, &cal(), &cfg(VcMode::Any)));
    }

    #[test]
    fn positive_mode_with_only_negated_props_accepts_everything() {
        let f = parse_formula(r#"G !"a""#).unwrap();
        assert!(detection_verify(&frame(&[]), &f, &cal(), &cfg(VcMode::Positive)));
        assert!(detection_verify(&frame(&[]), &f, &cal(), &cfg(VcMode::Any)));
    }

    const CORPUS: &[&str] = &[
        r#""a" U "b""#,
        r#"("a" & "b") U "c""#,
        r#"G "a""#,
        r#"F "a""#,
        r#""a" & "b""#,
        r#""a" | !"b""#,
        r#"X "a" -> "c""#,
        RUNNING,
    ];

    fn arb_frame() -> impl Strategy<Value = Vec<(usize, f64)>> {
        prop::collection::vec((0usize..3, 0.0f64..=1.0), 0..4)
    }

    fn to_frame(dets: &[(usize, f64)]) -> FrameAnnotation {
        const L: [&str; 3] = ["a", "b", "c"];
        FrameAnnotation::new(
            0,
            0.0,
            dets.iter().map(|&(i, c)| DetectionRecord { proposition: L[i].into(), raw_confidence: c }),
        )
        .unwrap()
    }

    proptest! {
        #[test]
        fn validation_decomposes(spec_i in 0..CORPUS.len(), dets in arb_frame(), mode in prop::sample::select(vec![VcMode::Literal, VcMode::Positive, VcMode::Any])) {
            let spec = parse_formula(CORPUS[spec_i]).unwrap();
            let f = to_frame(&dets);
            let c = cfg(mode);
            let v = validate_frame(&f, &spec, &cal(), &c);
            prop_assert_eq!(v, detection_verify(&f, &spec, &cal(), &c) && symbolic_verify(&f, &spec, &cal(), &c));
            prop_assert_eq!(v, FrameValidator::new(&spec, cal(), c).validate(&f));
            if spec.contains_temporal() {
                prop_assert!(symbolic_verify(&f, &spec, &cal(), &c));
            }
        }

        #[test]
        fn literal_gate_is_monotone(spec_i in 0..CORPUS.len(), dets in arb_frame(), bump in 0usize..3, delta in 0.0f64..1.0) {
            let spec = parse_formula(CORPUS[spec_i]).unwrap();
            let f = to_frame(&dets);
            let label = ["a", "b", "c"][bump];
            let raised = f.confidence(label) + delta * (1.0 - f.confidence(label));
            let mut g = f.clone();
            g.detections.retain(|d| d.proposition != label);
            g.detections.push(DetectionRecord { proposition: label.into(), raw_confidence: raised });
            if detection_verify(&f, &spec, &cal(), &cfg(VcMode::Literal)) {
                prop_assert!(detection_verify(&g, &spec, &cal(), &cfg(VcMode::Literal)));
            }
        }
    }
}
