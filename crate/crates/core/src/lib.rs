//! Temporal-logic scene search over per-frame detections.
//!
//! Frames are validated against a specification, folded into a layered
//! probabilistic automaton, and checked after every frame; each satisfying
//! run of frames is reported as a scene interval.

// `!(x >= lo)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod annotation;
pub mod automaton;
pub mod calibration;
pub mod checker;
pub mod datagen;
pub mod eval;
pub mod scalar;
pub mod search;
pub mod spec_lang;
pub mod validation;

use thiserror::Error;

pub use annotation::{FrameAnnotation, GroundTruthInterval, VideoAnnotation};
pub use automaton::{ProbabilisticAutomaton, StateLabel};
pub use calibration::{CalibrationParams, Calibrator};
pub use checker::{check, CheckResult};
pub use scalar::Scalar;
pub use search::{search, SceneInterval, SearchConfig};
pub use spec_lang::{parse_spec, Spec, SpecAst};

/// Any error the library can report.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Spec(#[from] spec_lang::SpecError),
    #[error(transparent)]
    Annotation(#[from] annotation::AnnotationError),
    #[error(transparent)]
    Calibration(#[from] calibration::CalibrationError),
    #[error(transparent)]
    Automaton(#[from] automaton::AutomatonError),
    #[error(transparent)]
    Check(#[from] checker::CheckError),
    #[error(transparent)]
    Search(#[from] search::SearchError),
    #[error(transparent)]
    Datagen(#[from] datagen::DatagenError),
    #[error(transparent)]
    Eval(#[from] eval::EvalError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type Automaton = ProbabilisticAutomaton<f64>;
pub type Automaton32 = ProbabilisticAutomaton<f32>;
pub type Params = CalibrationParams<f64>;
pub type Params32 = CalibrationParams<f32>;
pub type Config = SearchConfig<f64>;
pub type Config32 = SearchConfig<f32>;
