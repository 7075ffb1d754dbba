//! Finite-trace model checking of layered probabilistic automata.

mod compile;
mod eval;
mod probability;

use serde_json::{json, Value};
use thiserror::Error;

pub use compile::{compile_formula, compile_formula_with, CompileOptions, FormulaAutomaton};
pub use eval::{eval_word, WordEvaluator};
pub use probability::{brute_force_probability, probability_of, ProductTracker, BRUTE_FORCE_PATH_LIMIT};

use crate::automaton::{AutomatonError, ProbabilisticAutomaton};
use crate::scalar::Scalar;
use crate::spec_lang::{Comparator, Spec};

pub const DEFAULT_LAMBDA: f64 = 0.5;

#[derive(Debug, Error)]
pub enum CheckError {
    #[error("cannot evaluate a formula on an empty word")]
    EmptyWord,
    #[error("cannot check an empty automaton")]
    EmptyAutomaton,
    #[error("formula automaton exceeds the cap of {cap} states")]
    StateBlowUp { cap: usize },
    #[error("formula too large to compile: {0}")]
    TooLarge(String),
    #[error("{paths} paths exceed the enumeration limit of {limit}; use a smaller instance")]
    PathOverflow { paths: u128, limit: u128 },
    #[error(transparent)]
    Automaton(#[from] AutomatonError),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CheckResult<T> {
    pub probability: T,
    pub satisfied: bool,
    pub lambda: f64,
    pub comparator: Comparator,
}

impl<T: Scalar> CheckResult<T> {
    pub fn new(probability: T, comparator: Comparator, lambda: f64) -> Self {
        let satisfied = comparator.holds(probability.as_f64(), lambda);
        CheckResult { probability, satisfied, lambda, comparator }
    }

    pub fn to_json(&self) -> Value {
        json!({
            "v": 1,
            "probability": self.probability.as_f64(),
            "satisfied": self.satisfied,
            "lambda": self.lambda,
            "comparator": self.comparator.symbol(),
        })
    }
}

/// Comparator and threshold of a spec, defaulting to `>= default_lambda`.
pub fn threshold_of(spec: &Spec, default_lambda: f64) -> (Comparator, f64) {
    spec.query().map_or((Comparator::Ge, default_lambda), |q| (q.comparator, q.lambda))
}

pub fn check<T: Scalar>(
    a: &ProbabilisticAutomaton<T>,
    spec: &Spec,
    default_lambda: f64,
) -> Result<CheckResult<T>, CheckError> {
    let fa = compile_formula(spec.surface(), a.propositions())?;
    let (comparator, lambda) = threshold_of(spec, default_lambda);
    Ok(CheckResult::new(probability_of(a, &fa)?, comparator, lambda))
}
