//! Specification language: parsing, normalization and syntactic queries.

mod ast;
mod parser;

use std::fmt;

use thiserror::Error;

pub use ast::{
    operator_sets, positive_propositions, propositions_of, Comparator, FirstOrderOp, OperatorSets, ProbQuery,
    Proposition, PropositionSet, Spec, SpecAst, TemporalOp,
};
pub use parser::{parse_formula, parse_spec};

/// Syntax error with the byte offset where parsing stopped.
#[derive(Clone, Debug, PartialEq)]
pub struct ParseError {
    pub offset: usize,
    pub message: String,
    pub expected: Vec<String>,
    pub found: String,
}

impl ParseError {
    pub(crate) fn new(offset: usize, message: String, expected: &[&str], found: String) -> Self {
        ParseError { offset, message, expected: expected.iter().map(|s| s.to_string()).collect(), found }
    }
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "syntax error at byte {}: {}", self.offset, self.message)?;
        if !self.expected.is_empty() {
            write!(f, " (expected one of: {})", self.expected.join(", "))?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpecError {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("proposition labels must be non-empty")]
    EmptyProposition,
    #[error("probability threshold {0} outside [0, 1]")]
    LambdaOutOfRange(f64),
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn labels(set: &PropositionSet) -> Vec<&str> {
        set.iter().map(Proposition::as_str).collect()
    }

    #[test]
    fn parses_crossing_example() {
        let spec = parse_spec(r#"("crosswalk_sign" & "children") U !"crosswalk_sign""#).unwrap();
        let expected = SpecAst::until(
            SpecAst::and(SpecAst::prop("crosswalk_sign"), SpecAst::prop("children")),
            SpecAst::not(SpecAst::prop("crosswalk_sign")),
        );
        assert_eq!(spec.surface(), &expected);
        assert_eq!(spec.core(), &expected);
        assert!(spec.query().is_none());
    }

    #[test]
    fn single_proposition() {
        assert_eq!(parse_formula(r#""a""#).unwrap(), SpecAst::prop("a"));
    }

    #[test]
    fn eventually_normalizes_to_until() {
        let spec = parse_spec(r#"F "a""#).unwrap();
        assert_eq!(spec.surface(), &SpecAst::eventually(SpecAst::prop("a")));
        assert_eq!(spec.core(), &SpecAst::until(SpecAst::True, SpecAst::prop("a")));
    }

    #[test]
    fn always_and_implies_normalize() {
        let spec = parse_spec(r#"G ("a" -> "b")"#).unwrap();
        let expected = SpecAst::not(SpecAst::until(
            SpecAst::True,
            SpecAst::not(SpecAst::or(SpecAst::not(SpecAst::prop("a")), SpecAst::prop("b"))),
        ));
        assert_eq!(spec.core(), &expected);
        assert!(spec.core().is_core());
        assert!(!spec.surface().is_core());
    }

    #[test]
    fn precedence_and_associativity() {
        let f = parse_formula(r#"!"a" & "b" | "c" U "d" U "e""#).unwrap();
        let expected = SpecAst::until(
            SpecAst::or(SpecAst::and(SpecAst::not(SpecAst::prop("a")), SpecAst::prop("b")), SpecAst::prop("c")),
            SpecAst::until(SpecAst::prop("d"), SpecAst::prop("e")),
        );
        assert_eq!(f, expected);
        let g = parse_formula(r#"G "a" U "b""#).unwrap();
        assert_eq!(g, SpecAst::until(SpecAst::always(SpecAst::prop("a")), SpecAst::prop("b")));
    }

    #[test]
    fn unicode_aliases() {
        let ascii = parse_formula(r#"("a" & !"b") | (G "c" U F "d")"#).unwrap();
        let uni = parse_formula("(\"a\" ∧ ¬\"b\") ∨ (□ \"c\" 𝖴 ◇ \"d\")").unwrap();
        assert_eq!(ascii, uni);
        let imp = parse_formula("\"a\" → \"b\"").unwrap();
        assert_eq!(imp, SpecAst::implies(SpecAst::prop("a"), SpecAst::prop("b")));
    }

    #[test]
    fn probabilistic_wrapper() {
        let spec = parse_spec(r#"P>=0.9 ["a" U "b"]"#).unwrap();
        let q = spec.query().unwrap();
        assert_eq!(q.comparator, Comparator::Ge);
        assert_eq!(q.lambda, 0.9);
        let spec = parse_spec("P≤0.25 [F \"a\"]").unwrap();
        assert_eq!(spec.query().unwrap().comparator, Comparator::Le);
    }

    #[test]
    fn lambda_out_of_range_is_rejected() {
        let err = parse_spec(r#"P>=1.5 ["a"]"#).unwrap_err();
        match err {
            SpecError::Parse(e) => {
                assert_eq!(e.offset, 3);
                assert!(e.message.contains("outside"), "{}", e.message);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn nested_quantifier_is_rejected() {
        let err = parse_spec(r#""a" U P>=0.5 ["b"]"#).unwrap_err();
        let SpecError::Parse(e) = err else { panic!() };
        assert_eq!(e.offset, 6);
        assert!(e.message.contains("root"));
    }

    #[test]
    fn syntax_errors_report_offset_and_expected() {
        let SpecError::Parse(e) = parse_spec(r#""a" &"#).unwrap_err() else { panic!() };
        assert_eq!(e.offset, 5);
        assert!(e.expected.iter().any(|x| x == "proposition"));

        let SpecError::Parse(e) = parse_spec(r#"("a" & "b""#).unwrap_err() else { panic!() };
        assert_eq!(e.offset, 10);
        assert_eq!(e.expected, vec!["')'".to_string()]);

        let SpecError::Parse(e) = parse_spec(r#""a" U "b"#).unwrap_err() else { panic!() };
        assert_eq!(e.offset, 6);
        assert!(e.message.contains("unbalanced quote"));

        let SpecError::Parse(e) = parse_spec(r#""a" ) "#).unwrap_err() else { panic!() };
        assert_eq!(e.offset, 4);

        let SpecError::Parse(e) = parse_spec("a U b").unwrap_err() else { panic!() };
        assert!(e.message.contains("must be quoted"));

        let SpecError::Parse(e) = parse_spec(r#""a" R "b""#).unwrap_err() else { panic!() };
        assert!(e.message.contains("release"));

        assert!(parse_spec("   ").is_err());
        assert!(parse_spec(r#""" & "a""#).is_err());
        assert!(parse_spec(r#""  ""#).is_err());
    }

    #[test]
    fn propositions_in_first_occurrence_order() {
        let spec = parse_spec(r#"("crosswalk_sign" & "children") U !"crosswalk_sign""#).unwrap();
        assert_eq!(labels(&spec.propositions()), ["crosswalk_sign", "children"]);
        let f = parse_formula(r#""a" U "a""#).unwrap();
        assert_eq!(labels(&propositions_of(&f)), ["a"]);
        let f = parse_formula(r#"("a" & "b") U "c""#).unwrap();
        assert_eq!(labels(&propositions_of(&f)), ["a", "b", "c"]);
    }

    #[test]
    fn operator_sets_examples() {
        let spec = parse_spec(r#"("crosswalk_sign" & "children") U !"crosswalk_sign""#).unwrap();
        let ops = operator_sets(spec.surface());
        assert_eq!(ops.psi, BTreeSet::from([FirstOrderOp::And, FirstOrderOp::Not]));
        assert_eq!(ops.theta, BTreeSet::from([TemporalOp::Until]));

        let ops = operator_sets(&SpecAst::prop("a"));
        assert!(ops.psi.is_empty() && ops.theta.is_empty());

        let spec = parse_spec(r#"G "a""#).unwrap();
        let surface = operator_sets(spec.surface());
        assert_eq!(surface.theta, BTreeSet::from([TemporalOp::Always]));
        assert!(surface.psi.is_empty());
        let core = operator_sets(spec.core());
        assert_eq!(core.theta, BTreeSet::from([TemporalOp::Until]));
        assert_eq!(core.psi, BTreeSet::from([FirstOrderOp::Not]));
    }

    #[test]
    fn positive_proposition_examples() {
        let f = parse_formula(r#"("crosswalk_sign" & "children") U !"adults""#).unwrap();
        assert_eq!(labels(&positive_propositions(&f)), ["crosswalk_sign", "children"]);
        assert!(positive_propositions(&parse_formula(r#"!"a""#).unwrap()).is_empty());
        assert_eq!(labels(&positive_propositions(&parse_formula(r#"!(!"a")"#).unwrap())), ["a"]);
        let f = parse_formula(r#""a" -> "b""#).unwrap();
        assert_eq!(labels(&positive_propositions(&f)), ["b"]);
        // □ normalizes under two negations, so polarity is preserved.
        let spec = parse_spec(r#"G "a""#).unwrap();
        assert_eq!(labels(&positive_propositions(spec.core())), ["a"]);
    }

    #[test]
    fn display_round_trips_with_escapes() {
        let f = SpecAst::and(SpecAst::prop("say \"hi\""), SpecAst::prop("back\\slash"));
        let printed = f.to_string();
        assert_eq!(parse_formula(&printed).unwrap(), f);
        let spec = parse_spec(r#"P>0.25 [X "a" U ("b" | "c") & "d"]"#).unwrap();
        assert_eq!(parse_spec(&spec.to_string()).unwrap(), spec);
    }

    #[test]
    fn canonical_json() {
        let f = parse_formula(r#""a" U !"b""#).unwrap();
        assert_eq!(
            f.to_json().to_string(),
            r#"{"left":{"label":"a","op":"prop"},"op":"until","right":{"arg":{"label":"b","op":"prop"},"op":"not"}}"#
        );
    }
}
