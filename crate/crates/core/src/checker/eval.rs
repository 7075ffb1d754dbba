//! Direct finite-trace evaluation, position by position from the end of the word.

use crate::automaton::StateLabel;
use crate::spec_lang::{PropositionSet, SpecAst};

use super::CheckError;

#[derive(Clone, Copy, Debug)]
enum Node {
    True,
    False,
    Prop(Option<usize>),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Implies(usize, usize),
    Next(usize),
    Until(usize, usize),
    Always(usize),
    Eventually(usize),
}

/// Subformula table of a formula in post-order; the root is the last entry.
///
/// `step` computes the truth of every subformula at one position from the
/// letter there and the values at the following position, so callers can
/// share suffix work across many words.
#[derive(Clone, Debug)]
pub struct WordEvaluator {
    nodes: Vec<Node>,
}

impl WordEvaluator {
    /// Propositions missing from `props` are false everywhere.
    pub fn new(ast: &SpecAst, props: &PropositionSet) -> Self {
        let mut nodes = Vec::with_capacity(ast.size());
        build(ast, props, &mut nodes);
        WordEvaluator { nodes }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn root(values: &[bool]) -> bool {
        *values.last().expect("non-empty formula")
    }

    /// `next` is `None` at the last position of the word.
    pub fn step(&self, letter: StateLabel, next: Option<&[bool]>, out: &mut [bool]) {
        let nx = |i: usize| next.is_some_and(|n| n[i]);
        for (k, node) in self.nodes.iter().enumerate() {
            out[k] = match *node {
                Node::True => true,
                Node::False => false,
                Node::Prop(i) => i.is_some_and(|i| letter.contains(i)),
                Node::Not(a) => !out[a],
                Node::And(l, r) => out[l] && out[r],
                Node::Or(l, r) => out[l] || out[r],
                Node::Implies(l, r) => !out[l] || out[r],
                Node::Next(a) => nx(a),
                Node::Until(l, r) => out[r] || (out[l] && nx(k)),
                Node::Always(a) => out[a] && next.is_none_or(|n| n[k]),
                Node::Eventually(a) => out[a] || nx(k),
            };
        }
    }

    /// Truth of the formula at position 0 of a non-empty word.
    pub fn eval(&self, word: &[StateLabel]) -> bool {
        let mut cur = vec![false; self.nodes.len()];
        let mut next = vec![false; self.nodes.len()];
        for (i, &letter) in word.iter().enumerate().rev() {
            let has_next = i + 1 < word.len();
            self.step(letter, has_next.then_some(next.as_slice()), &mut cur);
            std::mem::swap(&mut cur, &mut next);
        }
        Self::root(&next)
    }
}

fn build(ast: &SpecAst, props: &PropositionSet, nodes: &mut Vec<Node>) -> usize {
    let node = match ast {
        SpecAst::True => Node::True,
        SpecAst::False => Node::False,
        SpecAst::Prop(p) => Node::Prop(props.position(p)),
        SpecAst::Not(a) => Node::Not(build(a, props, nodes)),
        SpecAst::Next(a) => Node::Next(build(a, props, nodes)),
        SpecAst::Always(a) => Node::Always(build(a, props, nodes)),
        SpecAst::Eventually(a) => Node::Eventually(build(a, props, nodes)),
        SpecAst::And(l, r) => {
            let (l, r) = (build(l, props, nodes), build(r, props, nodes));
            Node::And(l, r)
        }
        SpecAst::Or(l, r) => {
            let (l, r) = (build(l, props, nodes), build(r, props, nodes));
            Node::Or(l, r)
        }
        SpecAst::Implies(l, r) => {
            let (l, r) = (build(l, props, nodes), build(r, props, nodes));
            Node::Implies(l, r)
        }
        SpecAst::Until(l, r) => {
            let (l, r) = (build(l, props, nodes), build(r, props, nodes));
            Node::Until(l, r)
        }
    };
    nodes.push(node);
    nodes.len() - 1
}

/// Finite-trace satisfaction of `ast` by `word` at position 0.
pub fn eval_word(word: &[StateLabel], ast: &SpecAst, props: &PropositionSet) -> Result<bool, CheckError> {
    if word.is_empty() {
        return Err(CheckError::EmptyWord);
    }
    Ok(WordEvaluator::new(ast, props).eval(word))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spec_lang::{parse_formula, propositions_of};

    fn word(props: &PropositionSet, letters: &[&[&str]]) -> Vec<StateLabel> {
        letters.iter().map(|l| StateLabel::from_labels(l, props).unwrap()).collect()
    }

    fn holds(spec: &str, letters: &[&[&str]]) -> bool {
        let ast = parse_formula(spec).unwrap();
        let props = propositions_of(&ast);
        eval_word(&word(&props, letters), &ast, &props).unwrap()
    }

    #[test]
    fn until_examples() {
        assert!(holds(r#""a" U "b""#, &[&["a"], &["a"], &["b"]]));
        assert!(!holds(r#""a" U "b""#, &[&["a"], &[], &["b"]]));
        assert!(!holds(r#""a" U "b""#, &[&["a"], &["a"]]));
        assert!(holds(r#""a" U "b""#, &[&["b"]]));
    }

    #[test]
    fn propositional_and_next() {
        assert!(holds(r#""a" & "b""#, &[&["a", "b"]]));
        assert!(!holds(r#"X "a""#, &[&["a"]]));
        assert!(holds(r#"X "a""#, &[&[], &["a"]]));
        assert!(holds(r#"!X "a""#, &[&["a"]]));
    }

    #[test]
    fn always_eventually_match_normal_forms() {
        let words: &[&[&[&str]]] = &[&[&["a"], &["a"]], &[&["a"], &[]], &[&[], &["a"]], &[&[]]];
        for w in words {
            assert_eq!(holds(r#"G "a""#, w), holds(r#"!(True U !"a")"#, w));
            assert_eq!(holds(r#"F "a""#, w), holds(r#"True U "a""#, w));
        }
    }

    #[test]
    fn empty_word_is_an_error() {
        let ast = parse_formula(r#""a""#).unwrap();
        assert!(matches!(eval_word(&[], &ast, &propositions_of(&ast)), Err(CheckError::EmptyWord)));
    }
}
