//! Acceptance probability of a layered automaton against a formula DFA.

use crate::automaton::{Layer, Link, ProbabilisticAutomaton, StateLabel};
use crate::scalar::{Accumulator, Scalar};
use crate::spec_lang::{PropositionSet, SpecAst};

use super::compile::FormulaAutomaton;
use super::eval::WordEvaluator;
use super::CheckError;

pub const BRUTE_FORCE_PATH_LIMIT: u128 = 10_000_000;

/// Forward product DP over (layer state, DFA state), extended one layer at a time.
#[derive(Clone, Debug)]
pub struct ProductTracker<'a, T> {
    fa: &'a FormulaAutomaton,
    /// Bit `i` of the automaton label maps to bit `remap[i]` of the DFA letter.
    remap: Vec<Option<usize>>,
    /// `mass[j * Q + q]`.
    mass: Vec<T>,
    width: usize,
    layers: usize,
    acc: Vec<Accumulator<T>>,
    letters: Vec<StateLabel>,
}

impl<'a, T: Scalar> ProductTracker<'a, T> {
    pub fn new(fa: &'a FormulaAutomaton, props: &PropositionSet) -> Self {
        let remap = props.iter().map(|p| fa.propositions().position(p)).collect();
        ProductTracker { fa, remap, mass: Vec::new(), width: 0, layers: 0, acc: Vec::new(), letters: Vec::new() }
    }

    pub fn layers(&self) -> usize {
        self.layers
    }

    pub fn reset(&mut self) {
        self.mass.clear();
        self.width = 0;
        self.layers = 0;
    }

    fn letter(&self, label: StateLabel) -> StateLabel {
        let mut out = 0u32;
        for (i, target) in self.remap.iter().enumerate() {
            if let (true, Some(t)) = (label.contains(i), target) {
                out |= 1 << t;
            }
        }
        StateLabel(out)
    }

    pub fn push(&mut self, layer: &Layer<T>) {
        let q_count = self.fa.num_states();
        let width = layer.width();
        self.letters.clear();
        for s in &layer.states {
            let l = self.letter(s.0);
            self.letters.push(l);
        }
        self.acc.clear();
        self.acc.resize(width * q_count, Accumulator::new());

        if self.layers == 0 {
            let start = self.fa.start();
            for (k, s) in layer.states.iter().enumerate() {
                let q = self.fa.step(start, self.letters[k]);
                self.acc[k * q_count + q as usize].add(s.1);
            }
        } else {
            match &layer.link {
                Link::Broadcast => {
                    // Transition probability depends only on the target, so aggregate sources by DFA state.
                    let mut by_state = vec![Accumulator::new(); q_count];
                    for j in 0..self.width {
                        for q in 0..q_count {
                            let m = self.mass[j * q_count + q];
                            if m > T::zero() {
                                by_state[q].add(m);
                            }
                        }
                    }
                    for (q, m) in by_state.iter().enumerate() {
                        let m = m.value();
                        if !(m > T::zero()) {
                            continue;
                        }
                        for (k, s) in layer.states.iter().enumerate() {
                            let target = self.fa.step(q as u32, self.letters[k]);
                            self.acc[k * q_count + target as usize].add(m * s.1);
                        }
                    }
                }
                Link::Explicit(rows) => {
                    for (j, row) in rows.iter().enumerate() {
                        for q in 0..q_count {
                            let m = self.mass[j * q_count + q];
                            if !(m > T::zero()) {
                                continue;
                            }
                            for &(k, p) in row {
                                let target = self.fa.step(q as u32, self.letters[k]);
                                self.acc[k * q_count + target as usize].add(m * p);
                            }
                        }
                    }
                }
            }
        }
        self.mass.clear();
        self.mass.extend(self.acc.iter().map(Accumulator::value));
        self.width = width;
        self.layers += 1;
    }

    fn mass_where(&self, pred: impl Fn(u32) -> bool) -> T {
        let q_count = self.fa.num_states();
        let mut acc = Accumulator::new();
        for (i, &m) in self.mass.iter().enumerate() {
            if pred((i % q_count) as u32) {
                acc.add(m);
            }
        }
        acc.value()
    }

    /// Probability that the path so far yields an accepted word.
    pub fn accepted_mass(&self) -> T {
        self.mass_where(|q| self.fa.is_accepting(q))
    }

    /// Upper bound on the acceptance probability of any extension.
    pub fn live_mass(&self) -> T {
        self.mass_where(|q| self.fa.is_live(q))
    }
}

/// Exact acceptance probability of the automaton's path distribution.
pub fn probability_of<T: Scalar>(a: &ProbabilisticAutomaton<T>, fa: &FormulaAutomaton) -> Result<T, CheckError> {
    if a.is_empty() {
        return Err(CheckError::EmptyAutomaton);
    }
    let mut tracker = ProductTracker::new(fa, a.propositions());
    for layer in a.layers() {
        tracker.push(layer);
    }
    Ok(tracker.accepted_mass())
}

/// Sums the probability of every path whose word satisfies `ast`, by enumeration.
pub fn brute_force_probability<T: Scalar>(a: &ProbabilisticAutomaton<T>, ast: &SpecAst) -> Result<T, CheckError> {
    if a.is_empty() {
        return Err(CheckError::EmptyAutomaton);
    }
    let paths = a.path_count();
    if paths > BRUTE_FORCE_PATH_LIMIT {
        return Err(CheckError::PathOverflow { paths, limit: BRUTE_FORCE_PATH_LIMIT });
    }
    let ev = WordEvaluator::new(ast, a.propositions());
    let mut word = Vec::with_capacity(a.len());
    let mut total = Accumulator::new();
    for (j, s) in a.layers()[0].states.iter().enumerate() {
        word.push(s.0);
        walk(a, &ev, 0, j, s.1, &mut word, &mut total);
        word.pop();
    }
    Ok(total.value())
}

fn walk<T: Scalar>(
    a: &ProbabilisticAutomaton<T>,
    ev: &WordEvaluator,
    i: usize,
    j: usize,
    p: T,
    word: &mut Vec<StateLabel>,
    total: &mut Accumulator<T>,
) {
    if i + 1 == a.len() {
        if ev.eval(word) {
            total.add(p);
        }
        return;
    }
    let next = &a.layers()[i + 1];
    for (k, q) in a.transitions_from(i, j) {
        word.push(next.states[k].0);
        walk(a, ev, i + 1, k, p * q, word, total);
        word.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::compile::compile_formula;
    use crate::spec_lang::{parse_formula, Proposition};

    fn props(labels: &[&str]) -> PropositionSet {
        labels.iter().map(|l| Proposition::new(*l).unwrap()).collect()
    }

    fn prob(a: &ProbabilisticAutomaton<f64>, spec: &str) -> f64 {
        let ast = parse_formula(spec).unwrap();
        probability_of(a, &compile_formula(&ast, a.propositions()).unwrap()).unwrap()
    }

    #[test]
    fn simple_values() {
        let mut a = ProbabilisticAutomaton::new(props(&["a"])).unwrap();
        a.append_confidences(0, &[1.0], 0.0).unwrap();
        assert_eq!(prob(&a, r#"F "a""#), 1.0);

        let mut a = ProbabilisticAutomaton::new(props(&["a"])).unwrap();
        a.append_confidences(0, &[0.5], 0.0).unwrap();
        a.append_confidences(1, &[0.5], 0.0).unwrap();
        assert_eq!(prob(&a, r#"G "a""#), 0.25);
        assert_eq!(prob(&a, r#""a" & !"a""#), 0.0);
    }

    #[test]
    fn deterministic_chain_matches_eval() {
        let mut a = ProbabilisticAutomaton::new(props(&["a", "b"])).unwrap();
        for (t, g) in [[1.0, 0.0], [1.0, 0.0], [0.0, 1.0]].iter().enumerate() {
            a.append_confidences(t as u64, g, 0.0).unwrap();
        }
        let ast = parse_formula(r#""a" U "b""#).unwrap();
        assert_eq!(brute_force_probability(&a, &ast).unwrap(), 1.0);
        assert_eq!(prob(&a, r#""a" U "b""#), 1.0);
        assert_eq!(prob(&a, r#"G "a""#), 0.0);
    }

    #[test]
    fn explicit_links_and_remapped_alphabet() {
        let mut a = ProbabilisticAutomaton::new(props(&["b", "a"])).unwrap();
        a.append_distribution(0, [(StateLabel(2), 0.5), (StateLabel(0), 0.5)], 0.0).unwrap();
        // From {a}: always to {b}; from {}: to {a} or {b} evenly.
        a.push_explicit_layer(1, vec![StateLabel(1), StateLabel(2)], vec![vec![(0, 1.0)], vec![(0, 0.5), (1, 0.5)]])
            .unwrap();
        let ast = parse_formula(r#""a" U "b""#).unwrap();
        let fa = compile_formula(&ast, &props(&["a", "b"])).unwrap();
        assert_eq!(probability_of(&a, &fa).unwrap(), 0.5);
        assert_eq!(brute_force_probability(&a, &ast).unwrap(), 0.5);
    }

    #[test]
    fn path_limit_is_reported() {
        let mut a = ProbabilisticAutomaton::new(props(&["a", "b", "c"])).unwrap();
        for t in 0..9 {
            a.append_confidences(t, &[0.5, 0.5, 0.5], 0.0).unwrap();
        }
        let ast = parse_formula(r#"F "a""#).unwrap();
        assert!(matches!(brute_force_probability(&a, &ast), Err(CheckError::PathOverflow { .. })));
    }

    #[test]
    fn tracker_live_mass_bounds_future_acceptance() {
        let ast = parse_formula(r#""a" U "b""#).unwrap();
        let p = props(&["a", "b"]);
        let fa = compile_formula(&ast, &p).unwrap();
        let mut a = ProbabilisticAutomaton::<f64>::new(p.clone()).unwrap();
        let mut t = ProductTracker::new(&fa, &p);
        a.append_confidences(0, &[0.9, 0.0], 0.0).unwrap();
        t.push(&a.layers()[0]);
        assert!((t.live_mass() - 0.9).abs() < 1e-15);
        assert_eq!(t.accepted_mass(), 0.0);
        a.append_confidences(1, &[0.0, 1.0], 0.0).unwrap();
        t.push(&a.layers()[1]);
        assert!((t.accepted_mass() - 0.9).abs() < 1e-15);
    }
}
