//! Compilation of a finite-trace formula into a minimal complete DFA.
//!
//! Obligations are tracked as Boolean functions over "atoms" describing the
//! next position: whether it exists, the value there of every Until node, and
//! the value there of every Next argument. A DFA state is the truth table of
//! the pending obligation. Reading a letter substitutes each atom by its
//! one-step unfolding; acceptance evaluates the table with every atom false.

use std::collections::{HashMap, VecDeque};

use crate::automaton::StateLabel;
use crate::spec_lang::{PropositionSet, SpecAst};

use super::CheckError;

#[derive(Clone, Copy, Debug)]
pub struct CompileOptions {
    pub max_states: usize,
    pub max_atoms: usize,
}

impl Default for CompileOptions {
    fn default() -> Self {
        CompileOptions { max_states: 4096, max_atoms: 16 }
    }
}

const ALIVE: usize = 0;
const MAX_TABLE_ENTRIES: usize = 1 << 22;

#[derive(Clone, Copy, Debug)]
enum CNode {
    True,
    False,
    Prop(Option<usize>),
    Not(usize),
    And(usize, usize),
    Or(usize, usize),
    Next { atom: usize },
    Until { l: usize, r: usize, atom: usize },
}

struct Flat {
    nodes: Vec<CNode>,
    /// `(atom, node whose current value defines it)`.
    atom_defs: Vec<(usize, usize)>,
    atoms: usize,
}

fn flatten(ast: &SpecAst, props: &PropositionSet, f: &mut Flat) -> usize {
    let node = match ast {
        SpecAst::True => CNode::True,
        SpecAst::False => CNode::False,
        SpecAst::Prop(p) => CNode::Prop(props.position(p)),
        SpecAst::Not(a) => CNode::Not(flatten(a, props, f)),
        SpecAst::And(l, r) => {
            let (l, r) = (flatten(l, props, f), flatten(r, props, f));
            CNode::And(l, r)
        }
        SpecAst::Or(l, r) => {
            let (l, r) = (flatten(l, props, f), flatten(r, props, f));
            CNode::Or(l, r)
        }
        SpecAst::Next(a) => {
            let arg = flatten(a, props, f);
            let atom = f.atoms;
            f.atoms += 1;
            f.atom_defs.push((atom, arg));
            CNode::Next { atom }
        }
        SpecAst::Until(l, r) => {
            let (l, r) = (flatten(l, props, f), flatten(r, props, f));
            let atom = f.atoms;
            f.atoms += 1;
            // Defined by this node itself, pushed below.
            f.atom_defs.push((atom, f.nodes.len()));
            CNode::Until { l, r, atom }
        }
        other => unreachable!("not a core operator: {other:?}"),
    };
    f.nodes.push(node);
    f.nodes.len() - 1
}

/// Deterministic complete automaton over label bitmasks of its proposition set.
#[derive(Clone, Debug, PartialEq)]
pub struct FormulaAutomaton {
    props: PropositionSet,
    letters: usize,
    delta: Vec<u32>,
    accepting: Vec<bool>,
    live: Vec<bool>,
    start: u32,
}

impl FormulaAutomaton {
    pub fn propositions(&self) -> &PropositionSet {
        &self.props
    }

    pub fn num_states(&self) -> usize {
        self.accepting.len()
    }

    pub fn num_letters(&self) -> usize {
        self.letters
    }

    pub fn start(&self) -> u32 {
        self.start
    }

    #[inline]
    pub fn step(&self, q: u32, letter: StateLabel) -> u32 {
        self.delta[q as usize * self.letters + (letter.0 as usize & (self.letters - 1))]
    }

    #[inline]
    pub fn is_accepting(&self, q: u32) -> bool {
        self.accepting[q as usize]
    }

    /// Whether some continuation from `q` reaches acceptance.
    #[inline]
    pub fn is_live(&self, q: u32) -> bool {
        self.live[q as usize]
    }

    pub fn accepts(&self, word: &[StateLabel]) -> bool {
        self.is_accepting(word.iter().fold(self.start, |q, &l| self.step(q, l)))
    }

    /// Automaton for the negated formula on non-empty words.
    pub fn complement(&self) -> FormulaAutomaton {
        let accepting: Vec<bool> = self.accepting.iter().map(|a| !a).collect();
        let live = live_states(&self.delta, self.letters, &accepting);
        FormulaAutomaton { accepting, live, ..self.clone() }
    }
}

fn live_states(delta: &[u32], letters: usize, accepting: &[bool]) -> Vec<bool> {
    let n = accepting.len();
    let mut preds: Vec<Vec<u32>> = vec![Vec::new(); n];
    for q in 0..n {
        for s in 0..letters {
            preds[delta[q * letters + s] as usize].push(q as u32);
        }
    }
    let mut live = accepting.to_vec();
    let mut queue: VecDeque<usize> = (0..n).filter(|&q| live[q]).collect();
    while let Some(q) = queue.pop_front() {
        for &p in &preds[q] {
            if !live[p as usize] {
                live[p as usize] = true;
                queue.push_back(p as usize);
            }
        }
    }
    live
}

#[inline]
fn bit(table: &[u64], i: usize) -> bool {
    table[i >> 6] >> (i & 63) & 1 == 1
}

pub fn compile_formula(ast: &SpecAst, props: &PropositionSet) -> Result<FormulaAutomaton, CheckError> {
    compile_formula_with(ast, props, &CompileOptions::default())
}

pub fn compile_formula_with(
    ast: &SpecAst,
    props: &PropositionSet,
    opts: &CompileOptions,
) -> Result<FormulaAutomaton, CheckError> {
    if props.len() > crate::automaton::MAX_PROPOSITIONS {
        return Err(CheckError::TooLarge(format!("{} propositions", props.len())));
    }
    let core = ast.normalize();
    let mut flat = Flat { nodes: Vec::new(), atom_defs: Vec::new(), atoms: 1 };
    let root = flatten(&core, props, &mut flat);
    let n_atoms = flat.atoms;
    if n_atoms > opts.max_atoms.min(24) {
        return Err(CheckError::TooLarge(format!(
            "{} temporal sub-terms exceed the cap of {}",
            n_atoms - 1,
            opts.max_atoms.min(24) - 1
        )));
    }
    let letters = 1usize << props.len();
    let assignments = 1usize << n_atoms;
    if letters.saturating_mul(assignments) > MAX_TABLE_ENTRIES {
        return Err(CheckError::TooLarge(format!(
            "{letters} letters x {assignments} atom assignments exceed the compilation table limit"
        )));
    }

    // pre[s * assignments + b]: atom values at the current position given letter s and next-position atoms b.
    let mut pre = vec![0u32; letters * assignments];
    let mut root_val = vec![false; letters * assignments];
    let mut vals = vec![false; flat.nodes.len()];
    for s in 0..letters {
        let letter = StateLabel(s as u32);
        for b in 0..assignments {
            let atom = |a: usize| b >> a & 1 == 1;
            for (k, node) in flat.nodes.iter().enumerate() {
                vals[k] = match *node {
                    CNode::True => true,
                    CNode::False => false,
                    CNode::Prop(i) => i.is_some_and(|i| letter.contains(i)),
                    CNode::Not(a) => !vals[a],
                    CNode::And(l, r) => vals[l] && vals[r],
                    CNode::Or(l, r) => vals[l] || vals[r],
                    CNode::Next { atom: x } => atom(ALIVE) && atom(x),
                    CNode::Until { l, r, atom: u } => vals[r] || (vals[l] && atom(u)),
                };
            }
            let mut cur = 1u32 << ALIVE;
            for &(a, node) in &flat.atom_defs {
                if vals[node] {
                    cur |= 1 << a;
                }
            }
            pre[s * assignments + b] = cur;
            root_val[s * assignments + b] = vals[root];
        }
    }

    let words = assignments.div_ceil(64);
    let mut tables: Vec<Vec<u64>> = vec![Vec::new()]; // index 0: start, before any letter
    let mut index: HashMap<Vec<u64>, u32> = HashMap::new();
    let mut delta: Vec<u32> = Vec::new();
    let mut queue = VecDeque::from([0usize]);
    let mut scratch = vec![0u64; words];
    while let Some(q) = queue.pop_front() {
        debug_assert_eq!(delta.len(), q * letters);
        for s in 0..letters {
            scratch.iter_mut().for_each(|w| *w = 0);
            for b in 0..assignments {
                let v = if q == 0 {
                    root_val[s * assignments + b]
                } else {
                    bit(&tables[q], pre[s * assignments + b] as usize)
                };
                if v {
                    scratch[b >> 6] |= 1 << (b & 63);
                }
            }
            let target = match index.get(&scratch) {
                Some(&t) => t,
                None => {
                    if tables.len() >= opts.max_states {
                        return Err(CheckError::StateBlowUp { cap: opts.max_states });
                    }
                    let t = tables.len() as u32;
                    tables.push(scratch.clone());
                    index.insert(scratch.clone(), t);
                    queue.push_back(t as usize);
                    t
                }
            };
            delta.push(target);
        }
    }
    // Acceptance reads the obligation with no next position. The start state
    // only decides the empty word, which has no trace semantics; it takes the
    // value with every temporal term false so that G-style formulas stay minimal.
    let mut eps = vec![false; flat.nodes.len()];
    for (k, node) in flat.nodes.iter().enumerate() {
        eps[k] = match *node {
            CNode::True => true,
            CNode::Not(a) => !eps[a],
            CNode::And(l, r) => eps[l] && eps[r],
            CNode::Or(l, r) => eps[l] || eps[r],
            CNode::False | CNode::Prop(_) | CNode::Next { .. } | CNode::Until { .. } => false,
        };
    }
    let accepting: Vec<bool> =
        tables.iter().enumerate().map(|(q, t)| if q == 0 { eps[root] } else { bit(t, 0) }).collect();
    Ok(minimize(props.clone(), letters, &delta, &accepting))
}

/// Moore partition refinement.
fn minimize(props: PropositionSet, letters: usize, delta: &[u32], accepting: &[bool]) -> FormulaAutomaton {
    let n = accepting.len();
    let mut class: Vec<u32> = accepting.iter().map(|&a| a as u32).collect();
    let mut count = class.iter().copied().max().map_or(0, |m| m + 1);
    loop {
        let mut ids: HashMap<Vec<u32>, u32> = HashMap::new();
        let mut next = vec![0u32; n];
        for q in 0..n {
            let mut sig = Vec::with_capacity(letters + 1);
            sig.push(class[q]);
            sig.extend((0..letters).map(|s| class[delta[q * letters + s] as usize]));
            let len = ids.len() as u32;
            next[q] = *ids.entry(sig).or_insert(len);
        }
        let new_count = ids.len() as u32;
        class = next;
        if new_count == count {
            break;
        }
        count = new_count;
    }
    // Renumber so the start state is 0 and classes appear in BFS-discovery order.
    let mut order: HashMap<u32, u32> = HashMap::new();
    let mut rep: Vec<usize> = Vec::new();
    for q in 0..n {
        order.entry(class[q]).or_insert_with(|| {
            rep.push(q);
            (rep.len() - 1) as u32
        });
    }
    let m = rep.len();
    let mut new_delta = vec![0u32; m * letters];
    let mut new_acc = vec![false; m];
    for (c, &q) in rep.iter().enumerate() {
        new_acc[c] = accepting[q];
        for s in 0..letters {
            new_delta[c * letters + s] = order[&class[delta[q * letters + s] as usize]];
        }
    }
    let live = live_states(&new_delta, letters, &new_acc);
    FormulaAutomaton { props, letters, delta: new_delta, accepting: new_acc, live, start: order[&class[0]] }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::checker::eval::WordEvaluator;
    use crate::spec_lang::{parse_formula, propositions_of, Proposition};

    fn compile(spec: &str) -> (FormulaAutomaton, SpecAst, PropositionSet) {
        let ast = parse_formula(spec).unwrap();
        let props = propositions_of(&ast);
        (compile_formula(&ast, &props).unwrap(), ast, props)
    }

    fn all_words(letters: usize, len: usize) -> Vec<Vec<StateLabel>> {
        let mut out = vec![vec![]];
        for _ in 0..len {
            out = out
                .into_iter()
                .flat_map(|w| (0..letters).map(move |s| [w.clone(), vec![StateLabel(s as u32)]].concat()))
                .collect();
        }
        out
    }

    #[test]
    fn textbook_sizes() {
        assert_eq!(compile(r#"F "a""#).0.num_states(), 2);
        assert_eq!(compile(r#"G "a""#).0.num_states(), 2);
    }

    #[test]
    fn eventually_and_always_shapes() {
        let (fa, _, _) = compile(r#"F "a""#);
        let a = StateLabel(1);
        let none = StateLabel(0);
        let q = fa.step(fa.start(), none);
        assert!(!fa.is_accepting(q) && fa.is_live(q));
        let sink = fa.step(q, a);
        assert!(fa.is_accepting(sink) && fa.step(sink, none) == sink);

        let (fa, _, _) = compile(r#"G "a""#);
        let alive = fa.step(fa.start(), a);
        assert!(fa.is_accepting(alive) && fa.step(alive, a) == alive);
        let dead = fa.step(alive, none);
        assert!(!fa.is_live(dead) && fa.step(dead, a) == dead);
    }

    #[test]
    fn agrees_with_evaluator_on_all_short_words() {
        for spec in [
            r#"("a" & "b") U "c""#,
            r#""a" U "b""#,
            r#"X X "a""#,
            r#"G ("a" -> X "b")"#,
            r#"F ("a" & X !"a")"#,
            r#"!("a" U ("b" U "c"))"#,
            r#""a" & !"a""#,
            r#"G F "a""#,
            r#"X "a" | !X True"#,
        ] {
            let (fa, ast, props) = compile(spec);
            let ev = WordEvaluator::new(&ast, &props);
            for len in 1..=5 {
                for w in all_words(1 << props.len(), len) {
                    assert_eq!(fa.accepts(&w), ev.eval(&w), "{spec} on {w:?}");
                }
            }
        }
    }

    #[test]
    fn complement_flips_non_empty_words() {
        let (fa, _, props) = compile(r#""a" U "b""#);
        let co = fa.complement();
        for w in all_words(1 << props.len(), 3) {
            assert_eq!(fa.accepts(&w), !co.accepts(&w));
        }
    }

    #[test]
    fn extra_propositions_are_ignored() {
        let ast = parse_formula(r#"F "a""#).unwrap();
        let props: PropositionSet = ["z", "a"].iter().map(|l| Proposition::new(*l).unwrap()).collect();
        let fa = compile_formula(&ast, &props).unwrap();
        assert!(fa.accepts(&[StateLabel(1), StateLabel(2)]));
        assert!(!fa.accepts(&[StateLabel(1), StateLabel(1)]));
    }

    #[test]
    fn caps_are_enforced() {
        let ast = parse_formula(r#"X X X X X X X X X X X X X X X X "a""#).unwrap();
        assert!(matches!(compile_formula(&ast, &propositions_of(&ast)), Err(CheckError::TooLarge(_))));
        let ast = parse_formula(r#"X X X X X X "a""#).unwrap();
        let opts = CompileOptions { max_states: 3, ..CompileOptions::default() };
        assert!(matches!(
            compile_formula_with(&ast, &propositions_of(&ast), &opts),
            Err(CheckError::StateBlowUp { cap: 3 })
        ));
    }
}
