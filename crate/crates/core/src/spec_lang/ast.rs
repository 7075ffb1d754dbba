use std::collections::{BTreeSet, HashMap};
use std::fmt;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::SpecError;

/// An atomic proposition label, e.g. `"children"`. Compared case-sensitively.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Proposition(String);

impl Proposition {
    pub fn new(label: impl Into<String>) -> Result<Self, SpecError> {
        let label = label.into();
        if label.trim().is_empty() {
            return Err(SpecError::EmptyProposition);
        }
        Ok(Proposition(label))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl TryFrom<String> for Proposition {
    type Error = SpecError;
    fn try_from(s: String) -> Result<Self, SpecError> {
        Proposition::new(s)
    }
}

impl From<Proposition> for String {
    fn from(p: Proposition) -> String {
        p.0
    }
}

impl fmt::Display for Proposition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// Ordered, duplicate-free set of propositions. Position `i` is bit `i` of a
/// [`StateLabel`](crate::automaton::StateLabel).
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct PropositionSet {
    items: Vec<Proposition>,
    index: HashMap<Proposition, usize>,
}

impl PropositionSet {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts `p` if absent; returns its position.
    pub fn insert(&mut self, p: Proposition) -> usize {
        if let Some(&i) = self.index.get(&p) {
            return i;
        }
        let i = self.items.len();
        self.index.insert(p.clone(), i);
        self.items.push(p);
        i
    }

    pub fn position(&self, p: &Proposition) -> Option<usize> {
        self.index.get(p).copied()
    }

    pub fn position_of(&self, label: &str) -> Option<usize> {
        self.items.iter().position(|p| p.as_str() == label)
    }

    pub fn contains(&self, p: &Proposition) -> bool {
        self.index.contains_key(p)
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Proposition> {
        self.items.iter()
    }

    pub fn get(&self, i: usize) -> Option<&Proposition> {
        self.items.get(i)
    }

    pub fn as_slice(&self) -> &[Proposition] {
        &self.items
    }
}

impl FromIterator<Proposition> for PropositionSet {
    fn from_iter<I: IntoIterator<Item = Proposition>>(iter: I) -> Self {
        let mut set = PropositionSet::new();
        for p in iter {
            set.insert(p);
        }
        set
    }
}

/// Temporal-logic formula. `Implies`, `Always` and `Eventually` are surface
/// forms; [`SpecAst::normalize`] rewrites them into the core operators.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum SpecAst {
    True,
    False,
    Prop(Proposition),
    Not(Box<SpecAst>),
    And(Box<SpecAst>, Box<SpecAst>),
    Or(Box<SpecAst>, Box<SpecAst>),
    Implies(Box<SpecAst>, Box<SpecAst>),
    Next(Box<SpecAst>),
    Until(Box<SpecAst>, Box<SpecAst>),
    Always(Box<SpecAst>),
    Eventually(Box<SpecAst>),
}

impl SpecAst {
    /// Panics on an empty label; intended for literals in code and tests.
    pub fn prop(label: &str) -> SpecAst {
        SpecAst::Prop(Proposition::new(label).expect("non-empty proposition label"))
    }

    #[allow(clippy::should_implement_trait)]
    pub fn not(a: SpecAst) -> SpecAst {
        SpecAst::Not(Box::new(a))
    }

    pub fn and(l: SpecAst, r: SpecAst) -> SpecAst {
        SpecAst::And(Box::new(l), Box::new(r))
    }

    pub fn or(l: SpecAst, r: SpecAst) -> SpecAst {
        SpecAst::Or(Box::new(l), Box::new(r))
    }

    pub fn implies(l: SpecAst, r: SpecAst) -> SpecAst {
        SpecAst::Implies(Box::new(l), Box::new(r))
    }

    pub fn next(a: SpecAst) -> SpecAst {
        SpecAst::Next(Box::new(a))
    }

    pub fn until(l: SpecAst, r: SpecAst) -> SpecAst {
        SpecAst::Until(Box::new(l), Box::new(r))
    }

    pub fn always(a: SpecAst) -> SpecAst {
        SpecAst::Always(Box::new(a))
    }

    pub fn eventually(a: SpecAst) -> SpecAst {
        SpecAst::Eventually(Box::new(a))
    }

    /// Rewrites derived operators into `{p, ¬, ∧, ∨, X, U, True, False}`:
    /// `□φ ≡ ¬(True U ¬φ)`, `◇φ ≡ True U φ`, `φ → ψ ≡ ¬φ ∨ ψ`.
    pub fn normalize(&self) -> SpecAst {
        use SpecAst::*;
        match self {
            True => True,
            False => False,
            Prop(p) => Prop(p.clone()),
            Not(a) => SpecAst::not(a.normalize()),
            And(l, r) => SpecAst::and(l.normalize(), r.normalize()),
            Or(l, r) => SpecAst::or(l.normalize(), r.normalize()),
            Implies(l, r) => SpecAst::or(SpecAst::not(l.normalize()), r.normalize()),
            Next(a) => SpecAst::next(a.normalize()),
            Until(l, r) => SpecAst::until(l.normalize(), r.normalize()),
            Always(a) => SpecAst::not(SpecAst::until(True, SpecAst::not(a.normalize()))),
            Eventually(a) => SpecAst::until(True, a.normalize()),
        }
    }

    /// True when no derived operator occurs anywhere in the tree.
    pub fn is_core(&self) -> bool {
        use SpecAst::*;
        match self {
            True | False | Prop(_) => true,
            Not(a) | Next(a) => a.is_core(),
            And(l, r) | Or(l, r) | Until(l, r) => l.is_core() && r.is_core(),
            Implies(..) | Always(_) | Eventually(_) => false,
        }
    }

    pub fn is_temporal(&self) -> bool {
        matches!(self, SpecAst::Next(_) | SpecAst::Until(..) | SpecAst::Always(_) | SpecAst::Eventually(_))
    }

    /// Direct children, left to right.
    pub fn children(&self) -> Vec<&SpecAst> {
        use SpecAst::*;
        match self {
            True | False | Prop(_) => vec![],
            Not(a) | Next(a) | Always(a) | Eventually(a) => vec![a],
            And(l, r) | Or(l, r) | Implies(l, r) | Until(l, r) => vec![l, r],
        }
    }

    pub fn contains_temporal(&self) -> bool {
        self.is_temporal() || self.children().into_iter().any(SpecAst::contains_temporal)
    }

    /// Number of nodes.
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(SpecAst::size).sum::<usize>()
    }

    /// Canonical JSON form, e.g. `{"op":"until","left":…,"right":…}`.
    pub fn to_json(&self) -> Value {
        use SpecAst::*;
        let unary = |op: &str, a: &SpecAst| json!({"op": op, "arg": a.to_json()});
        let binary = |op: &str, l: &SpecAst, r: &SpecAst| json!({"op": op, "left": l.to_json(), "right": r.to_json()});
        match self {
            True => json!({"op": "true"}),
            False => json!({"op": "false"}),
            Prop(p) => json!({"op": "prop", "label": p.as_str()}),
            Not(a) => unary("not", a),
            Next(a) => unary("next", a),
            Always(a) => unary("always", a),
            Eventually(a) => unary("eventually", a),
            And(l, r) => binary("and", l, r),
            Or(l, r) => binary("or", l, r),
            Implies(l, r) => binary("implies", l, r),
            Until(l, r) => binary("until", l, r),
        }
    }

    fn precedence(&self) -> u8 {
        use SpecAst::*;
        match self {
            Until(..) => 1,
            Implies(..) => 2,
            Or(..) => 3,
            And(..) => 4,
            Not(_) | Next(_) | Always(_) | Eventually(_) => 5,
            True | False | Prop(_) => 6,
        }
    }

    fn fmt_prec(&self, f: &mut fmt::Formatter<'_>, min: u8) -> fmt::Result {
        use SpecAst::*;
        let wrap = self.precedence() < min;
        if wrap {
            f.write_str("(")?;
        }
        match self {
            True => f.write_str("True")?,
            False => f.write_str("False")?,
            Prop(p) => write_quoted(f, p.as_str())?,
            Not(a) => {
                f.write_str("!")?;
                a.fmt_prec(f, 5)?;
            }
            Next(a) => {
                f.write_str("X ")?;
                a.fmt_prec(f, 5)?;
            }
            Always(a) => {
                f.write_str("G ")?;
                a.fmt_prec(f, 5)?;
            }
            Eventually(a) => {
                f.write_str("F ")?;
                a.fmt_prec(f, 5)?;
            }
            Until(l, r) => {
                l.fmt_prec(f, 2)?;
                f.write_str(" U ")?;
                r.fmt_prec(f, 1)?;
            }
            Implies(l, r) => {
                l.fmt_prec(f, 3)?;
                f.write_str(" -> ")?;
                r.fmt_prec(f, 2)?;
            }
            Or(l, r) => {
                l.fmt_prec(f, 3)?;
                f.write_str(" | ")?;
                r.fmt_prec(f, 4)?;
            }
            And(l, r) => {
                l.fmt_prec(f, 4)?;
                f.write_str(" & ")?;
                r.fmt_prec(f, 5)?;
            }
        }
        if wrap {
            f.write_str(")")?;
        }
        Ok(())
    }
}

fn write_quoted(f: &mut fmt::Formatter<'_>, label: &str) -> fmt::Result {
    f.write_str("\"")?;
    for ch in label.chars() {
        match ch {
            '"' => f.write_str("\\\"")?,
            '\\' => f.write_str("\\\\")?,
            c => write!(f, "{c}")?,
        }
    }
    f.write_str("\"")
}

impl fmt::Display for SpecAst {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.fmt_prec(f, 0)
    }
}

/// Comparison operator of a probabilistic quantifier `P~t`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<")]
    Lt,
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">=")]
    Ge,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub fn holds<T: PartialOrd>(self, value: T, threshold: T) -> bool {
        match self {
            Comparator::Lt => value < threshold,
            Comparator::Le => value <= threshold,
            Comparator::Ge => value >= threshold,
            Comparator::Gt => value > threshold,
        }
    }

    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Le => "<=",
            Comparator::Ge => ">=",
            Comparator::Gt => ">",
        }
    }
}

impl fmt::Display for Comparator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.symbol())
    }
}

/// Root-level probabilistic quantifier `P~t [ f ]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbQuery {
    pub comparator: Comparator,
    pub lambda: f64,
}

impl ProbQuery {
    pub fn new(comparator: Comparator, lambda: f64) -> Result<Self, SpecError> {
        if !(0.0..=1.0).contains(&lambda) {
            return Err(SpecError::LambdaOutOfRange(lambda));
        }
        Ok(ProbQuery { comparator, lambda })
    }
}

/// A parsed specification: an optional root quantifier over a path formula,
/// kept both as written (`surface`) and normalized to core operators (`core`).
#[derive(Clone, Debug, PartialEq)]
pub struct Spec {
    query: Option<ProbQuery>,
    surface: SpecAst,
    core: SpecAst,
}

impl Spec {
    pub fn new(query: Option<ProbQuery>, surface: SpecAst) -> Self {
        let core = surface.normalize();
        Spec { query, surface, core }
    }

    pub fn query(&self) -> Option<ProbQuery> {
        self.query
    }

    pub fn surface(&self) -> &SpecAst {
        &self.surface
    }

    /// The normalized path formula.
    pub fn core(&self) -> &SpecAst {
        &self.core
    }

    pub fn propositions(&self) -> PropositionSet {
        propositions_of(&self.surface)
    }

    pub fn to_json(&self) -> Value {
        let mut out = json!({
            "v": 1,
            "surface": self.surface.to_json(),
            "core": self.core.to_json(),
        });
        if let Some(q) = self.query {
            out["query"] = json!({"comparator": q.comparator.symbol(), "lambda": q.lambda});
        }
        out
    }
}

impl fmt::Display for Spec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.query {
            Some(q) => write!(f, "P{}{} [{}]", q.comparator, q.lambda, self.surface),
            None => write!(f, "{}", self.surface),
        }
    }
}

/// Propositions in order of first occurrence (left-to-right traversal).
pub fn propositions_of(ast: &SpecAst) -> PropositionSet {
    fn walk(ast: &SpecAst, out: &mut PropositionSet) {
        if let SpecAst::Prop(p) = ast {
            out.insert(p.clone());
        }
        for c in ast.children() {
            walk(c, out);
        }
    }
    let mut out = PropositionSet::new();
    walk(ast, &mut out);
    out
}

/// Propositions with at least one occurrence under an even number of
/// negations (the left side of `→` counts as negated).
pub fn positive_propositions(ast: &SpecAst) -> PropositionSet {
    fn walk(ast: &SpecAst, positive: bool, out: &mut PropositionSet) {
        use SpecAst::*;
        match ast {
            True | False => {}
            Prop(p) => {
                if positive {
                    out.insert(p.clone());
                }
            }
            Not(a) => walk(a, !positive, out),
            Implies(l, r) => {
                walk(l, !positive, out);
                walk(r, positive, out);
            }
            _ => {
                for c in ast.children() {
                    walk(c, positive, out);
                }
            }
        }
    }
    let mut out = PropositionSet::new();
    walk(ast, true, &mut out);
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FirstOrderOp {
    And,
    Or,
    Not,
}

impl fmt::Display for FirstOrderOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FirstOrderOp::And => "∧",
            FirstOrderOp::Or => "∨",
            FirstOrderOp::Not => "¬",
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum TemporalOp {
    Always,
    Eventually,
    Next,
    Until,
}

impl fmt::Display for TemporalOp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TemporalOp::Always => "□",
            TemporalOp::Eventually => "◇",
            TemporalOp::Next => "X",
            TemporalOp::Until => "U",
        })
    }
}

/// First-order (`psi`) and temporal (`theta`) operators occurring in a formula.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OperatorSets {
    pub psi: BTreeSet<FirstOrderOp>,
    pub theta: BTreeSet<TemporalOp>,
}

/// Operators as they occur in `ast`. Pass `spec.surface()` for the written
/// form or `spec.core()` for the normalized one. `→` counts as `¬` and `∨`.
pub fn operator_sets(ast: &SpecAst) -> OperatorSets {
    fn walk(ast: &SpecAst, out: &mut OperatorSets) {
        use SpecAst::*;
        match ast {
            Not(_) => {
                out.psi.insert(FirstOrderOp::Not);
            }
            And(..) => {
                out.psi.insert(FirstOrderOp::And);
            }
            Or(..) => {
                out.psi.insert(FirstOrderOp::Or);
            }
            Implies(..) => {
                out.psi.insert(FirstOrderOp::Not);
                out.psi.insert(FirstOrderOp::Or);
            }
            Next(_) => {
                out.theta.insert(TemporalOp::Next);
            }
            Until(..) => {
                out.theta.insert(TemporalOp::Until);
            }
            Always(_) => {
                out.theta.insert(TemporalOp::Always);
            }
            Eventually(_) => {
                out.theta.insert(TemporalOp::Eventually);
            }
            True | False | Prop(_) => {}
        }
        for c in ast.children() {
            walk(c, out);
        }
    }
    let mut out = OperatorSets::default();
    walk(ast, &mut out);
    out
}
