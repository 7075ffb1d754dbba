//! Layered probabilistic automaton built frame by frame.
//!
//! Each layer holds the truth assignments (labels) that survived pruning for
//! one frame. Links between consecutive layers are either `Broadcast`, where
//! every source state moves to a target with the target's entry probability,
//! or `Explicit` per-source rows (used for hand-built and random automata).

use serde_json::{json, Value};
use thiserror::Error;

use crate::annotation::FrameAnnotation;
use crate::calibration::Calibrator;
use crate::scalar::{compensated_sum, Accumulator, Scalar};
use crate::spec_lang::{Proposition, PropositionSet};
use crate::validation::frame_confidences;

pub const DEFAULT_PROPOSITION_CAP: usize = 10;
pub const DEFAULT_PRUNE_EPSILON: f64 = 1e-12;
/// Hard limit imposed by the `u32` label encoding.
pub const MAX_PROPOSITIONS: usize = 24;

#[derive(Debug, Error)]
pub enum AutomatonError {
    #[error("state explosion: {count} propositions exceed the cap of {cap} ({} labels per layer)", 1u64 << (*cap).min(63))]
    StateExplosion { count: usize, cap: usize },
    #[error("no viable states for frame {frame}: every label was pruned")]
    NoViableStates { frame: u64 },
    #[error("frame {frame} does not follow the last layer's frame {last}")]
    NotIncreasing { frame: u64, last: u64 },
    #[error("automaton invariant violated: {0}")]
    Invariant(String),
    #[error("automaton format: {0}")]
    Format(String),
}

/// Truth assignment over an ordered proposition set; bit `i` is proposition `i`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct StateLabel(pub u32);

impl StateLabel {
    pub fn contains(self, i: usize) -> bool {
        self.0 >> i & 1 == 1
    }

    pub fn from_indices(indices: impl IntoIterator<Item = usize>) -> Self {
        StateLabel(indices.into_iter().fold(0, |m, i| m | 1 << i))
    }

    pub fn labels(self, props: &PropositionSet) -> Vec<&str> {
        props.iter().enumerate().filter(|(i, _)| self.contains(*i)).map(|(_, p)| p.as_str()).collect()
    }

    pub fn from_labels<S: AsRef<str>>(labels: &[S], props: &PropositionSet) -> Result<Self, AutomatonError> {
        let mut mask = 0;
        for l in labels {
            let i = props
                .position_of(l.as_ref())
                .ok_or_else(|| AutomatonError::Format(format!("unknown proposition '{}'", l.as_ref())))?;
            mask |= 1 << i;
        }
        Ok(StateLabel(mask))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Link<T> {
    Broadcast,
    /// `rows[j]` lists `(target index, probability)` for source state `j` of the previous layer.
    Explicit(Vec<Vec<(usize, T)>>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Layer<T> {
    pub frame_index: u64,
    /// Labels with their entry probability (for explicit links, the marginal).
    pub states: Vec<(StateLabel, T)>,
    /// How the previous layer connects into this one; ignored for the first layer.
    pub link: Link<T>,
}

impl<T: Scalar> Layer<T> {
    pub fn width(&self) -> usize {
        self.states.len()
    }
}

fn tolerance<T: Scalar>() -> f64 {
    (64.0 * T::epsilon().as_f64()).max(1e-9)
}

/// Product distribution over all `2^n` labels, indexed by label bitmask.
pub fn state_distribution<T: Scalar>(g: &[T]) -> Vec<T> {
    let mut dist = vec![T::one()];
    for (i, &gi) in g.iter().enumerate() {
        let mut next = vec![T::zero(); dist.len() * 2];
        for (mask, &p) in dist.iter().enumerate() {
            next[mask] = p * (T::one() - gi);
            next[mask | 1 << i] = p * gi;
        }
        dist = next;
    }
    dist
}

/// Label distribution of one frame under the calibrated confidences of `props`.
pub fn state_probabilities<T: Scalar>(
    frame: &FrameAnnotation,
    props: &PropositionSet,
    calibrator: &Calibrator<T>,
    cap: usize,
) -> Result<Vec<(StateLabel, T)>, AutomatonError> {
    check_cap(props.len(), cap)?;
    let g = frame_confidences(frame, props, calibrator);
    Ok(state_distribution(&g).into_iter().enumerate().map(|(m, p)| (StateLabel(m as u32), p)).collect())
}

fn check_cap(count: usize, cap: usize) -> Result<(), AutomatonError> {
    if count > cap || count > MAX_PROPOSITIONS {
        return Err(AutomatonError::StateExplosion { count, cap: cap.min(MAX_PROPOSITIONS) });
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct ProbabilisticAutomaton<T> {
    props: PropositionSet,
    layers: Vec<Layer<T>>,
}

impl<T: Scalar> ProbabilisticAutomaton<T> {
    pub fn new(props: PropositionSet) -> Result<Self, AutomatonError> {
        Self::with_cap(props, DEFAULT_PROPOSITION_CAP)
    }

    pub fn with_cap(props: PropositionSet, cap: usize) -> Result<Self, AutomatonError> {
        check_cap(props.len(), cap)?;
        Ok(ProbabilisticAutomaton { props, layers: Vec::new() })
    }

    pub fn propositions(&self) -> &PropositionSet {
        &self.props
    }

    pub fn layers(&self) -> &[Layer<T>] {
        &self.layers
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.layers.first().map(|l| l.frame_index)
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.layers.last().map(|l| l.frame_index)
    }

    pub fn reset(&mut self) {
        self.layers.clear();
    }

    pub fn append_frame(
        &mut self,
        frame: &FrameAnnotation,
        calibrator: &Calibrator<T>,
        prune_epsilon: T,
    ) -> Result<&Layer<T>, AutomatonError> {
        let g = frame_confidences(frame, &self.props, calibrator);
        self.append_confidences(frame.frame_index, &g, prune_epsilon)
    }

    /// Appends a frame given calibrated confidences aligned with the proposition set.
    pub fn append_confidences(
        &mut self,
        frame_index: u64,
        g: &[T],
        prune_epsilon: T,
    ) -> Result<&Layer<T>, AutomatonError> {
        if g.len() != self.props.len() {
            return Err(AutomatonError::Format(format!(
                "{} confidences for {} propositions",
                g.len(),
                self.props.len()
            )));
        }
        let dist = state_distribution(g);
        self.append_distribution(
            frame_index,
            dist.into_iter().enumerate().map(|(m, p)| (StateLabel(m as u32), p)),
            prune_epsilon,
        )
    }

    /// Prunes labels with probability `<= prune_epsilon`, renormalizes the
    /// rest and broadcasts them from every state of the previous layer.
    pub fn append_distribution(
        &mut self,
        frame_index: u64,
        dist: impl IntoIterator<Item = (StateLabel, T)>,
        prune_epsilon: T,
    ) -> Result<&Layer<T>, AutomatonError> {
        self.check_order(frame_index)?;
        let mut states: Vec<(StateLabel, T)> = dist.into_iter().filter(|(_, p)| *p > prune_epsilon).collect();
        let total = compensated_sum(states.iter().map(|s| s.1));
        if states.is_empty() || !(total > T::zero()) || !total.is_finite() {
            return Err(AutomatonError::NoViableStates { frame: frame_index });
        }
        for s in &mut states {
            s.1 = s.1 / total;
        }
        self.layers.push(Layer { frame_index, states, link: Link::Broadcast });
        self.debug_audit_last();
        Ok(self.layers.last().expect("just pushed"))
    }

    /// Appends a layer with explicit per-source transition rows. Entry
    /// probabilities are derived as the marginal of the previous layer.
    pub fn push_explicit_layer(
        &mut self,
        frame_index: u64,
        labels: Vec<StateLabel>,
        rows: Vec<Vec<(usize, T)>>,
    ) -> Result<&Layer<T>, AutomatonError> {
        self.check_order(frame_index)?;
        let prev = self
            .layers
            .last()
            .ok_or_else(|| AutomatonError::Format("explicit transitions need a previous layer".into()))?;
        if rows.len() != prev.width() {
            return Err(AutomatonError::Format(format!("{} rows for {} source states", rows.len(), prev.width())));
        }
        let mut marginal = vec![Accumulator::new(); labels.len()];
        for (j, row) in rows.iter().enumerate() {
            for &(k, p) in row {
                if k >= labels.len() {
                    return Err(AutomatonError::Format(format!("transition target {k} out of range")));
                }
                marginal[k].add(prev.states[j].1 * p);
            }
        }
        // Rounding can push a marginal a few ulps past 1.
        let states = labels.into_iter().zip(marginal).map(|(l, m)| (l, m.value().min(T::one()))).collect();
        self.layers.push(Layer { frame_index, states, link: Link::Explicit(rows) });
        let last = self.layers.len() - 1;
        if let Err(e) = self.audit_layer(last) {
            self.layers.pop();
            return Err(e);
        }
        Ok(self.layers.last().expect("just pushed"))
    }

    fn check_order(&self, frame_index: u64) -> Result<(), AutomatonError> {
        match self.last_frame() {
            Some(last) if frame_index <= last => Err(AutomatonError::NotIncreasing { frame: frame_index, last }),
            _ => Ok(()),
        }
    }

    fn debug_audit_last(&self) {
        if cfg!(debug_assertions) {
            if let Err(e) = self.audit_layer(self.layers.len() - 1) {
                panic!("{e}");
            }
        }
    }

    /// Outgoing transitions of state `j` in layer `i`, materialized.
    pub fn transitions_from(&self, i: usize, j: usize) -> Vec<(usize, T)> {
        match self.layers.get(i + 1) {
            None => Vec::new(),
            Some(next) => match &next.link {
                Link::Broadcast => next.states.iter().enumerate().map(|(k, s)| (k, s.1)).collect(),
                Link::Explicit(rows) => rows[j].clone(),
            },
        }
    }

    /// Checks one layer and the link into it.
    pub fn audit_layer(&self, i: usize) -> Result<(), AutomatonError> {
        let tol = tolerance::<T>();
        let layer = &self.layers[i];
        let bad = |m: String| Err(AutomatonError::Invariant(format!("layer {i} (frame {}): {m}", layer.frame_index)));
        let full = if self.props.len() >= 32 { u32::MAX } else { (1u32 << self.props.len()) - 1 };
        let mut entry = Accumulator::new();
        for (label, p) in &layer.states {
            if label.0 & !full != 0 {
                return bad(format!("label {:#b} outside the proposition set", label.0));
            }
            if !(p.as_f64() >= -tol && p.as_f64() <= 1.0 + tol) {
                return bad(format!("entry probability {p} outside [0,1]"));
            }
            entry.add(*p);
        }
        if (entry.value().as_f64() - 1.0).abs() > tol {
            return bad(format!("entry probabilities sum to {}", entry.value()));
        }
        if i > 0 {
            if let Link::Explicit(rows) = &layer.link {
                let prev_width = self.layers[i - 1].width();
                if rows.len() != prev_width {
                    return bad(format!("{} transition rows for {prev_width} source states", rows.len()));
                }
                for (j, row) in rows.iter().enumerate() {
                    let mut out = Accumulator::new();
                    for &(k, p) in row {
                        if k >= layer.width() || !(p.as_f64() >= -tol && p.as_f64() <= 1.0 + tol) {
                            return bad(format!("bad transition ({j} -> {k}, {p})"));
                        }
                        out.add(p);
                    }
                    if (out.value().as_f64() - 1.0).abs() > tol {
                        return bad(format!("outgoing probabilities of state {j} sum to {}", out.value()));
                    }
                }
            }
        }
        Ok(())
    }

    pub fn audit(&self) -> Result<(), AutomatonError> {
        for i in 0..self.layers.len() {
            self.audit_layer(i)?;
        }
        Ok(())
    }

    /// Number of root-to-leaf paths with non-zero transition entries; saturates at `u128::MAX`.
    pub fn path_count(&self) -> u128 {
        let Some(first) = self.layers.first() else { return 0 };
        let mut counts: Vec<u128> = vec![1; first.width()];
        for layer in &self.layers[1..] {
            let mut next = vec![0u128; layer.width()];
            match &layer.link {
                Link::Broadcast => {
                    let total = counts.iter().fold(0u128, |a, &c| a.saturating_add(c));
                    next.iter_mut().for_each(|n| *n = total);
                }
                Link::Explicit(rows) => {
                    for (j, row) in rows.iter().enumerate() {
                        for &(k, _) in row {
                            next[k] = next[k].saturating_add(counts[j]);
                        }
                    }
                }
            }
            counts = next;
        }
        counts.iter().fold(0u128, |a, &c| a.saturating_add(c))
    }

    /// Debug JSON: `{"v":1,"propositions":[..],"layers":[{"frame":..,"states":[{"label":[..],"p":..}],"transitions":[[[k,p],..],..]}]}`.
    /// Layers without `transitions` are broadcast.
    pub fn to_json(&self) -> Value {
        let layers: Vec<Value> = self
            .layers
            .iter()
            .enumerate()
            .map(|(i, l)| {
                let states: Vec<Value> = l
                    .states
                    .iter()
                    .map(|(label, p)| json!({"label": label.labels(&self.props), "p": p.as_f64()}))
                    .collect();
                let mut obj = json!({"frame": l.frame_index, "states": states});
                if let (true, Link::Explicit(rows)) = (i > 0, &l.link) {
                    let rows: Vec<Value> = rows
                        .iter()
                        .map(|r| Value::Array(r.iter().map(|&(k, p)| json!([k, p.as_f64()])).collect()))
                        .collect();
                    obj["transitions"] = Value::Array(rows);
                }
                obj
            })
            .collect();
        let props: Vec<&str> = self.props.iter().map(Proposition::as_str).collect();
        json!({"v": 1, "propositions": props, "layers": layers})
    }

    pub fn from_json(value: &Value) -> Result<Self, AutomatonError> {
        let fmt = |m: &str| AutomatonError::Format(m.to_string());
        if let Some(v) = value.get("v") {
            if v.as_u64() != Some(1) {
                return Err(fmt("unsupported schema version"));
            }
        }
        let props: PropositionSet = value
            .get("propositions")
            .and_then(Value::as_array)
            .ok_or_else(|| fmt("missing 'propositions' array"))?
            .iter()
            .map(|p| {
                p.as_str()
                    .and_then(|s| Proposition::new(s).ok())
                    .ok_or_else(|| fmt("propositions must be non-empty strings"))
            })
            .collect::<Result<_, _>>()?;
        let mut a = ProbabilisticAutomaton::with_cap(props, MAX_PROPOSITIONS)?;
        let layers = value.get("layers").and_then(Value::as_array).ok_or_else(|| fmt("missing 'layers' array"))?;
        for (i, l) in layers.iter().enumerate() {
            let frame = l.get("frame").and_then(Value::as_u64).ok_or_else(|| fmt("layer without integer 'frame'"))?;
            let states = l.get("states").and_then(Value::as_array).ok_or_else(|| fmt("layer without 'states'"))?;
            let mut parsed = Vec::with_capacity(states.len());
            for s in states {
                let labels: Vec<&str> = s
                    .get("label")
                    .and_then(Value::as_array)
                    .ok_or_else(|| fmt("state without 'label' list"))?
                    .iter()
                    .map(|x| x.as_str().ok_or_else(|| fmt("labels must be strings")))
                    .collect::<Result<_, _>>()?;
                let p = s.get("p").and_then(Value::as_f64).ok_or_else(|| fmt("state without numeric 'p'"))?;
                parsed.push((StateLabel::from_labels(&labels, &a.props)?, T::lit(p)));
            }
            match l.get("transitions") {
                Some(rows) if i > 0 => {
                    let rows = rows
                        .as_array()
                        .ok_or_else(|| fmt("'transitions' must be an array"))?
                        .iter()
                        .map(|r| {
                            r.as_array()
                                .ok_or_else(|| fmt("transition row must be an array"))?
                                .iter()
                                .map(|e| match e.as_array().map(Vec::as_slice) {
                                    Some([k, p]) => match (k.as_u64(), p.as_f64()) {
                                        (Some(k), Some(p)) => Ok((k as usize, T::lit(p))),
                                        _ => Err(fmt("transition entries are [target, probability]")),
                                    },
                                    _ => Err(fmt("transition entries are [target, probability]")),
                                })
                                .collect::<Result<Vec<_>, _>>()
                        })
                        .collect::<Result<Vec<_>, _>>()?;
                    a.push_explicit_layer(frame, parsed.iter().map(|s| s.0).collect(), rows)?;
                }
                Some(_) => return Err(fmt("the first layer cannot have transitions")),
                None => {
                    a.check_order(frame)?;
                    a.layers.push(Layer { frame_index: frame, states: parsed, link: Link::Broadcast });
                    a.audit_layer(a.layers.len() - 1)?;
                }
            }
        }
        Ok(a)
    }
}
