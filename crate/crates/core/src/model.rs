//! Network instances: a finite set of random states, each with a finite list
//! of control actions carrying a cost, an arrival vector and a service vector.
//!
//! Instances are immutable once built. The per-action tables are flattened
//! into contiguous arrays at construction so the per-slot decision rules and
//! the dual evaluations can scan them without chasing pointers.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Index of an action within its state's action list (declaration order).
pub type ActionId = usize;
/// Index of a state within the instance's state list.
pub type StateId = usize;

/// Tolerance on the total probability mass of a distribution.
pub const PROBABILITY_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionSpec {
    pub cost: f64,
    pub arrivals: Vec<f64>,
    pub services: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateSpec {
    pub probability: f64,
    pub actions: Vec<ActionSpec>,
}

/// On-disk form of an instance. Derived bounds are never stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InstanceDocument {
    r: usize,
    states: Vec<StateSpec>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    NoQueues,
    NoStates,
    ProbabilitySum { sum: f64 },
    ProbabilityRange { state: StateId, probability: f64 },
    EmptyActionSet { state: StateId },
    Dimension { state: StateId, action: ActionId, field: &'static str, len: usize },
    Negative { state: StateId, action: ActionId, field: &'static str, value: f64 },
    NonFinite { state: StateId, action: ActionId, field: &'static str },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::NoQueues => write!(f, "queue count r must be at least 1"),
            Violation::NoStates => write!(f, "instance has no states"),
            Violation::ProbabilitySum { sum } => write!(f, "probability sum {sum}"),
            Violation::ProbabilityRange { state, probability } => {
                write!(f, "state {state}: probability {probability} outside [0, 1]")
            }
            Violation::EmptyActionSet { state } => write!(f, "state {state}: empty action set"),
            Violation::Dimension { state, action, field, len } => {
                write!(f, "state {state} action {action}: {field} has {len} entries")
            }
            Violation::Negative { state, action, field, value } => {
                write!(f, "state {state} action {action}: negative {field} entry {value}")
            }
            Violation::NonFinite { state, action, field } => {
                write!(f, "state {state} action {action}: non-finite {field} entry")
            }
        }
    }
}

/// Every invariant an instance violates. Empty means valid.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.violations.iter().map(ToString::to_string).collect();
        f.write_str(&msgs.join("; "))
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error{}: {message}", location(*.line, *.column))]
    Parse { line: Option<usize>, column: Option<usize>, message: String },
    #[error("invalid instance: {0}")]
    Invalid(ValidationReport),
    #[error("invalid channel distribution: {0}")]
    ChannelDistribution(String),
    #[error("serialization failed: {0}")]
    Serialize(String),
}

fn location(line: Option<usize>, column: Option<usize>) -> String {
    match (line, column) {
        (Some(l), Some(c)) => format!(" at line {l}, column {c}"),
        (Some(l), None) => format!(" at line {l}"),
        _ => String::new(),
    }
}

/// A validated-or-not network model with derived bounds and flattened tables.
#[derive(Debug, Clone, PartialEq)]
pub struct NetworkInstance {
    r: usize,
    states: Vec<StateSpec>,
    delta_max: f64,
    f_max: f64,
    b: f64,
    // Flattened tables: action k of state i lives at offsets[i] + k.
    offsets: Vec<usize>,
    costs: Vec<f64>,
    // (A - mu) per flattened action, r entries each.
    drifts: Vec<f64>,
}

impl NetworkInstance {
    /// Builds and validates. Any violated invariant is an error.
    pub fn new(r: usize, states: Vec<StateSpec>) -> Result<Self, ModelError> {
        let inst = Self::unchecked(r, states);
        let report = validate(&inst);
        if report.is_valid() {
            Ok(inst)
        } else {
            Err(ModelError::Invalid(report))
        }
    }

    /// Builds without validating, so [`validate`] can report on broken input.
    /// Tables are only meaningful for valid instances.
    pub fn unchecked(r: usize, states: Vec<StateSpec>) -> Self {
        let mut delta_max: f64 = 0.0;
        let mut f_max: f64 = 0.0;
        let mut offsets = Vec::with_capacity(states.len() + 1);
        let mut costs = Vec::new();
        let mut drifts = Vec::new();
        for s in &states {
            offsets.push(costs.len());
            for a in &s.actions {
                f_max = f_max.max(a.cost);
                delta_max = delta_max.max(a.cost.abs());
                for v in a.arrivals.iter().chain(&a.services) {
                    delta_max = delta_max.max(v.abs());
                }
                costs.push(a.cost);
                for j in 0..r {
                    let arr = a.arrivals.get(j).copied().unwrap_or(0.0);
                    let srv = a.services.get(j).copied().unwrap_or(0.0);
                    drifts.push(arr - srv);
                }
            }
        }
        offsets.push(costs.len());
        let b = r as f64 / 2.0 * delta_max * delta_max;
        Self { r, states, delta_max, f_max, b, offsets, costs, drifts }
    }

    pub fn r(&self) -> usize {
        self.r
    }

    pub fn num_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[StateSpec] {
        &self.states
    }

    pub fn state(&self, id: StateId) -> Option<&StateSpec> {
        self.states.get(id)
    }

    pub fn delta_max(&self) -> f64 {
        self.delta_max
    }

    pub fn f_max(&self) -> f64 {
        self.f_max
    }

    /// `(r/2)·δ_max²`.
    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn num_actions(&self, state: StateId) -> usize {
        self.offsets[state + 1] - self.offsets[state]
    }

    pub fn total_actions(&self) -> usize {
        self.costs.len()
    }

    pub fn probabilities(&self) -> Vec<f64> {
        self.states.iter().map(|s| s.probability).collect()
    }

    /// Cost of every action of `state`, in declaration order.
    #[inline]
    pub fn costs_of(&self, state: StateId) -> &[f64] {
        &self.costs[self.offsets[state]..self.offsets[state + 1]]
    }

    /// `A − μ` of every action of `state`, `r` entries per action.
    #[inline]
    pub fn drifts_of(&self, state: StateId) -> &[f64] {
        let r = self.r;
        &self.drifts[self.offsets[state] * r..self.offsets[state + 1] * r]
    }

    /// `A − μ` of a single action.
    #[inline]
    pub fn drift(&self, state: StateId, action: ActionId) -> &[f64] {
        let k = self.offsets[state] + action;
        &self.drifts[k * self.r..(k + 1) * self.r]
    }

    pub fn action(&self, state: StateId, action: ActionId) -> &ActionSpec {
        &self.states[state].actions[action]
    }

    /// Mean arrival rate per queue under the instance's own distribution,
    /// when arrivals do not depend on the chosen action. `None` otherwise.
    pub fn mean_arrival_rates(&self) -> Option<Vec<f64>> {
        let mut lambda = vec![0.0; self.r];
        for s in &self.states {
            let first = &s.actions.first()?.arrivals;
            if s.actions.iter().any(|a| &a.arrivals != first) {
                return None;
            }
            for (l, a) in lambda.iter_mut().zip(first) {
                *l += s.probability * a;
            }
        }
        Some(lambda)
    }

    /// Same instance with the state probabilities replaced.
    pub fn with_probabilities(&self, dist: &[f64]) -> Result<Self, ModelError> {
        let mut states = self.states.clone();
        for (s, &p) in states.iter_mut().zip(dist) {
            s.probability = p;
        }
        if dist.len() != states.len() {
            return Err(ModelError::Invalid(ValidationReport {
                violations: vec![Violation::ProbabilitySum { sum: dist.iter().sum() }],
            }));
        }
        Self::new(self.r, states)
    }

    /// Serializes to the instance document schema (`r`, `states`).
    pub fn to_document(&self) -> Result<String, ModelError> {
        let doc = InstanceDocument { r: self.r, states: self.states.clone() };
        toml::to_string(&doc).map_err(|e| ModelError::Serialize(e.to_string()))
    }
}

/// Checks every instance invariant and lists what fails.
pub fn validate(instance: &NetworkInstance) -> ValidationReport {
    let mut violations = Vec::new();
    if instance.r == 0 {
        violations.push(Violation::NoQueues);
    }
    if instance.states.is_empty() {
        violations.push(Violation::NoStates);
    }
    let mut sum = 0.0;
    for (i, s) in instance.states.iter().enumerate() {
        sum += s.probability;
        if !(0.0..=1.0).contains(&s.probability) {
            violations.push(Violation::ProbabilityRange { state: i, probability: s.probability });
        }
        if s.actions.is_empty() {
            violations.push(Violation::EmptyActionSet { state: i });
        }
        for (k, a) in s.actions.iter().enumerate() {
            check_entries(&mut violations, i, k, "cost", std::slice::from_ref(&a.cost));
            for (field, v) in [("arrivals", &a.arrivals), ("services", &a.services)] {
                if v.len() != instance.r {
                    violations.push(Violation::Dimension { state: i, action: k, field, len: v.len() });
                }
                check_entries(&mut violations, i, k, field, v);
            }
        }
    }
    if !instance.states.is_empty() && (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        violations.push(Violation::ProbabilitySum { sum });
    }
    ValidationReport { violations }
}

fn check_entries(out: &mut Vec<Violation>, state: StateId, action: ActionId, field: &'static str, v: &[f64]) {
    for &x in v {
        if !x.is_finite() {
            out.push(Violation::NonFinite { state, action, field });
        } else if x < 0.0 {
            out.push(Violation::Negative { state, action, field, value: x });
        }
    }
}

/// Parses an instance document and validates it.
pub fn load_instance(text: &str) -> Result<NetworkInstance, ModelError> {
    let doc: InstanceDocument = toml::from_str(text).map_err(|e| parse_error(text, &e))?;
    NetworkInstance::new(doc.r, doc.states)
}

pub(crate) fn parse_error(text: &str, e: &toml::de::Error) -> ModelError {
    let (line, column) = match e.span() {
        Some(span) => {
            let before = &text[..span.start.min(text.len())];
            let line = before.matches('\n').count() + 1;
            let column = before.len() - before.rfind('\n').map_or(0, |p| p + 1) + 1;
            (Some(line), Some(column))
        }
        None => (None, None),
    };
    ModelError::Parse { line, column, message: e.message().to_string() }
}

/// Arrival outcomes per queue in the built-in two-queue system.
pub const TWO_QUEUE_ARRIVALS: [f64; 2] = [0.0, 2.0];
/// Probability that queue j receives a batch of 2 packets.
pub const TWO_QUEUE_ARRIVAL_PROB: [f64; 2] = [0.3, 0.4];
pub const TWO_QUEUE_CHANNELS: [f64; 4] = [0.0, 2.0, 4.0, 6.0];
pub const TWO_QUEUE_POWERS: [f64; 5] = [0.0, 0.75, 1.5, 2.25, 3.0];
pub const UNIFORM_CHANNELS: [f64; 4] = [0.25, 0.25, 0.25, 0.25];
pub const UNBALANCED_CHANNELS: [f64; 4] = [0.1, 0.4, 0.4, 0.1];

/// State index of the two-queue system for arrival outcome indices `a`
/// (0 → no arrival, 1 → two packets) and channel indices `c` into
/// [`TWO_QUEUE_CHANNELS`].
pub fn two_queue_state(a: [usize; 2], c: [usize; 2]) -> StateId {
    ((a[0] * 2 + a[1]) * 4 + c[0]) * 4 + c[1]
}

/// Action index for serving `queue` (0 or 1) at power index `p` into
/// [`TWO_QUEUE_POWERS`].
pub fn two_queue_action(queue: usize, p: usize) -> ActionId {
    queue * TWO_QUEUE_POWERS.len() + p
}

/// The two-queue downlink: Bernoulli batch arrivals, four channel levels per
/// queue drawn independently from `channel_dist`, and a server that puts one
/// of five power levels on one queue per slot with rate `ln(1 + C·P)`.
pub fn two_queue_example(channel_dist: [f64; 4]) -> Result<NetworkInstance, ModelError> {
    if channel_dist.iter().any(|p| !p.is_finite() || *p < 0.0) {
        return Err(ModelError::ChannelDistribution(format!("entries must be non-negative, got {channel_dist:?}")));
    }
    let sum: f64 = channel_dist.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE {
        return Err(ModelError::ChannelDistribution(format!("entries sum to {sum}")));
    }
    let arrival_prob = |j: usize, a: usize| {
        if a == 1 {
            TWO_QUEUE_ARRIVAL_PROB[j]
        } else {
            1.0 - TWO_QUEUE_ARRIVAL_PROB[j]
        }
    };
    let mut states = Vec::with_capacity(64);
    for a1 in 0..2 {
        for a2 in 0..2 {
            for c1 in 0..4 {
                for c2 in 0..4 {
                    let probability = arrival_prob(0, a1) * arrival_prob(1, a2) * channel_dist[c1] * channel_dist[c2];
                    let arrivals = vec![TWO_QUEUE_ARRIVALS[a1], TWO_QUEUE_ARRIVALS[a2]];
                    let channels = [TWO_QUEUE_CHANNELS[c1], TWO_QUEUE_CHANNELS[c2]];
                    let mut actions = Vec::with_capacity(10);
                    for served in 0..2 {
                        for &power in &TWO_QUEUE_POWERS {
                            let mut services = vec![0.0; 2];
                            services[served] = (1.0 + channels[served] * power).ln();
                            actions.push(ActionSpec { cost: power, arrivals: arrivals.clone(), services });
                        }
                    }
                    states.push(StateSpec { probability, actions });
                }
            }
        }
    }
    NetworkInstance::new(2, states)
}

/// Random instance with `r` queues, `num_states` states and 1 to
/// `max_actions` actions per state. Costs lie in `[0, 3)`, arrivals and
/// services in `[0, 2)`, and probabilities are normalized uniform weights.
pub fn random_instance<R: rand::Rng + ?Sized>(
    rng: &mut R,
    r: usize,
    num_states: usize,
    max_actions: usize,
) -> NetworkInstance {
    let weights: Vec<f64> = (0..num_states).map(|_| rng.random_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    let states = weights
        .iter()
        .map(|w| {
            let n = rng.random_range(1..=max_actions.max(1));
            let actions = (0..n)
                .map(|_| ActionSpec {
                    cost: rng.random_range(0.0..3.0),
                    arrivals: (0..r).map(|_| rng.random_range(0.0..2.0)).collect(),
                    services: (0..r).map(|_| rng.random_range(0.0..2.0)).collect(),
                })
                .collect();
            StateSpec { probability: w / total, actions }
        })
        .collect();
    NetworkInstance::unchecked(r, states)
}
