//! Dual function of the deterministic problem and everything that works on it.
//!
//! For a state distribution `π` and penalty weight `V`,
//!
//! ```text
//! g(γ) = Σ_i π_i · min_x { V·f(s_i, x) + Σ_j γ_j (A_j(s_i, x) − μ_j(s_i, x)) }
//! ```
//!
//! is concave and piecewise linear in `γ` because every action set is finite.
//! [`maximize_dual`] finds its maximizer over `γ ⪰ 0`; [`primal_oracle`] and
//! [`max_slack`] solve the matching linear programs over randomized policies
//! by an independent route (dense simplex).

mod analysis;
mod oracle;
mod simplex;
mod solver;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{ActionId, NetworkInstance, StateId, PROBABILITY_TOLERANCE};

pub use analysis::{estimate_polyhedral_rho, lemma1_xi, lemma6_bound, AnalysisConstants, OracleSummary};
pub use oracle::{max_slack, primal_oracle, PrimalSolution, RandomizedPolicy};
pub use simplex::{LinearProgram, LpOutcome};
pub use solver::{maximize_dual, DualSolution, DualSolverConfig, StepRule};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DualError {
    #[error("unknown state {0}")]
    UnknownState(StateId),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },
    #[error("distribution sums to {0}, expected 1")]
    Distribution(f64),
    #[error("deterministic problem is infeasible for this distribution")]
    Infeasible,
    #[error("dual function is unbounded above (no stabilizing policy)")]
    Unbounded,
    #[error("invalid solver configuration: {0}")]
    Config(String),
}

/// A Lagrange multiplier estimate, one entry per queue.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Multiplier(pub Vec<f64>);

impl Multiplier {
    pub fn zeros(r: usize) -> Self {
        Multiplier(vec![0.0; r])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn distance(&self, other: &[f64]) -> f64 {
        distance(&self.0, other)
    }

    pub fn scaled(&self, k: f64) -> Self {
        Multiplier(self.0.iter().map(|x| x * k).collect())
    }

    pub fn is_nonnegative(&self) -> bool {
        self.0.iter().all(|&x| x >= 0.0)
    }
}

impl From<Vec<f64>> for Multiplier {
    fn from(v: Vec<f64>) -> Self {
        Multiplier(v)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Minimum of `V·f + γ·(A − μ)` over the actions of one state, with the
/// minimizing action (first in declaration order on exact ties).
///
/// No bounds checks; callers hold a valid state id and an `r`-vector.
#[inline]
pub(crate) fn state_min(inst: &NetworkInstance, state: StateId, gamma: &[f64], v: f64) -> (f64, ActionId) {
    let r = inst.r();
    let costs = inst.costs_of(state);
    let drifts = inst.drifts_of(state);
    let mut best = f64::INFINITY;
    let mut arg = 0;
    for (k, &c) in costs.iter().enumerate() {
        let d = &drifts[k * r..(k + 1) * r];
        let mut val = v * c;
        for j in 0..r {
            val += gamma[j] * d[j];
        }
        if val < best {
            best = val;
            arg = k;
        }
    }
    (best, arg)
}

fn check_gamma(inst: &NetworkInstance, gamma: &[f64]) -> Result<(), DualError> {
    if gamma.len() != inst.r() {
        return Err(DualError::Dimension { expected: inst.r(), got: gamma.len() });
    }
    Ok(())
}

pub(crate) fn check_dist(inst: &NetworkInstance, dist: &[f64]) -> Result<(), DualError> {
    if dist.len() != inst.num_states() {
        return Err(DualError::Dimension { expected: inst.num_states(), got: dist.len() });
    }
    let sum: f64 = dist.iter().sum();
    if (sum - 1.0).abs() > PROBABILITY_TOLERANCE || dist.iter().any(|p| *p < 0.0) {
        return Err(DualError::Distribution(sum));
    }
    Ok(())
}

/// Single-state dual `g_{s}(γ)` and its minimizing action.
pub fn per_state_dual(
    inst: &NetworkInstance,
    state: StateId,
    gamma: &[f64],
    v: f64,
) -> Result<(f64, ActionId), DualError> {
    if state >= inst.num_states() {
        return Err(DualError::UnknownState(state));
    }
    check_gamma(inst, gamma)?;
    Ok(state_min(inst, state, gamma, v))
}

pub(crate) fn dual_value_unchecked(inst: &NetworkInstance, dist: &[f64], gamma: &[f64], v: f64) -> f64 {
    dist.iter().enumerate().filter(|(_, p)| **p > 0.0).map(|(i, p)| p * state_min(inst, i, gamma, v).0).sum()
}

/// `g(γ) = Σ_i dist_i · g_{s_i}(γ)`.
pub fn dual_value(inst: &NetworkInstance, dist: &[f64], gamma: &[f64], v: f64) -> Result<f64, DualError> {
    check_dist(inst, dist)?;
    check_gamma(inst, gamma)?;
    Ok(dual_value_unchecked(inst, dist, gamma, v))
}

/// Dual value together with the supergradient `Σ_i dist_i (A − μ)(x_i*)`.
pub(crate) fn value_and_supergradient(
    inst: &NetworkInstance,
    dist: &[f64],
    gamma: &[f64],
    v: f64,
    grad: &mut [f64],
) -> f64 {
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut value = 0.0;
    for (i, &p) in dist.iter().enumerate() {
        if p <= 0.0 {
            continue;
        }
        let (val, arg) = state_min(inst, i, gamma, v);
        value += p * val;
        for (g, d) in grad.iter_mut().zip(inst.drift(i, arg)) {
            *g += p * d;
        }
    }
    value
}

/// A supergradient of the concave dual at `gamma`: the expected drift of the
/// per-state minimizing actions.
pub fn supergradient(inst: &NetworkInstance, dist: &[f64], gamma: &[f64], v: f64) -> Result<Vec<f64>, DualError> {
    check_dist(inst, dist)?;
    check_gamma(inst, gamma)?;
    let mut grad = vec![0.0; inst.r()];
    value_and_supergradient(inst, dist, gamma, v, &mut grad);
    Ok(grad)
}
