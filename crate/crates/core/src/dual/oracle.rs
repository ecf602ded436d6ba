//! Linear programs over randomized stationary policies.

use serde::{Deserialize, Serialize};

use super::simplex::{LinearProgram, LpOutcome};
use super::{check_dist, DualError};
use crate::model::NetworkInstance;

/// Per-state probability vectors over that state's actions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedPolicy {
    pub per_state: Vec<Vec<f64>>,
}

impl RandomizedPolicy {
    fn from_flat(inst: &NetworkInstance, x: &[f64]) -> Self {
        let mut per_state = Vec::with_capacity(inst.num_states());
        let mut k = 0;
        for s in 0..inst.num_states() {
            let n = inst.num_actions(s);
            let mut probs = x[k..k + n].to_vec();
            let total: f64 = probs.iter().sum();
            if total > 0.0 {
                probs.iter_mut().for_each(|p| *p /= total);
            }
            per_state.push(probs);
            k += n;
        }
        RandomizedPolicy { per_state }
    }

    /// Expected cost under `dist`.
    pub fn average_cost(&self, inst: &NetworkInstance, dist: &[f64]) -> f64 {
        self.per_state
            .iter()
            .enumerate()
            .map(|(i, th)| dist[i] * th.iter().zip(inst.costs_of(i)).map(|(p, c)| p * c).sum::<f64>())
            .sum()
    }

    /// Expected `A − μ` per queue under `dist`.
    pub fn average_drift(&self, inst: &NetworkInstance, dist: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; inst.r()];
        for (i, th) in self.per_state.iter().enumerate() {
            for (k, p) in th.iter().enumerate() {
                for (o, d) in out.iter_mut().zip(inst.drift(i, k)) {
                    *o += dist[i] * p * d;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PrimalSolution {
    /// Optimal average cost without the `V` factor.
    pub f_av_star: f64,
    pub policy: RandomizedPolicy,
}

fn policy_rows(inst: &NetworkInstance, lp: &mut LinearProgram, extra: usize) {
    let n = inst.total_actions() + extra;
    let mut k = 0;
    for s in 0..inst.num_states() {
        let mut row = vec![0.0; n];
        for x in 0..inst.num_actions(s) {
            row[k + x] = 1.0;
        }
        lp.eq(row, 1.0);
        k += inst.num_actions(s);
    }
}

/// Minimum average cost over randomized policies that keep every queue's
/// average drift non-positive under `dist`. Solved exactly by simplex.
pub fn primal_oracle(inst: &NetworkInstance, dist: &[f64]) -> Result<PrimalSolution, DualError> {
    check_dist(inst, dist)?;
    let n = inst.total_actions();
    let mut objective = Vec::with_capacity(n);
    for (s, &p) in dist.iter().enumerate() {
        objective.extend(inst.costs_of(s).iter().map(|c| p * c));
    }
    let mut lp = LinearProgram::minimize(objective);
    for j in 0..inst.r() {
        lp.le(drift_row(inst, dist, j, 0), 0.0);
    }
    policy_rows(inst, &mut lp, 0);
    match lp.solve() {
        LpOutcome::Optimal { x, objective } => {
            Ok(PrimalSolution { f_av_star: objective, policy: RandomizedPolicy::from_flat(inst, &x) })
        }
        LpOutcome::Infeasible => Err(DualError::Infeasible),
        LpOutcome::Unbounded => Err(DualError::Unbounded),
        LpOutcome::PivotLimit => Err(DualError::Config("simplex pivot limit reached".into())),
    }
}

fn drift_row(inst: &NetworkInstance, dist: &[f64], j: usize, extra: usize) -> Vec<f64> {
    let mut row = Vec::with_capacity(inst.total_actions() + extra);
    for (s, &p) in dist.iter().enumerate() {
        for x in 0..inst.num_actions(s) {
            row.push(p * inst.drift(s, x)[j]);
        }
    }
    row.resize(inst.total_actions() + extra, 0.0);
    row
}

/// Largest `η` such that some randomized policy makes every queue's average
/// drift at most `−η` under `dist`. Non-positive means no slack.
pub fn max_slack(inst: &NetworkInstance, dist: &[f64]) -> Result<f64, DualError> {
    check_dist(inst, dist)?;
    let n = inst.total_actions();
    // Variables: policy weights, then η⁺ and η⁻.
    let mut objective = vec![0.0; n + 2];
    objective[n] = -1.0;
    objective[n + 1] = 1.0;
    let mut lp = LinearProgram::minimize(objective);
    for j in 0..inst.r() {
        let mut row = drift_row(inst, dist, j, 2);
        row[n] = 1.0;
        row[n + 1] = -1.0;
        lp.le(row, 0.0);
    }
    policy_rows(inst, &mut lp, 2);
    match lp.solve() {
        LpOutcome::Optimal { objective, .. } => Ok(-objective),
        LpOutcome::Infeasible => Err(DualError::Infeasible),
        LpOutcome::Unbounded => Err(DualError::Unbounded),
        LpOutcome::PivotLimit => Err(DualError::Config("simplex pivot limit reached".into())),
    }
}
