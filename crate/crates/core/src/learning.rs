//! Empirical state distribution and dual learning of the multiplier `β(t)`.

use serde::{Deserialize, Serialize};

use crate::dual::{maximize_dual, DualError, DualSolverConfig, Multiplier};
use crate::model::{NetworkInstance, StateId};

/// Visit counts per state plus optional pseudo-counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    counts: Vec<u64>,
    t: u64,
    prior: Option<Vec<f64>>,
}

impl EmpiricalDistribution {
    pub fn new(num_states: usize) -> Self {
        Self { counts: vec![0; num_states], t: 0, prior: None }
    }

    /// Starts from pseudo-counts; the estimate is `(N_i + prior_i)/(t + Σ prior)`.
    pub fn with_prior(prior: Vec<f64>) -> Result<Self, DualError> {
        if prior.iter().any(|p| !p.is_finite() || *p < 0.0) || prior.iter().sum::<f64>() <= 0.0 {
            return Err(DualError::Config("prior must be non-negative with positive mass".into()));
        }
        Ok(Self { counts: vec![0; prior.len()], t: 0, prior: Some(prior) })
    }

    pub fn observe(&mut self, state: StateId) -> Result<(), DualError> {
        let c = self.counts.get_mut(state).ok_or(DualError::UnknownState(state))?;
        *c += 1;
        self.t += 1;
        Ok(())
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    pub fn observations(&self) -> u64 {
        self.t
    }

    /// `π(t)`; `None` before the first observation when there is no prior.
    pub fn estimate(&self) -> Option<Vec<f64>> {
        match &self.prior {
            Some(prior) => {
                let total = self.t as f64 + prior.iter().sum::<f64>();
                Some(self.counts.iter().zip(prior).map(|(&n, p)| (n as f64 + p) / total).collect())
            }
            None if self.t == 0 => None,
            None => {
                let t = self.t as f64;
                Some(self.counts.iter().map(|&n| n as f64 / t).collect())
            }
        }
    }

    /// `max_i |π_i − π_i(t)|` against a reference distribution.
    pub fn max_abs_error(&self, truth: &[f64]) -> Option<f64> {
        let est = self.estimate()?;
        Some(est.iter().zip(truth).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
    }
}

/// The learned multiplier and the cadence at which it is refreshed.
#[derive(Debug, Clone, PartialEq)]
pub struct DualLearnState {
    pub beta: Multiplier,
    pub last_solved_at: Option<u64>,
    pub solver: DualSolverConfig,
    pub relearn_period: u64,
    /// Re-solves that did not certify an optimum.
    pub unconverged: u64,
    /// Re-solves skipped because the empirical dual was unbounded.
    pub unbounded: u64,
}

impl DualLearnState {
    /// `β = 0` before anything has been learned.
    pub fn new(r: usize, solver: DualSolverConfig, relearn_period: u64) -> Self {
        Self {
            beta: Multiplier::zeros(r),
            last_solved_at: None,
            solver,
            relearn_period: relearn_period.max(1),
            unconverged: 0,
            unbounded: 0,
        }
    }

    /// Re-solves the empirical dual when the relearn period has elapsed.
    /// Returns whether a solve ran. An unbounded empirical dual (no slack
    /// among the states seen so far) keeps the previous `β`.
    pub fn dual_learn(
        &mut self,
        inst: &NetworkInstance,
        ed: &EmpiricalDistribution,
        v: f64,
        slot: u64,
    ) -> Result<bool, DualError> {
        if let Some(last) = self.last_solved_at {
            if slot.saturating_sub(last) < self.relearn_period {
                return Ok(false);
            }
        }
        let Some(dist) = ed.estimate() else {
            return Ok(false);
        };
        let mut cfg = self.solver.clone();
        cfg.warm_start = Some(self.beta.clone());
        let sol = maximize_dual(inst, &dist, v, &cfg)?;
        self.last_solved_at = Some(slot);
        if sol.unbounded {
            self.unbounded += 1;
            return Ok(true);
        }
        if !sol.converged {
            self.unconverged += 1;
        }
        self.beta = sol.gamma;
        Ok(true)
    }
}
