//! Per-slot decision rules: Backpressure, OLAC and OLAC2.
//!
//! All three score an action `x` in state `s` by `−V·f(x) + Σ_j w_j(μ_j − A_j)`
//! and pick the maximizer, smallest action id on ties. They differ in the
//! weight vector `w`: the backlog `q` (Backpressure, OLAC2) or the effective
//! backlog `Q = q + β − θ` (OLAC).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dual::{maximize_dual, state_min, DualError, DualSolverConfig, Multiplier};
use crate::learning::{DualLearnState, EmpiricalDistribution};
use crate::model::{ActionId, NetworkInstance, StateId};
use crate::queueing::Discipline;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ControllerKind {
    #[serde(alias = "backpressure", alias = "bp")]
    Backpressure,
    #[serde(rename = "OLAC", alias = "olac")]
    Olac,
    #[serde(rename = "OLAC2", alias = "olac2")]
    Olac2,
}

impl ControllerKind {
    pub fn label(self) -> &'static str {
        match self {
            ControllerKind::Backpressure => "Backpressure",
            ControllerKind::Olac => "OLAC",
            ControllerKind::Olac2 => "OLAC2",
        }
    }

    pub fn default_discipline(self) -> Discipline {
        match self {
            ControllerKind::Olac2 => Discipline::Lifo,
            _ => Discipline::Fifo,
        }
    }
}

impl std::fmt::Display for ControllerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControllerError {
    #[error("invalid controller configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Dual(#[from] DualError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerConfig {
    pub kind: ControllerKind,
    #[serde(rename = "V")]
    pub v: f64,
    /// Explicit `θ`; defaults to `(log V)²` in every queue.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<Vec<f64>>,
    /// Base of the log in the default `θ`; `None` is the natural log.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta_log_base: Option<f64>,
    /// OLAC2 learning time exponent, `T_l = round(V^c)`.
    #[serde(default = "default_c")]
    pub c: f64,
    /// Slots between OLAC re-solves.
    #[serde(default = "default_relearn_period")]
    pub relearn_period: u64,
    #[serde(default = "DualSolverConfig::warm_polish")]
    pub solver: DualSolverConfig,
    /// Overrides the kind's default queueing discipline.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub discipline: Option<Discipline>,
}

fn default_c() -> f64 {
    2.0 / 3.0
}

fn default_relearn_period() -> u64 {
    1
}

impl ControllerConfig {
    pub fn new(kind: ControllerKind, v: f64) -> Self {
        Self {
            kind,
            v,
            theta: None,
            theta_log_base: None,
            c: default_c(),
            relearn_period: default_relearn_period(),
            solver: DualSolverConfig::warm_polish(),
            discipline: None,
        }
    }

    pub fn backpressure(v: f64) -> Self {
        Self::new(ControllerKind::Backpressure, v)
    }

    pub fn olac(v: f64) -> Self {
        Self::new(ControllerKind::Olac, v)
    }

    pub fn olac2(v: f64) -> Self {
        Self::new(ControllerKind::Olac2, v)
    }

    pub fn discipline(&self) -> Discipline {
        self.discipline.unwrap_or(self.kind.default_discipline())
    }

    /// `θ` for `r` queues.
    pub fn theta_for(&self, r: usize) -> Vec<f64> {
        match &self.theta {
            Some(t) => t.clone(),
            None => vec![default_theta(self.v, self.theta_log_base); r],
        }
    }

    pub fn learning_time(&self) -> u64 {
        learning_time(self.v, self.c)
    }

    pub fn validate(&self, r: usize) -> Result<(), ControllerError> {
        let bad = |m: String| Err(ControllerError::Config(m));
        if !(self.v.is_finite() && self.v >= 1.0) {
            return bad(format!("V must be at least 1, got {}", self.v));
        }
        if !(0.0..1.0).contains(&self.c) {
            return bad(format!("c must lie in [0, 1), got {}", self.c));
        }
        if self.relearn_period == 0 {
            return bad("relearn_period must be at least 1".into());
        }
        if let Some(base) = self.theta_log_base {
            if !(base.is_finite() && base > 1.0) {
                return bad(format!("theta_log_base must exceed 1, got {base}"));
            }
        }
        if self.kind == ControllerKind::Olac {
            let theta = self.theta_for(r);
            if theta.len() != r {
                return bad(format!("theta has {} entries for {r} queues", theta.len()));
            }
            if theta.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
                return bad("theta must be positive".into());
            }
        }
        self.solver.validate()?;
        Ok(())
    }
}

/// `(log_b V)²`, natural log when `base` is `None`.
pub fn default_theta(v: f64, base: Option<f64>) -> f64 {
    let l = match base {
        Some(b) => v.ln() / b.ln(),
        None => v.ln(),
    };
    l * l
}

/// `T_l = round(V^c)`, at least 1.
pub fn learning_time(v: f64, c: f64) -> u64 {
    (v.powf(c).round() as u64).max(1)
}

fn check(inst: &NetworkInstance, state: StateId, w: &[f64]) -> Result<(), DualError> {
    if state >= inst.num_states() {
        return Err(DualError::UnknownState(state));
    }
    if w.len() != inst.r() {
        return Err(DualError::Dimension { expected: inst.r(), got: w.len() });
    }
    Ok(())
}

/// Max-weight action for backlog `q`.
pub fn bp_decide(inst: &NetworkInstance, state: StateId, q: &[f64], v: f64) -> Result<ActionId, DualError> {
    check(inst, state, q)?;
    Ok(state_min(inst, state, q, v).1)
}

/// Effective backlog `Q = q + β − θ`, unclamped.
pub fn effective_backlog(q: &[f64], beta: &[f64], theta: &[f64]) -> Vec<f64> {
    q.iter().zip(beta).zip(theta).map(|((q, b), t)| q + b - t).collect()
}

pub fn olac_decide(
    inst: &NetworkInstance,
    state: StateId,
    q: &[f64],
    beta: &[f64],
    theta: &[f64],
    v: f64,
) -> Result<ActionId, DualError> {
    check(inst, state, beta)?;
    check(inst, state, theta)?;
    bp_decide(inst, state, &effective_backlog(q, beta, theta), v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Olac2Step {
    pub action: ActionId,
    /// `β̃` when this slot is the learning time.
    pub adjustment: Option<Multiplier>,
    /// Whether the one-shot solve certified its optimum.
    pub converged: bool,
}

/// One OLAC2 slot. At `slot = T_l` the empirical dual over the observations
/// so far is solved and the backlog is taken to be `β̃` before deciding.
pub fn olac2_step(
    inst: &NetworkInstance,
    state: StateId,
    slot: u64,
    q: &[f64],
    ed: &EmpiricalDistribution,
    cfg: &ControllerConfig,
) -> Result<Olac2Step, DualError> {
    if slot != cfg.learning_time() {
        return Ok(Olac2Step { action: bp_decide(inst, state, q, cfg.v)?, adjustment: None, converged: true });
    }
    let Some(dist) = ed.estimate() else {
        return Ok(Olac2Step { action: bp_decide(inst, state, q, cfg.v)?, adjustment: None, converged: false });
    };
    let mut solver = cfg.solver.clone();
    solver.warm_start = Some(Multiplier(q.to_vec()));
    let sol = maximize_dual(inst, &dist, cfg.v, &solver)?;
    if sol.unbounded {
        return Ok(Olac2Step { action: bp_decide(inst, state, q, cfg.v)?, adjustment: None, converged: false });
    }
    let action = bp_decide(inst, state, &sol.gamma.0, cfg.v)?;
    Ok(Olac2Step { action, adjustment: Some(sol.gamma), converged: sol.converged })
}

/// Controller state owned by one run.
#[derive(Debug, Clone)]
pub struct Controller {
    cfg: ControllerConfig,
    theta: Vec<f64>,
    learn: DualLearnState,
    ed: EmpiricalDistribution,
    t_l: u64,
    learned_once: bool,
    one_shot_unconverged: bool,
}

/// Learning outcome at the start of a slot.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Preparation {
    /// OLAC2 backlog target `β̃`.
    pub adjust_to: Option<Multiplier>,
}

impl Controller {
    pub fn new(inst: &NetworkInstance, cfg: ControllerConfig) -> Result<Self, ControllerError> {
        cfg.validate(inst.r())?;
        let theta = cfg.theta_for(inst.r());
        let learn = DualLearnState::new(inst.r(), cfg.solver.clone(), cfg.relearn_period);
        let t_l = cfg.learning_time();
        Ok(Self {
            cfg,
            theta,
            learn,
            ed: EmpiricalDistribution::new(inst.num_states()),
            t_l,
            learned_once: false,
            one_shot_unconverged: false,
        })
    }

    pub fn config(&self) -> &ControllerConfig {
        &self.cfg
    }

    pub fn kind(&self) -> ControllerKind {
        self.cfg.kind
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn learning_time(&self) -> Option<u64> {
        (self.cfg.kind == ControllerKind::Olac2).then_some(self.t_l)
    }

    /// `β(t)` under OLAC, `β̃` under OLAC2 once learned.
    pub fn beta(&self) -> Option<&Multiplier> {
        match self.cfg.kind {
            ControllerKind::Backpressure => None,
            ControllerKind::Olac => Some(&self.learn.beta),
            ControllerKind::Olac2 => self.learned_once.then_some(&self.learn.beta),
        }
    }

    pub fn empirical(&self) -> &EmpiricalDistribution {
        &self.ed
    }

    pub fn learn_state(&self) -> &DualLearnState {
        &self.learn
    }

    pub fn unconverged_solves(&self) -> u64 {
        self.learn.unconverged + u64::from(self.one_shot_unconverged)
    }

    pub fn unbounded_solves(&self) -> u64 {
        self.learn.unbounded
    }

    /// Learning step run before the state of `slot` is revealed.
    pub fn prepare(&mut self, inst: &NetworkInstance, slot: u64, q: &[f64]) -> Result<Preparation, DualError> {
        match self.cfg.kind {
            ControllerKind::Backpressure => Ok(Preparation::default()),
            ControllerKind::Olac => {
                self.learn.dual_learn(inst, &self.ed, self.cfg.v, slot)?;
                Ok(Preparation::default())
            }
            ControllerKind::Olac2 => {
                if slot != self.t_l || self.learned_once {
                    return Ok(Preparation::default());
                }
                let Some(dist) = self.ed.estimate() else {
                    return Ok(Preparation::default());
                };
                let mut solver = self.cfg.solver.clone();
                solver.warm_start = Some(Multiplier(q.to_vec()));
                let sol = maximize_dual(inst, &dist, self.cfg.v, &solver)?;
                self.learn.last_solved_at = Some(slot);
                if sol.unbounded {
                    self.learn.unbounded += 1;
                    return Ok(Preparation::default());
                }
                self.one_shot_unconverged = !sol.converged;
                self.learned_once = true;
                self.learn.beta = sol.gamma.clone();
                Ok(Preparation { adjust_to: Some(sol.gamma) })
            }
        }
    }

    /// Decision weights: `q`, or `q + β − θ` under OLAC.
    pub fn weights(&self, q: &[f64]) -> Vec<f64> {
        match self.cfg.kind {
            ControllerKind::Olac => effective_backlog(q, &self.learn.beta.0, &self.theta),
            _ => q.to_vec(),
        }
    }

    /// Writes the decision weights into `out` without allocating.
    pub fn weights_into(&self, q: &[f64], out: &mut [f64]) {
        match self.cfg.kind {
            ControllerKind::Olac => {
                for j in 0..q.len() {
                    out[j] = q[j] + self.learn.beta.0[j] - self.theta[j];
                }
            }
            _ => out.copy_from_slice(q),
        }
    }

    /// Action for `state` given decision weights from [`Controller::weights`].
    pub fn decide(&self, inst: &NetworkInstance, state: StateId, weights: &[f64]) -> ActionId {
        state_min(inst, state, weights, self.cfg.v).1
    }

    pub fn observe(&mut self, state: StateId) -> Result<(), DualError> {
        match self.cfg.kind {
            ControllerKind::Backpressure => Ok(()),
            ControllerKind::Olac2 if self.learned_once => Ok(()),
            _ => self.ed.observe(state),
        }
    }
}
