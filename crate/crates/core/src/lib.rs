//! Discrete-time simulation and optimization for stochastic network control.
//!
//! The crate is organized bottom-up:
//!
//! * [`model`]: network instances and the built-in two-queue system.
//! * [`dual`]: the dual function, its maximizer, and LP oracles.
//! * [`learning`]: empirical state distribution and dual learning.
//! * [`queueing`]: fluid queue ledgers with FIFO/LIFO service.
//! * [`controllers`]: Backpressure, OLAC and OLAC2 decision rules.
//! * [`sim`]: the slot loop, metrics and convergence time.

#![allow(clippy::needless_range_loop)]

pub mod controllers;
pub mod dual;
pub mod learning;
pub mod model;
pub mod queueing;
pub mod sim;

pub use controllers::{
    bp_decide, olac2_step, olac_decide, Controller, ControllerConfig, ControllerError, ControllerKind,
};
pub use dual::{
    dual_value, max_slack, maximize_dual, per_state_dual, primal_oracle, supergradient, AnalysisConstants, DualError,
    DualSolution, DualSolverConfig, Multiplier, OracleSummary, StepRule,
};
pub use learning::{DualLearnState, EmpiricalDistribution};
pub use model::{load_instance, two_queue_example, validate, ActionSpec, NetworkInstance, StateSpec};
pub use queueing::{
    delay_stats, AdjustmentRecord, DelayAccumulator, DelayStats, DepartureRecord, Discipline, QueueError, QueueLedger,
};
pub use sim::{convergence_time, run, RunResult, SimConfig, SimError};
