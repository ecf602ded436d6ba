//! Experiment runner for the stochnet simulator.
//!
//! A scenario file names an instance, a set of controllers, a list of `V`
//! values and seeds. [`runner::run_scenario`] executes the sweep and writes
//! `summary.csv`, `oracle.csv` and optional traces; [`plotdata::emit_plotdata`]
//! turns a summary into per-figure tables.

pub mod plotdata;
pub mod runner;
pub mod scenario;

pub use plotdata::{emit_plotdata, PlotData};
pub use runner::{run_scenario, RunOptions, SweepReport};
pub use scenario::{Scenario, ScenarioError};

/// Environment variable holding the default output directory.
pub const OUT_ENV: &str = "STOCHNET_OUT";
