//! The slot loop: sample a state, learn, decide, update queues, record.

use rand::distr::weighted::WeightedIndex;
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::controllers::{Controller, ControllerConfig, ControllerError, ControllerKind};
use crate::dual::{distance, estimate_polyhedral_rho, AnalysisConstants, DualError, Multiplier, OracleSummary};
use crate::model::NetworkInstance;
use crate::queueing::{DelayAccumulator, DelayStats, DepartureRecord, QueueError, QueueLedger};

/// Stream of the state sampler. Stream 1 is reserved.
pub const STATE_STREAM: u64 = 0;
pub const RNG_ALGORITHM: &str = "ChaCha8Rng (rand_chacha 0.9), seed_from_u64, stream 0";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SimError {
    #[error("invalid simulation configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Controller(#[from] ControllerError),
    #[error(transparent)]
    Dual(#[from] DualError),
    #[error(transparent)]
    Queue(#[from] QueueError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimConfig {
    pub horizon: u64,
    pub seed: u64,
    pub controller: ControllerConfig,
    /// Convergence radius; `None` derives `D_p` from the instance.
    #[serde(default)]
    pub zeta: Option<f64>,
    #[serde(default = "one")]
    pub metric_sample_period: u64,
    /// Backlog at slot 0, entered as null content.
    #[serde(default)]
    pub initial_backlog: Option<Vec<f64>>,
    /// End the run at the first slot within `zeta` of `γ*`.
    #[serde(default)]
    pub stop_when_converged: bool,
    #[serde(default = "default_sustain")]
    pub sustain_window: u64,
    /// Slots at which `‖β(t) − γ*‖` and `max|δ(t)|` are recorded.
    #[serde(default)]
    pub checkpoints: Vec<u64>,
    #[serde(default)]
    pub record_trace: bool,
    #[serde(default)]
    pub record_departures: bool,
    /// Count null departures in the mean delay.
    #[serde(default)]
    pub delay_includes_null: bool,
}

fn one() -> u64 {
    1
}

fn default_sustain() -> u64 {
    100
}

impl SimConfig {
    pub fn new(controller: ControllerConfig, horizon: u64, seed: u64) -> Self {
        Self {
            horizon,
            seed,
            controller,
            zeta: None,
            metric_sample_period: 1,
            initial_backlog: None,
            stop_when_converged: false,
            sustain_window: default_sustain(),
            checkpoints: Vec::new(),
            record_trace: false,
            record_departures: false,
            delay_includes_null: false,
        }
    }

    pub fn validate(&self, inst: &NetworkInstance) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::Config(m));
        if self.horizon == 0 {
            return bad("horizon must be at least 1".into());
        }
        if self.metric_sample_period == 0 {
            return bad("metric_sample_period must be at least 1".into());
        }
        if self.sustain_window == 0 {
            return bad("sustain_window must be at least 1".into());
        }
        if let Some(z) = self.zeta {
            if !(z.is_finite() && z > 0.0) {
                return bad(format!("zeta must be positive, got {z}"));
            }
        }
        if let Some(q0) = &self.initial_backlog {
            if q0.len() != inst.r() || q0.iter().any(|q| !(q.is_finite() && *q >= 0.0)) {
                return bad("initial_backlog must be a non-negative r-vector".into());
            }
        }
        self.controller.validate(inst.r())?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub slot: u64,
    pub q: Vec<f64>,
    pub gamma_distance: f64,
    pub beta_distance: Option<f64>,
    pub cost: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub slot: u64,
    pub beta_distance: f64,
    pub max_abs_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMetadata {
    pub config: SimConfig,
    pub rng: String,
    pub zeta: f64,
    pub theta: Vec<f64>,
    pub learning_time: Option<u64>,
    pub burn_in: u64,
    pub slots_run: u64,
    pub unconverged_solves: u64,
    pub unbounded_solves: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub controller: ControllerKind,
    pub v: f64,
    pub seed: u64,
    pub avg_cost: f64,
    /// Time average of `Σ_j q_j(t)`.
    pub avg_backlog: f64,
    pub delay: DelayStats,
    pub t_zeta: Option<u64>,
    /// First slot after which the distance stays within `zeta` for
    /// `sustain_window` consecutive slots.
    pub t_zeta_sustained: Option<u64>,
    /// Sampled `(slot, ‖γ(t) − γ*‖)`.
    pub gamma_trace: Vec<(u64, f64)>,
    /// Sampled `(slot, ‖β(t) − γ*‖)`, learning controllers only.
    pub beta_trace: Vec<(u64, f64)>,
    /// Content removed by backlog adjustment, per queue.
    pub dropped: Vec<f64>,
    /// Real content among `dropped`.
    pub dropped_real: Vec<f64>,
    pub checkpoints: Vec<Checkpoint>,
    pub trace: Vec<TracePoint>,
    pub departures: Vec<DepartureRecord>,
    pub final_backlog: Vec<f64>,
    pub metadata: RunMetadata,
}

/// `D_p` for `inst` at penalty `v` around `gamma_star`, from a sampled
/// polyhedral rate. `None` when no positive rate is found.
pub fn default_zeta(inst: &NetworkInstance, v: f64, gamma_star: &[f64]) -> Result<Option<f64>, DualError> {
    let pi = inst.probabilities();
    let radius = (v * inst.delta_max()).max(1.0);
    let rho = estimate_polyhedral_rho(inst, &pi, v, gamma_star, OracleSummary::RHO_SAMPLES, radius)?;
    Ok(AnalysisConstants::from_rho(inst, rho).map(|c| c.d_p))
}

/// First index whose point lies within `zeta` of `gamma_star`.
pub fn convergence_time<'a, I>(trace: I, gamma_star: &[f64], zeta: f64) -> Option<u64>
where
    I: IntoIterator<Item = &'a Vec<f64>>,
{
    trace.into_iter().position(|g| distance(g, gamma_star) <= zeta).map(|i| i as u64)
}

/// First index starting a run of `window` consecutive points within `zeta`.
pub fn sustained_convergence_time(distances: &[f64], zeta: f64, window: usize) -> Option<u64> {
    let mut start = None;
    for (i, &d) in distances.iter().enumerate() {
        if d <= zeta {
            let s = *start.get_or_insert(i);
            if i + 1 - s >= window {
                return Some(s as u64);
            }
        } else {
            start = None;
        }
    }
    None
}

/// Simulates `cfg.horizon` slots. `gamma_star` is used for measurement only.
pub fn run(inst: &NetworkInstance, cfg: &SimConfig, gamma_star: &Multiplier) -> Result<RunResult, SimError> {
    cfg.validate(inst)?;
    let r = inst.r();
    if gamma_star.len() != r {
        return Err(SimError::Config(format!("gamma_star has {} entries for {r} queues", gamma_star.len())));
    }
    let gs = gamma_star.as_slice();
    let v = cfg.controller.v;
    let zeta = match cfg.zeta {
        Some(z) => z,
        None => default_zeta(inst, v, gs)?
            .ok_or_else(|| SimError::Config("no positive polyhedral rate; set zeta explicitly".into()))?,
    };

    let pi = inst.probabilities();
    let sampler = WeightedIndex::new(&pi).map_err(|e| SimError::Config(format!("state distribution: {e}")))?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(STATE_STREAM);

    let mut ctl = Controller::new(inst, cfg.controller.clone())?;
    let discipline = cfg.controller.discipline();
    let mut ledger = QueueLedger::new(r);
    if let Some(q0) = &cfg.initial_backlog {
        ledger.adjust_to(q0, 0)?;
    }
    let mut delay = DelayAccumulator::new(r, cfg.delay_includes_null);
    let mut departures = Vec::new();
    let mut all_departures = Vec::new();
    let mut weights = vec![0.0; r];
    let mut gamma = vec![0.0; r];
    let mut checkpoints: Vec<u64> = cfg.checkpoints.clone();
    checkpoints.sort_unstable();
    checkpoints.dedup();
    let mut next_checkpoint = 0;

    let mut dropped = vec![0.0; r];
    let mut dropped_real = vec![0.0; r];
    let mut cost_sum = 0.0;
    let mut backlog_sum = 0.0;
    let mut t_zeta = None;
    let mut streak_start: Option<u64> = None;
    let mut t_zeta_sustained = None;
    let mut gamma_trace = Vec::new();
    let mut beta_trace = Vec::new();
    let mut trace = Vec::new();
    let mut recorded_checkpoints = Vec::new();
    let mut slots_run = 0;

    for t in 0..cfg.horizon {
        let prep = ctl.prepare(inst, t, ledger.backlog())?;
        if let Some(target) = prep.adjust_to {
            let rec = ledger.adjust_to(target.as_slice(), t)?;
            for j in 0..r {
                dropped[j] += rec.dropped[j];
                dropped_real[j] += rec.dropped_real[j];
            }
        }
        let q = ledger.backlog();
        backlog_sum += q.iter().sum::<f64>();

        // γ(t): q under Backpressure and OLAC2, q + β − θ under OLAC.
        ctl.weights_into(q, &mut gamma);
        let gd = distance(&gamma, gs);
        if gd <= zeta {
            t_zeta.get_or_insert(t);
            let s = *streak_start.get_or_insert(t);
            if t_zeta_sustained.is_none() && t + 1 - s >= cfg.sustain_window {
                t_zeta_sustained = Some(s);
            }
        } else {
            streak_start = None;
        }
        let beta_distance = ctl.beta().map(|b| b.distance(gs));
        let sampled = t % cfg.metric_sample_period == 0;
        if sampled {
            gamma_trace.push((t, gd));
            if let Some(bd) = beta_distance {
                beta_trace.push((t, bd));
            }
        }
        while next_checkpoint < checkpoints.len() && checkpoints[next_checkpoint] <= t {
            if checkpoints[next_checkpoint] == t {
                if let (Some(bd), Some(err)) = (beta_distance, ctl.empirical().max_abs_error(&pi)) {
                    recorded_checkpoints.push(Checkpoint { slot: t, beta_distance: bd, max_abs_error: err });
                }
            }
            next_checkpoint += 1;
        }

        let state = sampler.sample(&mut rng);
        weights.copy_from_slice(&gamma);
        let action = ctl.decide(inst, state, &weights);
        let spec = inst.action(state, action);
        cost_sum += spec.cost;
        if cfg.record_trace && sampled {
            trace.push(TracePoint { slot: t, q: q.to_vec(), gamma_distance: gd, beta_distance, cost: spec.cost });
        }

        departures.clear();
        ledger.apply_slot(&spec.arrivals, &spec.services, t, discipline, &mut departures)?;
        for d in &departures {
            delay.add(d);
        }
        if cfg.record_departures {
            all_departures.extend_from_slice(&departures);
        }
        ctl.observe(state)?;
        slots_run = t + 1;
        if cfg.stop_when_converged && t_zeta.is_some() {
            break;
        }
    }

    let n = slots_run as f64;
    let final_backlog = ledger.backlog().to_vec();
    Ok(RunResult {
        controller: cfg.controller.kind,
        v,
        seed: cfg.seed,
        avg_cost: cost_sum / n,
        avg_backlog: backlog_sum / n,
        delay: delay.finish(slots_run, &final_backlog),
        t_zeta,
        t_zeta_sustained,
        gamma_trace,
        beta_trace,
        dropped,
        dropped_real,
        checkpoints: recorded_checkpoints,
        trace,
        departures: all_departures,
        final_backlog,
        metadata: RunMetadata {
            config: cfg.clone(),
            rng: RNG_ALGORITHM.to_string(),
            zeta,
            theta: ctl.theta().to_vec(),
            learning_time: ctl.learning_time(),
            burn_in: 0,
            slots_run,
            unconverged_solves: ctl.unconverged_solves(),
            unbounded_solves: ctl.unbounded_solves(),
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dual::{maximize_dual, DualSolverConfig};
    use crate::model::{two_queue_example, UNIFORM_CHANNELS};

    fn setup(v: f64) -> (NetworkInstance, Multiplier) {
        let inst = two_queue_example(UNIFORM_CHANNELS).unwrap();
        let pi = inst.probabilities();
        let g = maximize_dual(&inst, &pi, v, &DualSolverConfig::default()).unwrap().gamma;
        (inst, g)
    }

    #[test]
    fn convergence_time_examples() {
        let gs = [0.0];
        let trace: Vec<Vec<f64>> = [5.0, 3.0, 1.0, 2.0].iter().map(|d| vec![*d]).collect();
        assert_eq!(convergence_time(&trace, &gs, 2.0), Some(2));
        assert_eq!(convergence_time(&[vec![0.0]], &gs, 1e-9), Some(0));
        assert_eq!(convergence_time(&trace, &gs, 0.5), None);
        assert_eq!(sustained_convergence_time(&[5.0, 1.0, 3.0, 1.0, 1.0], 2.0, 2), Some(3));
    }

    #[test]
    fn single_slot_run() {
        let (inst, g) = setup(10.0);
        for kind in [ControllerKind::Backpressure, ControllerKind::Olac, ControllerKind::Olac2] {
            let cfg = SimConfig { zeta: Some(1.0), ..SimConfig::new(ControllerConfig::new(kind, 10.0), 1, 3) };
            let res = run(&inst, &cfg, &g).unwrap();
            assert_eq!(res.avg_backlog, 0.0);
            assert!(res.avg_cost >= 0.0 && res.avg_cost <= inst.f_max());
            assert_eq!(res.metadata.slots_run, 1);
        }
    }

    #[test]
    fn starting_at_optimum_converges_at_zero() {
        let (inst, g) = setup(50.0);
        let mut cfg = SimConfig::new(ControllerConfig::backpressure(50.0), 10, 1);
        cfg.initial_backlog = Some(g.0.clone());
        cfg.zeta = Some(1e-9);
        assert_eq!(run(&inst, &cfg, &g).unwrap().t_zeta, Some(0));
    }

    #[test]
    fn default_zeta_is_positive() {
        let (inst, g) = setup(100.0);
        let z = default_zeta(&inst, 100.0, &g.0).unwrap().unwrap();
        assert!(z > 0.0 && z.is_finite());
    }

    #[test]
    fn reproducible() {
        let (inst, g) = setup(50.0);
        for kind in [ControllerKind::Backpressure, ControllerKind::Olac, ControllerKind::Olac2] {
            let mut cfg = SimConfig::new(ControllerConfig::new(kind, 50.0), 2000, 42);
            cfg.zeta = Some(10.0);
            cfg.record_trace = true;
            let a = run(&inst, &cfg, &g).unwrap();
            let b = run(&inst, &cfg, &g).unwrap();
            assert_eq!(a, b);
            assert_eq!(a.avg_cost.to_bits(), b.avg_cost.to_bits());
        }
    }

    #[test]
    fn olac2_before_learning_matches_lifo_backpressure() {
        let (inst, g) = setup(500.0);
        let olac2 = ControllerConfig::olac2(500.0);
        let t_l = olac2.learning_time();
        let mut bp = ControllerConfig::backpressure(500.0);
        bp.discipline = Some(crate::queueing::Discipline::Lifo);
        let run_with = |c: ControllerConfig| {
            let mut cfg = SimConfig::new(c, t_l, 9);
            cfg.zeta = Some(1.0);
            cfg.record_trace = true;
            cfg.record_departures = true;
            run(&inst, &cfg, &g).unwrap()
        };
        let a = run_with(olac2);
        let b = run_with(bp);
        assert_eq!(a.trace, b.trace);
        assert_eq!(a.departures, b.departures);
    }

    #[test]
    fn olac2_adjusts_at_learning_time() {
        let (inst, g) = setup(500.0);
        let mut cfg = SimConfig::new(ControllerConfig::olac2(500.0), 200, 4);
        cfg.zeta = Some(1.0);
        cfg.record_trace = true;
        let res = run(&inst, &cfg, &g).unwrap();
        let t_l = res.metadata.learning_time.unwrap();
        assert_eq!(t_l, 63);
        let mut bp = cfg.clone();
        bp.controller = ControllerConfig::backpressure(500.0);
        let base = run(&inst, &bp, &g).unwrap();
        let d = |r: &RunResult| r.trace[t_l as usize].gamma_distance;
        assert!(d(&res) < 0.25 * d(&base), "{} vs {}", d(&res), d(&base));
    }

    #[test]
    fn rejects_bad_config() {
        let (inst, g) = setup(10.0);
        let mut cfg = SimConfig::new(ControllerConfig::backpressure(10.0), 0, 1);
        assert!(matches!(run(&inst, &cfg, &g), Err(SimError::Config(_))));
        cfg.horizon = 5;
        cfg.initial_backlog = Some(vec![1.0]);
        assert!(run(&inst, &cfg, &g).is_err());
        cfg.initial_backlog = None;
        cfg.controller.theta = Some(vec![1.0]);
        cfg.controller.kind = ControllerKind::Olac;
        assert!(matches!(run(&inst, &cfg, &g), Err(SimError::Controller(_))));
    }
}
