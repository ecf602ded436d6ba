//! Sweep execution and output files.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use log::{info, warn};
use rand::prelude::*;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::Serialize;
use stochnet_core::dual::{max_slack, OracleSummary};
use stochnet_core::sim::RNG_ALGORITHM;
use stochnet_core::{run, NetworkInstance, RunResult, SimConfig};

use crate::scenario::{Scenario, ZetaPolicy};

/// Seed of the perturbation sampler in the slack spot check.
const PERTURBATION_SEED: u64 = 0x51ac_c0de;

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    /// Forces per-run traces on.
    pub trace: bool,
}

#[derive(Debug, Clone)]
pub struct Job {
    pub controller: usize,
    pub v_index: usize,
    pub config: SimConfig,
}

#[derive(Debug)]
pub struct SweepReport {
    pub oracles: Vec<OracleSummary>,
    pub results: Vec<(Job, std::result::Result<RunResult, String>)>,
    pub slack_check: Option<SlackCheck>,
    pub files: Vec<PathBuf>,
}

impl SweepReport {
    pub fn failures(&self) -> usize {
        self.results.iter().filter(|(_, r)| r.is_err()).count()
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SlackCheck {
    pub epsilon_s: f64,
    pub perturbation_count: usize,
    pub min_slack: f64,
    pub nominal_slack: f64,
}

/// Oracle values for every `V` of the sweep.
pub fn compute_oracles(inst: &NetworkInstance, v_values: &[f64]) -> Result<Vec<OracleSummary>> {
    let pi = inst.probabilities();
    v_values
        .par_iter()
        .map(|&v| OracleSummary::compute(inst, &pi, v).with_context(|| format!("oracle at V={v}")))
        .collect()
}

pub fn build_jobs(sc: &Scenario, oracles: &[OracleSummary], trace: bool) -> Result<Vec<Job>> {
    let mut jobs = Vec::with_capacity(sc.run_count());
    for (ci, spec) in sc.controllers.iter().enumerate() {
        for (vi, &v) in sc.v_values.iter().enumerate() {
            let zeta = match sc.zeta {
                ZetaPolicy::Absolute { value } => value,
                ZetaPolicy::AutoDp => oracles[vi]
                    .d_p()
                    .with_context(|| format!("no positive polyhedral rate at V={v}; use an absolute zeta"))?,
            };
            for &seed in &sc.seeds {
                let mut cfg = SimConfig::new(spec.at(v), sc.horizon, seed);
                cfg.zeta = Some(zeta);
                cfg.initial_backlog = sc.initial_backlog.clone();
                cfg.record_trace = trace || sc.trace;
                cfg.metric_sample_period = sc.trace_sample_period;
                jobs.push(Job { controller: ci, v_index: vi, config: cfg });
            }
        }
    }
    Ok(jobs)
}

/// Minimum slack over random distributions within `epsilon_s` of `π`.
/// This samples the ball; it does not prove the condition.
pub fn slack_spot_check(inst: &NetworkInstance, epsilon_s: f64, count: usize) -> Result<SlackCheck> {
    let pi = inst.probabilities();
    let m = pi.len();
    let mut rng = ChaCha8Rng::seed_from_u64(PERTURBATION_SEED);
    let mut dists = Vec::with_capacity(count);
    while dists.len() < count {
        let mut d: Vec<f64> = (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
        let mean = d.iter().sum::<f64>() / m as f64;
        d.iter_mut().for_each(|x| *x -= mean);
        let len = d.iter().map(|x| x * x).sum::<f64>().sqrt();
        if len == 0.0 {
            continue;
        }
        let radius = epsilon_s * rng.random::<f64>();
        let p: Vec<f64> = pi.iter().zip(&d).map(|(p, x)| p + radius * x / len).collect();
        if p.iter().all(|x| *x >= 0.0) {
            let s: f64 = p.iter().sum();
            dists.push(p.into_iter().map(|x| x / s).collect::<Vec<f64>>());
        }
    }
    let nominal_slack = max_slack(inst, &pi)?;
    let slacks: Vec<f64> = dists.par_iter().map(|d| max_slack(inst, d)).collect::<Result<_, _>>()?;
    let min_slack = slacks.into_iter().fold(nominal_slack, f64::min);
    Ok(SlackCheck { epsilon_s, perturbation_count: count, min_slack, nominal_slack })
}

pub fn run_scenario(sc: &Scenario, opts: &RunOptions) -> Result<SweepReport> {
    let inst = sc.load_instance()?;
    let pool = rayon::ThreadPoolBuilder::new().num_threads(opts.workers.unwrap_or(0)).build()?;
    pool.install(|| {
        info!("computing oracles for {} values of V", sc.v_values.len());
        let oracles = compute_oracles(&inst, &sc.v_values)?;
        let jobs = build_jobs(sc, &oracles, opts.trace)?;
        info!("running {} simulations", jobs.len());
        let results: Vec<_> = jobs
            .into_par_iter()
            .map(|job| {
                let res = run(&inst, &job.config, &oracles[job.v_index].gamma_star).map_err(|e| e.to_string());
                if let Err(e) = &res {
                    warn!("{} V={} seed={}: {e}", job.config.controller.kind, job.config.controller.v, job.config.seed);
                }
                (job, res)
            })
            .collect();
        let slack_check = if sc.assumption_check {
            Some(slack_spot_check(&inst, sc.epsilon_s, sc.perturbation_count)?)
        } else {
            None
        };
        let mut report = SweepReport { oracles, results, slack_check, files: Vec::new() };
        write_outputs(sc, &inst, &mut report, &opts.out_dir)?;
        Ok(report)
    })
}

fn fmt_opt<T: ToString>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_default()
}

pub fn summary_header(r: usize) -> Vec<String> {
    let mut h: Vec<String> =
        ["controller", "V", "seed", "horizon", "slots_run", "avg_cost", "avg_backlog", "mean_delay"]
            .iter()
            .map(|s| s.to_string())
            .collect();
    h.extend((1..=r).map(|j| format!("delivered_rate_{j}")));
    h.extend((1..=r).map(|j| format!("stuck_backlog_{j}")));
    h.extend(["T_zeta_first", "T_zeta_sustained", "zeta", "T_l"].map(String::from));
    h.extend((1..=r).map(|j| format!("dropped_{j}")));
    h.extend(["unconverged_solves", "unbounded_solves", "error"].map(String::from));
    h
}

fn summary_row(job: &Job, res: &std::result::Result<RunResult, String>, r: usize) -> Vec<String> {
    let c = &job.config;
    let mut row =
        vec![c.controller.kind.to_string(), c.controller.v.to_string(), c.seed.to_string(), c.horizon.to_string()];
    match res {
        Ok(res) => {
            row.push(res.metadata.slots_run.to_string());
            row.push(res.avg_cost.to_string());
            row.push(res.avg_backlog.to_string());
            row.push(fmt_opt(res.delay.mean_delay));
            row.extend(res.delay.delivered_rate.iter().map(f64::to_string));
            row.extend(res.delay.stuck_backlog.iter().map(f64::to_string));
            row.push(fmt_opt(res.t_zeta));
            row.push(fmt_opt(res.t_zeta_sustained));
            row.push(res.metadata.zeta.to_string());
            row.push(fmt_opt(res.metadata.learning_time));
            row.extend(res.dropped.iter().map(f64::to_string));
            row.push(res.metadata.unconverged_solves.to_string());
            row.push(res.metadata.unbounded_solves.to_string());
            row.push(String::new());
        }
        Err(e) => {
            row.resize(summary_header(r).len() - 1, String::new());
            row.push(e.clone());
        }
    }
    row
}

pub fn oracle_header(r: usize) -> Vec<String> {
    let mut h = vec!["V".to_string(), "f_av_star".into(), "g_star".into()];
    h.extend((1..=r).map(|j| format!("gamma_star_{j}")));
    h.extend(["eta_0", "rho_hat", "D_p"].map(String::from));
    h
}

pub fn oracle_row(o: &OracleSummary) -> Vec<String> {
    let mut row = vec![o.v.to_string(), o.f_av_star.to_string(), o.g_star.to_string()];
    row.extend(o.gamma_star.0.iter().map(f64::to_string));
    row.push(o.eta0.to_string());
    row.push(o.rho_hat.to_string());
    row.push(fmt_opt(o.d_p()));
    row
}

fn write_csv(path: &Path, header: &[String], rows: impl IntoIterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_path(path)?;
    w.write_record(header)?;
    for row in rows {
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn trace_file_name(res: &RunResult) -> String {
    format!("trace_{}_V{}_seed{}.csv", res.controller, res.v, res.seed)
}

fn write_trace(path: &Path, res: &RunResult, r: usize) -> Result<()> {
    let mut header = vec!["slot".to_string()];
    header.extend((1..=r).map(|j| format!("q_{j}")));
    header.extend(["gamma_distance", "beta_distance", "inst_cost"].map(String::from));
    let rows = res.trace.iter().map(|p| {
        let mut row = vec![p.slot.to_string()];
        row.extend(p.q.iter().map(f64::to_string));
        row.push(p.gamma_distance.to_string());
        row.push(fmt_opt(p.beta_distance));
        row.push(p.cost.to_string());
        row
    });
    write_csv(path, &header, rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    scenario: Option<&'a str>,
    rng: &'a str,
    horizon: u64,
    burn_in: u64,
    seeds: &'a [u64],
    runs: usize,
    failed_runs: usize,
    relearn_periods: Vec<u64>,
    theta_log_base: String,
    slack_check_is_sampled: bool,
    files: Vec<String>,
}

fn write_outputs(sc: &Scenario, inst: &NetworkInstance, report: &mut SweepReport, out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))?;
    let r = inst.r();

    let summary = out.join("summary.csv");
    write_csv(&summary, &summary_header(r), report.results.iter().map(|(j, res)| summary_row(j, res, r)))?;
    report.files.push(summary);

    let oracle = out.join("oracle.csv");
    write_csv(&oracle, &oracle_header(r), report.oracles.iter().map(oracle_row))?;
    report.files.push(oracle);

    if let Some(check) = &report.slack_check {
        let path = out.join("assumption_check.csv");
        let header = ["epsilon_s", "perturbation_count", "nominal_slack", "min_slack", "sampled"].map(String::from);
        let row = vec![
            check.epsilon_s.to_string(),
            check.perturbation_count.to_string(),
            check.nominal_slack.to_string(),
            check.min_slack.to_string(),
            "true".to_string(),
        ];
        write_csv(&path, &header, [row])?;
        report.files.push(path);
    }

    let traced: Vec<&RunResult> =
        report.results.iter().filter_map(|(_, r)| r.as_ref().ok()).filter(|r| r.metadata.config.record_trace).collect();
    if !traced.is_empty() {
        let dir = out.join("traces");
        fs::create_dir_all(&dir)?;
        for res in traced {
            let path = dir.join(trace_file_name(res));
            write_trace(&path, res, r)?;
            report.files.push(path);
        }
    }

    let manifest = Manifest {
        scenario: sc.name.as_deref(),
        rng: RNG_ALGORITHM,
        horizon: sc.horizon,
        burn_in: 0,
        seeds: &sc.seeds,
        runs: report.results.len(),
        failed_runs: report.failures(),
        relearn_periods: sc.controllers.iter().map(|c| c.at(1.0).relearn_period).collect(),
        theta_log_base: sc.controllers.iter().find_map(|c| c.theta_log_base).map_or("e".into(), |b| b.to_string()),
        slack_check_is_sampled: report.slack_check.is_some(),
        files: report.files.iter().map(|p| p.strip_prefix(out).unwrap_or(p).display().to_string()).collect(),
    };
    let path = out.join("manifest.toml");
    fs::write(&path, toml::to_string(&manifest)?)?;
    report.files.push(path);
    Ok(())
}
