use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use log::{error, info};
use stochnet_cli::runner::{oracle_header, oracle_row};
use stochnet_cli::{emit_plotdata, run_scenario, RunOptions, Scenario, OUT_ENV};
use stochnet_core::dual::OracleSummary;
use stochnet_core::model::load_instance;

#[derive(Parser)]
#[command(name = "stochnet", version, about = "Backpressure, OLAC and OLAC2 experiment runner")]
struct Cli {
    /// Output directory (defaults to the scenario's, then $STOCHNET_OUT, then ./out).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for concurrent runs.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Write per-run trace files.
    #[arg(long, global = true)]
    trace: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a scenario sweep.
    Run { scenario: PathBuf },
    /// Print γ*, f*, η₀, ρ̂ and D_p for an instance file.
    Oracle {
        instance: PathBuf,
        #[arg(long = "V", short = 'V')]
        v: f64,
    },
    /// Aggregate a summary.csv into per-figure tables.
    Plotdata { summary: PathBuf },
}

fn default_out(cli: &Option<PathBuf>, scenario: Option<&Scenario>) -> PathBuf {
    cli.clone()
        .or_else(|| scenario.and_then(|s| s.output_dir.clone()))
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"))
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Run { scenario } => {
            let sc = Scenario::load(&scenario)?;
            let out_dir = default_out(&cli.out, Some(&sc));
            let opts = RunOptions { out_dir: out_dir.clone(), workers: cli.workers, trace: cli.trace };
            let report = run_scenario(&sc, &opts)?;
            info!("wrote {} files to {}", report.files.len(), out_dir.display());
            if let Some(check) = &report.slack_check {
                println!(
                    "slack spot check: min slack {:.6} over {} sampled distributions within {} of pi (sampled, not proven)",
                    check.min_slack, check.perturbation_count, check.epsilon_s
                );
            }
            println!("{} runs, {} failed; outputs in {}", report.results.len(), report.failures(), out_dir.display());
            Ok(report.failures() == 0)
        }
        Command::Oracle { instance, v } => {
            let text = std::fs::read_to_string(&instance).with_context(|| format!("reading {}", instance.display()))?;
            let inst = load_instance(&text)?;
            let o = OracleSummary::compute(&inst, &inst.probabilities(), v)?;
            let mut w =
                csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(std::io::stdout());
            w.write_record(oracle_header(inst.r()))?;
            w.write_record(oracle_row(&o))?;
            w.flush()?;
            Ok(true)
        }
        Command::Plotdata { summary } => {
            let pd = emit_plotdata(&summary, cli.out.as_deref())?;
            for f in &pd.files {
                println!("{}", f.display());
            }
            for (ctl, slope) in &pd.convergence_slopes {
                match slope {
                    Some(s) => println!("{ctl}: log-log convergence slope {s:.3}"),
                    None => println!("{ctl}: log-log convergence slope undefined"),
                }
            }
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match execute(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            error!("{e:#}");
            ExitCode::FAILURE
        }
    }
}
