use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use pdtsc::agents::Algorithm;
use pdtsc::harness::{cmd_adapt, cmd_eval, cmd_sweep, cmd_train, ExperimentConfig, Overrides};
use pdtsc::sim::Scenario;

/// Traffic signal control under partial vehicle detection.
#[derive(Parser)]
#[command(name = "pdtsc", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train each (algorithm, rate, seed) cell and save checkpoints and learning curves.
    Train(Common),
    /// Evaluate agents across detection rates; writes sweep.csv and sweep.svg.
    Sweep(Common),
    /// Deploy pre-trained agents under a drifting detection rate; writes timelines.
    Adapt(Common),
    /// Greedy evaluation of one checkpoint.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        checkpoint: PathBuf,
    },
}

#[derive(Args)]
struct Common {
    /// TOML experiment file; flags below override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Comma-separated algorithms: dql, a2c, ppo, acktr, fixed.
    #[arg(long, value_delimiter = ',')]
    algo: Option<Vec<Algorithm>>,
    /// Comma-separated detection rates.
    #[arg(long, value_delimiter = ',')]
    rates: Option<Vec<f64>>,
    /// sparse, medium or dense.
    #[arg(long)]
    scenario: Option<Scenario>,
    /// Training steps (deployment steps for `adapt`).
    #[arg(long)]
    steps: Option<u64>,
    /// Evaluation episodes.
    #[arg(long)]
    episodes: Option<usize>,
}

impl Common {
    fn load(&self, steps_are_deployment: bool) -> Result<ExperimentConfig> {
        let mut config = match &self.config {
            Some(path) => ExperimentConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
            None => ExperimentConfig::default(),
        };
        let overrides = Overrides {
            seed: self.seed,
            out: self.out.clone(),
            algorithms: self.algo.clone(),
            rates: self.rates.clone(),
            scenario: self.scenario,
            steps: self.steps,
            episodes: self.episodes,
        };
        overrides.apply(&mut config, steps_are_deployment)?;
        Ok(config)
    }
}

fn fmt_wait(w: Option<f64>) -> String {
    w.map(|w| format!("{w:.2}")).unwrap_or_else(|| "-".into())
}

fn report_failures(failures: &[String]) -> ExitCode {
    for f in failures {
        eprintln!("failed: {f}");
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train(common) => {
            let config = common.load(false)?;
            let report = cmd_train(&config)?;
            for c in &report.cells {
                if let Some(path) = &c.checkpoint {
                    println!("{} rate {} seed {}: {} episodes -> {}", c.algorithm, c.detection_rate, c.seed, c.episodes, path.display());
                }
            }
            Ok(report_failures(&report.failures()))
        }
        Command::Sweep(common) => {
            let config = common.load(false)?;
            let report = cmd_sweep(&config)?;
            println!("algorithm  rate  seed  wait_all  wait_detected  wait_undetected");
            for r in &report.records {
                println!(
                    "{:<9}  {:<4}  {:<4}  {:>8}  {:>13}  {:>15}",
                    r.algorithm.name(),
                    r.detection_rate,
                    r.seed,
                    fmt_wait(r.wait_all),
                    fmt_wait(r.wait_detected),
                    fmt_wait(r.wait_undetected)
                );
            }
            println!("wrote {}", report.csv.display());
            Ok(report_failures(&report.failures))
        }
        Command::Adapt(common) => {
            let config = common.load(true)?;
            let report = cmd_adapt(&config)?;
            println!("algorithm  seed  flags  points  updates  status");
            for r in &report.summary {
                println!("{:<9}  {:<4}  {:>5}  {:>6}  {:>7}  {}", r.algorithm.name(), r.seed, r.flags, r.points, r.online_updates, r.status);
            }
            Ok(report_failures(&report.failures))
        }
        Command::Eval { common, checkpoint } => {
            let config = common.load(false)?;
            let r = cmd_eval(&config, &checkpoint)?;
            println!(
                "{} on {} at rate {}: wait all {} detected {} undetected {} | return {:.1} ± {:.1} | queue mean {:.2} max {}",
                r.algorithm,
                r.scenario,
                r.detection_rate,
                fmt_wait(r.wait_all),
                fmt_wait(r.wait_detected),
                fmt_wait(r.wait_undetected),
                r.return_mean,
                r.return_std,
                r.queue_mean,
                r.queue_max
            );
            Ok(ExitCode::SUCCESS)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
