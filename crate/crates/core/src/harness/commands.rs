//! The four subcommands: `train`, `sweep`, `adapt` and `eval`.
//!
//! Cells (algorithm, rate, seed) run on the rayon pool and are sorted by
//! key before anything is written, so outputs do not depend on scheduling.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::config::ExperimentConfig;
use super::records::{
    mean_std, summarize, write_csv, write_file, EvalRecord, InstabilityRecord, SweepRecord,
};
use super::svg::{line_chart, Series};
use super::{evaluate, train, EpisodeRecord};
use crate::adapt::{run_deployment, DeploymentRun, TimelinePoint};
use crate::agents::{Agent, Algorithm};
use crate::error::{error_chain, HarnessError};

/// File stem shared by a cell's checkpoint and learning curve.
pub fn cell_stem(algorithm: Algorithm, rate: f64, seed: u64) -> String {
    format!("{algorithm}_r{rate}_s{seed}")
}

pub fn checkpoint_path(dir: &Path, algorithm: Algorithm, rate: f64, seed: u64) -> PathBuf {
    dir.join(format!("{}.ckpt", cell_stem(algorithm, rate, seed)))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainCell {
    pub algorithm: Algorithm,
    pub detection_rate: f64,
    pub seed: u64,
    pub checkpoint: Option<PathBuf>,
    pub episodes: usize,
    pub error: Option<String>,
}

#[derive(Debug, Default)]
pub struct TrainReport {
    pub cells: Vec<TrainCell>,
}

impl TrainReport {
    pub fn failures(&self) -> Vec<String> {
        self.cells
            .iter()
            .filter_map(|c| {
                c.error.as_ref().map(|e| format!("{}: {e}", cell_stem(c.algorithm, c.detection_rate, c.seed)))
            })
            .collect()
    }
}

#[derive(Debug, Default)]
pub struct SweepReport {
    pub records: Vec<SweepRecord>,
    pub failures: Vec<String>,
    pub csv: PathBuf,
    pub svg: Option<PathBuf>,
}

#[derive(Debug, Default)]
pub struct AdaptReport {
    pub runs: Vec<(Algorithm, u64, DeploymentRun)>,
    pub summary: Vec<InstabilityRecord>,
    pub failures: Vec<String>,
}

fn cells(config: &ExperimentConfig, rates: &[f64]) -> Vec<(Algorithm, f64, u64)> {
    let exp = &config.experiment;
    let mut out = Vec::new();
    for &alg in &exp.algorithms {
        for &rate in rates {
            for &seed in &exp.seeds {
                out.push((alg, rate, seed));
            }
        }
    }
    out.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));
    out.dedup();
    out
}

/// Trains a fresh agent for one cell, writing its checkpoint and curve
/// under `out_dir`. The curve is written even when training fails.
fn train_cell(config: &ExperimentConfig, algorithm: Algorithm, rate: f64, seed: u64) -> Result<(Agent, usize), HarnessError> {
    let out = &config.experiment.out_dir;
    let env = config.env_config(rate)?;
    let mut agent = Agent::new(config.agent_config(algorithm, seed)?, env.observation_len())?;
    let stem = cell_stem(algorithm, rate, seed);
    let result = train(&mut agent, &env, config.experiment.train_steps, seed);
    let (curve, error): (Vec<EpisodeRecord>, _) = match result {
        Ok(curve) => (curve, None),
        Err(f) => (f.curve, Some(f.error)),
    };
    write_csv(&out.join("curves").join(format!("{stem}.csv")), &curve)?;
    if let Some(e) = error {
        return Err(e);
    }
    let path = checkpoint_path(&out.join("checkpoints"), algorithm, rate, seed);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir).map_err(|e| HarnessError::io(dir, e))?;
    }
    agent.save(&path)?;
    Ok((agent, curve.len()))
}

/// Inline training or a checkpoint load, per `experiment.train_inline`.
fn obtain_agent(config: &ExperimentConfig, algorithm: Algorithm, rate: f64, seed: u64) -> Result<Agent, HarnessError> {
    if config.experiment.train_inline {
        return train_cell(config, algorithm, rate, seed).map(|(agent, _)| agent);
    }
    let path = checkpoint_path(&config.experiment.checkpoint_dir(), algorithm, rate, seed);
    if !path.exists() {
        return Err(HarnessError::io(&path, std::io::Error::new(std::io::ErrorKind::NotFound, "missing checkpoint")));
    }
    Ok(Agent::load_expecting(&path, algorithm)?)
}

pub fn cmd_train(config: &ExperimentConfig) -> Result<TrainReport, HarnessError> {
    config.validate()?;
    let cells = cells(config, &config.experiment.rates);
    let results: Vec<TrainCell> = cells
        .par_iter()
        .map(|&(algorithm, rate, seed)| {
            match train_cell(config, algorithm, rate, seed) {
                Ok((_, episodes)) => TrainCell {
                    algorithm,
                    detection_rate: rate,
                    seed,
                    checkpoint: Some(checkpoint_path(&config.experiment.out_dir.join("checkpoints"), algorithm, rate, seed)),
                    episodes,
                    error: None,
                },
                Err(e) => TrainCell { algorithm, detection_rate: rate, seed, checkpoint: None, episodes: 0, error: Some(error_chain(&e)) },
            }
        })
        .collect();
    Ok(TrainReport { cells: results })
}

/// Chart series (all, detected, undetected) per algorithm, averaged over seeds.
fn sweep_series(records: &[SweepRecord]) -> Vec<Series> {
    let summary = summarize(records);
    let mut algorithms: Vec<Algorithm> = summary.iter().map(|s| s.algorithm).collect();
    algorithms.dedup();
    let mut series = Vec::new();
    for alg in algorithms {
        let rows: Vec<_> = summary.iter().filter(|s| s.algorithm == alg).collect();
        for (class, pick) in [
            ("all", (|s: &super::records::SweepSummary| s.wait_all_mean) as fn(&_) -> Option<f64>),
            ("detected", |s| s.wait_detected_mean),
            ("undetected", |s| s.wait_undetected_mean),
        ] {
            series.push(Series {
                name: format!("{alg} {class}"),
                points: rows.iter().filter_map(|s| pick(s).map(|w| (s.detection_rate, w))).collect(),
            });
        }
    }
    series
}

pub fn cmd_sweep(config: &ExperimentConfig) -> Result<SweepReport, HarnessError> {
    config.validate()?;
    let exp = &config.experiment;
    let outcomes: Vec<((Algorithm, f64, u64), Result<SweepRecord, String>)> = cells(config, &exp.rates)
        .par_iter()
        .map(|&(algorithm, rate, seed)| {
            let run = || -> Result<SweepRecord, HarnessError> {
                let agent = obtain_agent(config, algorithm, rate, seed)?;
                let summary = evaluate(&agent, &config.env_config(rate)?, exp.eval_episodes, seed)?;
                Ok(SweepRecord {
                    algorithm,
                    scenario: exp.scenario,
                    detection_rate: rate,
                    seed,
                    wait_all: summary.wait_all(),
                    wait_detected: summary.wait_detected(),
                    wait_undetected: summary.wait_undetected(),
                    episodes: summary.episodes,
                })
            };
            ((algorithm, rate, seed), run().map_err(|e| error_chain(&e)))
        })
        .collect();
    let mut report = SweepReport { csv: exp.out_dir.join("sweep.csv"), ..SweepReport::default() };
    for ((alg, rate, seed), outcome) in outcomes {
        match outcome {
            Ok(r) => report.records.push(r),
            Err(e) => report.failures.push(format!("{}: {e}", cell_stem(alg, rate, seed))),
        }
    }
    write_csv(&report.csv, &report.records)?;
    write_csv(&exp.out_dir.join("sweep_summary.csv"), &summarize(&report.records))?;
    match line_chart(
        &format!("{}: waiting time vs detection rate ({})", exp.name, exp.scenario),
        "detection rate",
        "mean waiting time (s)",
        &sweep_series(&report.records),
    ) {
        Ok(svg) => {
            let path = exp.out_dir.join("sweep.svg");
            write_file(&path, svg.as_bytes())?;
            report.svg = Some(path);
        }
        Err(e) => report.failures.push(format!("sweep chart: {e}")),
    }
    Ok(report)
}

/// One series per algorithm: wait of all vehicles per timeline step,
/// averaged over the runs that reported it.
fn adapt_series(runs: &[(Algorithm, u64, DeploymentRun)]) -> Vec<Series> {
    let mut algorithms: Vec<Algorithm> = runs.iter().map(|r| r.0).collect();
    algorithms.dedup();
    algorithms
        .into_iter()
        .map(|alg| {
            let mut steps: Vec<u64> = runs
                .iter()
                .filter(|r| r.0 == alg)
                .flat_map(|r| r.2.timeline.iter().map(|p| p.step))
                .collect();
            steps.sort_unstable();
            steps.dedup();
            let points = steps
                .into_iter()
                .filter_map(|step| {
                    let waits: Vec<f64> = runs
                        .iter()
                        .filter(|r| r.0 == alg)
                        .filter_map(|r| r.2.timeline.iter().find(|p| p.step == step).and_then(|p| p.wait_all))
                        .collect();
                    mean_std(&waits).map(|(m, _)| (step as f64, m))
                })
                .collect();
            Series { name: alg.to_string(), points }
        })
        .collect()
}

pub fn cmd_adapt(config: &ExperimentConfig) -> Result<AdaptReport, HarnessError> {
    config.validate()?;
    let exp = &config.experiment;
    let start_rate = config.deploy.resolved_schedule(config.sim_config()?.time_step).rate_at(0.0);
    let outcomes: Vec<(Algorithm, u64, Result<DeploymentRun, String>)> = cells(config, &[start_rate])
        .par_iter()
        .map(|&(algorithm, rate, seed)| {
            let run = || -> Result<DeploymentRun, HarnessError> {
                let mut agent = obtain_agent(config, algorithm, rate, seed)?;
                let deploy = crate::adapt::DeploymentConfig { seed, ..config.deploy.clone() };
                run_deployment(&mut agent, &config.env_config(rate)?, &deploy)
            };
            (algorithm, seed, run().map_err(|e| error_chain(&e)))
        })
        .collect();
    let mut report = AdaptReport::default();
    for (algorithm, seed, outcome) in outcomes {
        let path = exp.out_dir.join("timelines").join(format!("{algorithm}_s{seed}.csv"));
        match outcome {
            Ok(run) => {
                write_csv(&path, &run.timeline)?;
                let status = match &run.failure {
                    Some(f) => {
                        report.failures.push(format!("{algorithm} seed {seed}: {f}"));
                        format!("failed: {f}")
                    }
                    None => "ok".to_string(),
                };
                report.summary.push(InstabilityRecord {
                    algorithm,
                    seed,
                    flags: run.flags,
                    points: run.timeline.len(),
                    online_updates: run.online_updates,
                    status,
                });
                report.runs.push((algorithm, seed, run));
            }
            Err(e) => {
                write_csv::<TimelinePoint>(&path, &[])?;
                report.failures.push(format!("{algorithm} seed {seed}: {e}"));
                report.summary.push(InstabilityRecord {
                    algorithm,
                    seed,
                    flags: 0,
                    points: 0,
                    online_updates: 0,
                    status: format!("failed: {e}"),
                });
            }
        }
    }
    write_csv(&exp.out_dir.join("instability.csv"), &report.summary)?;
    match line_chart(
        &format!("{}: waiting time during deployment ({})", exp.name, exp.scenario),
        "step",
        "mean waiting time (s)",
        &adapt_series(&report.runs),
    ) {
        Ok(svg) => write_file(&exp.out_dir.join("adapt.svg"), svg.as_bytes())?,
        Err(e) => report.failures.push(format!("adapt chart: {e}")),
    }
    Ok(report)
}

/// Greedy evaluation of a checkpoint at the first configured rate and seed.
pub fn cmd_eval(config: &ExperimentConfig, checkpoint: &Path) -> Result<EvalRecord, HarnessError> {
    config.validate()?;
    let exp = &config.experiment;
    let rate = exp.rates.first().copied().unwrap_or(1.0);
    let seed = exp.seeds[0];
    let agent = Agent::load(checkpoint)?;
    let summary = evaluate(&agent, &config.env_config(rate)?, exp.eval_episodes, seed)?;
    let (return_mean, return_std) = mean_std(&summary.returns_partial).unwrap_or((0.0, 0.0));
    let record = EvalRecord {
        algorithm: agent.algorithm(),
        scenario: exp.scenario,
        detection_rate: rate,
        seed,
        episodes: summary.episodes,
        wait_all: summary.wait_all(),
        wait_detected: summary.wait_detected(),
        wait_undetected: summary.wait_undetected(),
        return_mean,
        return_std,
        queue_mean: summary.mean_queue,
        queue_max: summary.max_queue,
    };
    write_csv(&exp.out_dir.join("eval.csv"), std::slice::from_ref(&record))?;
    Ok(record)
}
