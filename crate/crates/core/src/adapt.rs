//! Deployment phase: a pre-trained agent keeps controlling one
//! intersection while the detection rate drifts, optionally learning online
//! from the partial reward, and a monitor flags abrupt waiting-time spikes.

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Transition};
use crate::env::{EnvConfig, TrafficEnv};
use crate::error::{error_chain, ConfigError, HarnessError};
use crate::harness::{episode_seed, SeedStream};
use crate::sim::{ClassTallies, Simulation};

/// Piecewise-linear detection rate over time, clamped outside its span.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSchedule {
    /// `(time in seconds, rate)` pairs with strictly increasing times.
    pub breakpoints: Vec<(f64, f64)>,
}

impl DetectionSchedule {
    pub fn new(breakpoints: Vec<(f64, f64)>) -> Result<Self, ConfigError> {
        let s = Self { breakpoints };
        s.validate()?;
        Ok(s)
    }

    pub fn constant(rate: f64) -> Result<Self, ConfigError> {
        Self::new(vec![(0.0, rate)])
    }

    /// Linear ramp from `from` at time 0 to `to` at `duration` seconds.
    pub fn ramp(from: f64, to: f64, duration: f64) -> Result<Self, ConfigError> {
        Self::new(vec![(0.0, from), (duration, to)])
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.breakpoints.is_empty() {
            return Err(ConfigError::invalid("schedule", "needs at least one breakpoint"));
        }
        if self.breakpoints.windows(2).any(|w| !(w[1].0 > w[0].0)) {
            return Err(ConfigError::invalid("schedule", "breakpoint times must be strictly increasing"));
        }
        if self.breakpoints.iter().any(|&(t, r)| !t.is_finite() || !(0.0..=1.0).contains(&r)) {
            return Err(ConfigError::invalid("schedule", "rates must lie in [0, 1] at finite times"));
        }
        Ok(())
    }

    pub fn rate_at(&self, t: f64) -> f64 {
        let bp = &self.breakpoints;
        let (first, last) = (bp[0], bp[bp.len() - 1]);
        if t <= first.0 {
            return first.1;
        }
        if t >= last.0 {
            return last.1;
        }
        let i = bp.partition_point(|&(time, _)| time <= t);
        let ((t0, r0), (t1, r1)) = (bp[i - 1], bp[i]);
        r0 + (r1 - r0) * (t - t0) / (t1 - t0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeploymentConfig {
    /// `None` ramps the rate from 0.1 to 1.0 over the whole horizon.
    pub schedule: Option<DetectionSchedule>,
    pub total_steps: u64,
    /// Steps between online updates; 0 disables learning.
    pub update_period: u64,
    /// Steps per timeline point.
    pub window: u64,
    /// A point is flagged when its wait exceeds `threshold` times the median
    /// of the preceding points.
    pub threshold: f64,
    /// How many preceding points the median looks back over.
    pub median_lookback: usize,
    /// Sample actions (policy agents) or use ε-greedy (DQL) while deployed.
    pub explore: bool,
    pub seed: u64,
}

impl Default for DeploymentConfig {
    fn default() -> Self {
        Self {
            schedule: None,
            total_steps: 200_000,
            update_period: 256,
            window: 2_000,
            threshold: 3.0,
            median_lookback: 5,
            explore: true,
            seed: 0,
        }
    }
}

impl DeploymentConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.threshold > 1.0) {
            return Err(ConfigError::invalid("threshold", format!("must be > 1, got {}", self.threshold)));
        }
        if self.window == 0 {
            return Err(ConfigError::invalid("window", "must be positive"));
        }
        if self.median_lookback == 0 {
            return Err(ConfigError::invalid("median_lookback", "must be positive"));
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        Ok(())
    }

    /// The configured schedule, or the default ramp over `total_steps`.
    pub fn resolved_schedule(&self, time_step: f64) -> DetectionSchedule {
        self.schedule.clone().unwrap_or_else(|| DetectionSchedule {
            breakpoints: vec![(0.0, 0.1), ((self.total_steps as f64 * time_step).max(f64::MIN_POSITIVE), 1.0)],
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelinePoint {
    /// Steps completed at the end of the window.
    pub step: u64,
    pub detection_rate: f64,
    pub wait_all: Option<f64>,
    pub wait_detected: Option<f64>,
    pub wait_undetected: Option<f64>,
    pub instability_flag: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DeploymentRun {
    pub timeline: Vec<TimelinePoint>,
    pub flags: usize,
    pub online_updates: u64,
    /// Set when the run stopped early; the timeline covers the steps before.
    pub failure: Option<String>,
}

/// Median of a non-empty slice.
fn median(values: &mut [f64]) -> f64 {
    values.sort_by(|a, b| a.total_cmp(b));
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Flags entries exceeding `threshold` times the median of up to `lookback`
/// preceding entries. Missing values are never flagged and are skipped by
/// the median.
pub fn detect_instability(series: &[Option<f64>], threshold: f64, lookback: usize) -> Vec<bool> {
    let mut flags = Vec::with_capacity(series.len());
    for (i, v) in series.iter().enumerate() {
        let mut previous: Vec<f64> = series[..i].iter().rev().flatten().take(lookback).copied().collect();
        let flag = match v {
            Some(v) if !previous.is_empty() => *v > threshold * median(&mut previous),
            _ => false,
        };
        flags.push(flag);
    }
    flags
}

/// Waits of vehicles that left since `since`, plus, censored at the current
/// clock, every vehicle still inside the intersection.
fn window_tallies(sim: &Simulation, since: &ClassTallies) -> ClassTallies {
    let mut t = sim.tallies().since(since);
    for v in sim.vehicles() {
        t.record(v, sim.clock() - v.spawn_time);
    }
    t
}

/// Runs `agent` on one uninterrupted intersection for `deploy.total_steps`.
pub fn run_deployment(agent: &mut Agent, env_config: &EnvConfig, deploy: &DeploymentConfig) -> Result<DeploymentRun, HarnessError> {
    deploy.validate()?;
    let mut run = DeploymentRun { timeline: Vec::new(), flags: 0, online_updates: 0, failure: None };
    if deploy.total_steps == 0 {
        return Ok(run);
    }
    if let Some(dim) = agent.input_dim() {
        if dim != env_config.observation_len() {
            return Err(HarnessError::ObservationShape { agent: dim, env: env_config.observation_len() });
        }
    }
    let dt = env_config.sim.time_step;
    let schedule = deploy.resolved_schedule(dt);
    let mut config = env_config.clone();
    config.episode_length = deploy.total_steps as f64 * dt;
    config.sim.detection_rate = schedule.rate_at(0.0);
    let mut env = TrafficEnv::new(config)?;
    let mut obs = env.reset_with_seed(episode_seed(deploy.seed, SeedStream::Deployment, 0));

    let mut recent = Vec::new();
    let mut window_start = ClassTallies::default();
    let mut raw = Vec::new();
    for step in 1..=deploy.total_steps {
        env.set_detection_rate(schedule.rate_at((step - 1) as f64 * dt))?;
        let action = agent.act(&obs, deploy.explore);
        let out = env.step(action)?;
        let transition = Transition { obs, action, reward: out.reward, next_obs: out.observation, done: false };
        obs = out.observation;
        if deploy.update_period > 0 {
            agent.remember(&transition);
            recent.push(transition);
            if recent.len() as u64 >= deploy.update_period {
                let result = agent.online_update(&recent);
                recent.clear();
                match result {
                    Ok(Some(_)) => run.online_updates += 1,
                    Ok(None) => {}
                    Err(e) => {
                        run.failure = Some(format!("step {step}: {}", error_chain(&e)));
                        break;
                    }
                }
            }
        }
        if step % deploy.window == 0 || step == deploy.total_steps {
            let t = window_tallies(env.sim(), &window_start);
            window_start = *env.sim().tallies();
            raw.push(TimelinePoint {
                step,
                detection_rate: schedule.rate_at(step as f64 * dt),
                wait_all: t.all.mean_wait(),
                wait_detected: t.detected.mean_wait(),
                wait_undetected: t.undetected.mean_wait(),
                instability_flag: false,
            });
        }
    }
    let series: Vec<Option<f64>> = raw.iter().map(|p| p.wait_all).collect();
    for (p, flag) in raw.iter_mut().zip(detect_instability(&series, deploy.threshold, deploy.median_lookback)) {
        p.instability_flag = flag;
    }
    run.flags = raw.iter().filter(|p| p.instability_flag).count();
    run.timeline = raw;
    Ok(run)
}
