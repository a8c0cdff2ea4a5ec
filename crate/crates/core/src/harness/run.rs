//! Training and evaluation loops shared by every command.

use serde::{Deserialize, Serialize};

use crate::agents::{Agent, Transition};
use crate::env::{EnvConfig, TrafficEnv};
use crate::error::{EnvError, HarnessError};
use crate::sim::{ClassTallies, Simulation};

/// Seed streams keep training, evaluation and deployment episodes apart.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SeedStream {
    Training = 1,
    Evaluation = 2,
    Deployment = 3,
}

/// Simulator seed for episode `index` of `stream` under run seed `seed`.
pub fn episode_seed(seed: u64, stream: SeedStream, index: u64) -> u64 {
    let mut z = seed
        .wrapping_mul(0x9E37_79B9_7F4A_7C15)
        .wrapping_add((stream as u64).wrapping_mul(0xBF58_476D_1CE4_E5B9))
        .wrapping_add(index.wrapping_mul(0x94D0_49BB_1331_11EB));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Waiting times of vehicles that left the intersection plus, censored at
/// the current clock, those still inside it.
pub fn episode_tallies(sim: &Simulation) -> ClassTallies {
    let mut tallies = *sim.tallies();
    for v in sim.vehicles() {
        tallies.record(v, sim.clock() - v.spawn_time);
    }
    tallies
}

/// One finished training episode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: u64,
    pub steps: u64,
    pub return_partial: f64,
    pub return_full: f64,
    pub wait_all: Option<f64>,
    pub wait_detected: Option<f64>,
    pub wait_undetected: Option<f64>,
}

#[derive(Debug)]
pub struct TrainingFailure {
    pub error: HarnessError,
    /// Episodes completed before the failure.
    pub curve: Vec<EpisodeRecord>,
}

fn check_shape(agent: &Agent, env: &EnvConfig) -> Result<(), HarnessError> {
    match agent.input_dim() {
        Some(dim) if dim != env.observation_len() => {
            Err(HarnessError::ObservationShape { agent: dim, env: env.observation_len() })
        }
        _ => Ok(()),
    }
}

/// Trains `agent` for `steps` environment steps with exploration, starting
/// fresh episodes as they finish. Returns the per-episode learning curve.
pub fn train(agent: &mut Agent, env_config: &EnvConfig, steps: u64, seed: u64) -> Result<Vec<EpisodeRecord>, TrainingFailure> {
    let fail = |error: HarnessError, curve: Vec<EpisodeRecord>| TrainingFailure { error, curve };
    if let Err(e) = check_shape(agent, env_config) {
        return Err(fail(e, Vec::new()));
    }
    let mut env = TrafficEnv::new(env_config.clone()).map_err(|e| fail(e.into(), Vec::new()))?;
    let mut curve = Vec::new();
    if steps == 0 || !agent.algorithm().is_learning() {
        return Ok(curve);
    }
    agent.begin_training(steps);
    let mut episode = 0u64;
    let mut obs = env.reset_with_seed(episode_seed(seed, SeedStream::Training, episode));
    let (mut ret_partial, mut ret_full, mut ep_steps) = (0.0, 0.0, 0u64);
    for _ in 0..steps {
        let action = agent.act(&obs, true);
        let out = match env.step(action) {
            Ok(out) => out,
            Err(e) => return Err(fail(e.into(), curve)),
        };
        ret_partial += out.info.reward.partial;
        ret_full += out.info.reward.full;
        ep_steps += 1;
        let transition = Transition { obs, action, reward: out.reward, next_obs: out.observation, done: out.done };
        if let Err(e) = agent.observe(transition) {
            return Err(fail(e.into(), curve));
        }
        obs = out.observation;
        if out.done {
            let tallies = episode_tallies(env.sim());
            curve.push(EpisodeRecord {
                episode,
                steps: ep_steps,
                return_partial: ret_partial,
                return_full: ret_full,
                wait_all: tallies.all.mean_wait(),
                wait_detected: tallies.detected.mean_wait(),
                wait_undetected: tallies.undetected.mean_wait(),
            });
            episode += 1;
            obs = env.reset_with_seed(episode_seed(seed, SeedStream::Training, episode));
            (ret_partial, ret_full, ep_steps) = (0.0, 0.0, 0);
        }
    }
    Ok(curve)
}

/// Greedy evaluation results pooled over episodes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub episodes: usize,
    pub tallies: ClassTallies,
    pub returns_partial: Vec<f64>,
    pub returns_full: Vec<f64>,
    /// Mean over steps of the total queue length across approaches.
    pub mean_queue: f64,
    pub max_queue: usize,
}

impl EvalSummary {
    pub fn wait_all(&self) -> Option<f64> {
        self.tallies.all.mean_wait()
    }

    pub fn wait_detected(&self) -> Option<f64> {
        self.tallies.detected.mean_wait()
    }

    pub fn wait_undetected(&self) -> Option<f64> {
        self.tallies.undetected.mean_wait()
    }

    pub fn mean_return(&self) -> f64 {
        mean(&self.returns_partial)
    }
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

/// Runs `episodes` greedy episodes; `seed` selects the episode seeds.
pub fn evaluate(agent: &Agent, env_config: &EnvConfig, episodes: usize, seed: u64) -> Result<EvalSummary, HarnessError> {
    check_shape(agent, env_config)?;
    let mut env = TrafficEnv::new(env_config.clone())?;
    let mut summary = EvalSummary {
        episodes,
        tallies: ClassTallies::default(),
        returns_partial: Vec::with_capacity(episodes),
        returns_full: Vec::with_capacity(episodes),
        mean_queue: 0.0,
        max_queue: 0,
    };
    let mut queue_sum = 0.0;
    let mut queue_samples = 0u64;
    for ep in 0..episodes {
        let mut obs = env.reset_with_seed(episode_seed(seed, SeedStream::Evaluation, ep as u64));
        let (mut rp, mut rf) = (0.0, 0.0);
        loop {
            let out = env.step(agent.greedy_action(&obs)).map_err(|e: EnvError| HarnessError::from(e))?;
            rp += out.info.reward.partial;
            rf += out.info.reward.full;
            let queue: usize = out.info.metrics.queue_lengths.iter().sum();
            queue_sum += queue as f64;
            queue_samples += 1;
            summary.max_queue = summary.max_queue.max(queue);
            obs = out.observation;
            if out.done {
                break;
            }
        }
        summary.tallies.merge(&episode_tallies(env.sim()));
        summary.returns_partial.push(rp);
        summary.returns_full.push(rf);
    }
    if queue_samples > 0 {
        summary.mean_queue = queue_sum / queue_samples as f64;
    }
    Ok(summary)
}
