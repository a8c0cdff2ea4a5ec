//! Signal controllers behind one interface: deep Q-learning, A2C, PPO,
//! ACKTR and a fixed-time baseline.

mod dql;
mod fixed;
pub mod objectives;
mod persist;
mod policy;

use serde::{Deserialize, Serialize};

pub use dql::{DqlAgent, ReplayBuffer, TabularQ};
pub use fixed::FixedTimeAgent;
pub use policy::{PolicyAgent, PolicyAlgorithm};

use crate::approx::{Activation, KfacConfig, OptimizerKind};
use crate::env::{Action, Observation};
use crate::error::{AgentError, ConfigError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    Dql,
    A2c,
    Ppo,
    Acktr,
    #[serde(rename = "fixed")]
    FixedTime,
}

impl Algorithm {
    pub const ALL: [Algorithm; 5] =
        [Algorithm::Dql, Algorithm::A2c, Algorithm::Ppo, Algorithm::Acktr, Algorithm::FixedTime];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Dql => "dql",
            Algorithm::A2c => "a2c",
            Algorithm::Ppo => "ppo",
            Algorithm::Acktr => "acktr",
            Algorithm::FixedTime => "fixed",
        }
    }

    pub fn is_learning(self) -> bool {
        self != Algorithm::FixedTime
    }
}

impl std::fmt::Display for Algorithm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Algorithm {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "dql" | "dqn" => Ok(Algorithm::Dql),
            "a2c" => Ok(Algorithm::A2c),
            "ppo" => Ok(Algorithm::Ppo),
            "acktr" => Ok(Algorithm::Acktr),
            "fixed" | "fixedtime" | "fixed_time" => Ok(Algorithm::FixedTime),
            _ => Err(ConfigError::UnknownAlgorithm(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerName {
    Sgd,
    Adam,
}

impl From<OptimizerName> for OptimizerKind {
    fn from(name: OptimizerName) -> Self {
        match name {
            OptimizerName::Sgd => OptimizerKind::Sgd,
            OptimizerName::Adam => OptimizerKind::adam(),
        }
    }
}

/// Hyperparameters for every controller. Fields irrelevant to the chosen
/// algorithm are ignored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub algorithm: Algorithm,
    pub seed: u64,
    /// Discount factor.
    pub gamma: f64,
    pub actor_lr: f64,
    pub critic_lr: f64,
    pub q_lr: f64,
    pub hidden_layers: Vec<usize>,
    pub hidden_activation: Activation,
    /// `None` picks Adam, or SGD for ACKTR.
    pub optimizer: Option<OptimizerName>,
    pub entropy_coef: f64,
    /// Environment steps per policy update.
    pub rollout_length: usize,
    pub clip_epsilon: f64,
    pub ppo_epochs: usize,
    pub ppo_minibatches: usize,
    pub kfac: KfacConfig,
    /// Largest parameter-space norm of one ACKTR step, per network.
    pub acktr_max_step: f64,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Share of training steps over which ε decays linearly.
    pub epsilon_decay_fraction: f64,
    pub replay_capacity: usize,
    pub batch_size: usize,
    pub learning_starts: usize,
    pub train_every: usize,
    /// Environment steps between target-network syncs.
    pub target_sync_period: usize,
    pub fixed_time_green: f64,
    /// Divisor applied to the raw phase-time slot before it reaches a
    /// network; the scaled value is capped at 1.
    pub phase_time_scale: f64,
    /// Present approaches in green-first order instead of N, S, E, W.
    pub phase_relative_features: bool,
    pub reward_scale: f64,
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::Ppo,
            seed: 0,
            gamma: 0.95,
            actor_lr: 1e-3,
            critic_lr: 3e-3,
            q_lr: 5e-4,
            hidden_layers: vec![64, 64],
            hidden_activation: Activation::Tanh,
            optimizer: None,
            entropy_coef: 0.01,
            rollout_length: 64,
            clip_epsilon: 0.2,
            ppo_epochs: 4,
            ppo_minibatches: 4,
            kfac: KfacConfig::default(),
            acktr_max_step: 0.05,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_decay_fraction: 0.2,
            replay_capacity: 50_000,
            batch_size: 32,
            learning_starts: 1_000,
            train_every: 4,
            target_sync_period: 1_000,
            fixed_time_green: 30.0,
            phase_time_scale: 60.0,
            phase_relative_features: true,
            reward_scale: 0.02,
        }
    }
}

impl AgentConfig {
    /// Defaults tuned per algorithm.
    pub fn for_algorithm(algorithm: Algorithm) -> Self {
        let base = Self { algorithm, ..Self::default() };
        match algorithm {
            Algorithm::Ppo => Self {
                gamma: 0.99,
                critic_lr: 1e-3,
                rollout_length: 256,
                reward_scale: 0.1,
                entropy_coef: 0.03,
                ..base
            },
            Algorithm::Acktr => Self { actor_lr: 0.05, critic_lr: 0.05, ..base },
            _ => base,
        }
    }

    pub fn optimizer_kind(&self) -> OptimizerKind {
        let name = self.optimizer.unwrap_or(match self.algorithm {
            Algorithm::Acktr => OptimizerName::Sgd,
            _ => OptimizerName::Adam,
        });
        name.into()
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(ConfigError::invalid("gamma", format!("must lie in (0, 1), got {}", self.gamma)));
        }
        if !(self.clip_epsilon > 0.0) {
            return Err(ConfigError::invalid("clip_epsilon", "must be > 0"));
        }
        for (name, rate) in [("actor_lr", self.actor_lr), ("critic_lr", self.critic_lr), ("q_lr", self.q_lr)] {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(ConfigError::invalid(name, format!("must be > 0, got {rate}")));
            }
        }
        if self.hidden_layers.contains(&0) {
            return Err(ConfigError::invalid("hidden_layers", "layer widths must be positive"));
        }
        for (name, n) in [
            ("rollout_length", self.rollout_length),
            ("ppo_epochs", self.ppo_epochs),
            ("ppo_minibatches", self.ppo_minibatches),
            ("replay_capacity", self.replay_capacity),
            ("batch_size", self.batch_size),
            ("train_every", self.train_every),
            ("target_sync_period", self.target_sync_period),
        ] {
            if n == 0 {
                return Err(ConfigError::invalid(name, "must be positive"));
            }
        }
        if !(0.0..=1.0).contains(&self.epsilon_start) || !(0.0..=1.0).contains(&self.epsilon_end) {
            return Err(ConfigError::invalid("epsilon_start", "exploration rates must lie in [0, 1]"));
        }
        if !(self.kfac.damping >= 0.0) || !(0.0..=1.0).contains(&self.kfac.decay) {
            return Err(ConfigError::invalid("kfac", "damping must be >= 0 and decay in [0, 1]"));
        }
        if !(self.acktr_max_step >= 0.0) {
            return Err(ConfigError::invalid("acktr_max_step", "must be >= 0"));
        }
        if !(self.phase_time_scale > 0.0) || !(self.reward_scale > 0.0) {
            return Err(ConfigError::invalid("phase_time_scale", "scales must be > 0"));
        }
        Ok(())
    }

    /// Network input vector for an observation: the slots in order with
    /// phase time scaled and capped, and, when `phase_relative_features` is
    /// set, the per-approach slots reordered so the green axis comes first.
    pub fn features(&self, obs: &Observation) -> Vec<f64> {
        let mut x = obs.to_vec();
        x[Observation::PHASE_TIME_SLOT] = (obs.phase_time / self.phase_time_scale).min(1.0);
        if self.phase_relative_features && obs.current_phase >= 0.5 {
            x[0..4].rotate_left(2);
            x[4..8].rotate_left(2);
        }
        x
    }
}

/// One environment interaction.
#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub obs: Observation,
    pub action: Action,
    pub reward: f64,
    pub next_obs: Observation,
    pub done: bool,
}

/// Losses reported by one update. DQL reports its TD loss as `critic_loss`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct UpdateReport {
    pub actor_loss: f64,
    pub critic_loss: f64,
}

/// One-step advantage `r + γ·V(s') − V(s)`, without bootstrap at episode end.
pub fn compute_advantage(reward: f64, v_next: f64, v_now: f64, gamma: f64, done: bool) -> f64 {
    let bootstrap = if done { 0.0 } else { gamma * v_next };
    reward + bootstrap - v_now
}

/// Index of the largest value; the lowest index wins ties.
pub(crate) fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn action_at(index: usize) -> Action {
    Action::from_index(index).expect("index below Action::COUNT")
}

#[derive(Debug, Clone)]
pub enum Agent {
    FixedTime(FixedTimeAgent),
    Dql(DqlAgent),
    Policy(PolicyAgent),
}

impl Agent {
    /// Fresh agent for observations of length `observation_len`.
    pub fn new(config: AgentConfig, observation_len: usize) -> Result<Self, AgentError> {
        config.validate()?;
        Ok(match config.algorithm {
            Algorithm::FixedTime => Agent::FixedTime(FixedTimeAgent::new(config)),
            Algorithm::Dql => Agent::Dql(DqlAgent::new(config, observation_len)),
            Algorithm::A2c => Agent::Policy(PolicyAgent::new(PolicyAlgorithm::A2c, config, observation_len)),
            Algorithm::Ppo => Agent::Policy(PolicyAgent::new(PolicyAlgorithm::Ppo, config, observation_len)),
            Algorithm::Acktr => Agent::Policy(PolicyAgent::new(PolicyAlgorithm::Acktr, config, observation_len)),
        })
    }

    pub fn algorithm(&self) -> Algorithm {
        self.config().algorithm
    }

    pub fn config(&self) -> &AgentConfig {
        match self {
            Agent::FixedTime(a) => a.config(),
            Agent::Dql(a) => a.config(),
            Agent::Policy(a) => a.config(),
        }
    }

    /// Observation length the agent was built for; `None` accepts any.
    pub fn input_dim(&self) -> Option<usize> {
        match self {
            Agent::FixedTime(_) => None,
            Agent::Dql(a) => Some(a.q_network().input_dim()),
            Agent::Policy(a) => Some(a.actor().input_dim()),
        }
    }

    /// Environment steps this agent has learned from.
    pub fn steps(&self) -> u64 {
        match self {
            Agent::FixedTime(_) => 0,
            Agent::Dql(a) => a.steps(),
            Agent::Policy(a) => a.steps(),
        }
    }

    pub fn act(&mut self, obs: &Observation, explore: bool) -> Action {
        match self {
            Agent::FixedTime(a) => a.act(obs),
            Agent::Dql(a) => a.act(obs, explore),
            Agent::Policy(a) => a.act(obs, explore),
        }
    }

    /// Deterministic action; safe to call from several threads at once.
    pub fn greedy_action(&self, obs: &Observation) -> Action {
        match self {
            Agent::FixedTime(a) => a.act(obs),
            Agent::Dql(a) => a.greedy_action(obs),
            Agent::Policy(a) => a.greedy_action(obs),
        }
    }

    /// Tells the agent how long training will last (sets DQL's ε schedule).
    pub fn begin_training(&mut self, total_steps: u64) {
        if let Agent::Dql(a) = self {
            a.set_exploration_horizon(total_steps);
        }
    }

    /// Training-time learning hook, called once per environment step. Each
    /// algorithm decides when to update.
    pub fn observe(&mut self, transition: Transition) -> Result<Option<UpdateReport>, AgentError> {
        match self {
            Agent::FixedTime(_) => Ok(None),
            Agent::Dql(a) => a.observe(transition),
            Agent::Policy(a) => a.observe(transition),
        }
    }

    /// Stores a deployment transition where the algorithm keeps history
    /// (DQL's replay buffer).
    pub fn remember(&mut self, transition: &Transition) {
        if let Agent::Dql(a) = self {
            a.remember(transition.clone());
        }
    }

    /// Deployment-time update on the transitions gathered since the last one.
    pub fn online_update(&mut self, recent: &[Transition]) -> Result<Option<UpdateReport>, AgentError> {
        if recent.is_empty() {
            return Ok(None);
        }
        match self {
            Agent::FixedTime(_) => Ok(None),
            Agent::Dql(a) => a.online_update(recent.len()),
            Agent::Policy(a) => a.update(recent).map(Some),
        }
    }

    /// All learnable parameters, flattened.
    pub fn parameters(&self) -> Vec<f64> {
        match self {
            Agent::FixedTime(_) => Vec::new(),
            Agent::Dql(a) => a.q_network().flatten(),
            Agent::Policy(a) => {
                let mut p = a.actor().flatten();
                p.extend(a.critic().flatten());
                p
            }
        }
    }
}
