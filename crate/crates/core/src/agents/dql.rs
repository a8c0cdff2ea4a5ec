//! Deep Q-learning with experience replay and a periodically synced target
//! network, plus the tabular rule it generalizes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objectives::regression;
use super::policy::{actor_seed, sampler_seed};
use super::{action_at, argmax, AgentConfig, Transition, UpdateReport};
use crate::approx::{Mlp, Optimizer};
use crate::env::{Action, Observation};
use crate::error::AgentError;

/// ε horizon used until [`DqlAgent::set_exploration_horizon`] is called.
const DEFAULT_HORIZON: u64 = 100_000;

/// Fixed-capacity ring buffer of transitions.
#[derive(Debug, Clone, Default)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    next: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: Vec::new(), next: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Adds a transition, overwriting the oldest once full.
    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.next] = t;
        }
        self.next = (self.next + 1) % self.capacity;
    }

    /// `n` transitions drawn uniformly with replacement.
    pub fn sample<R: Rng>(&self, rng: &mut R, n: usize) -> Vec<Transition> {
        if self.items.is_empty() {
            return Vec::new();
        }
        (0..n).map(|_| self.items[rng.random_range(0..self.items.len())].clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct DqlAgent {
    pub(super) config: AgentConfig,
    pub(super) q: Mlp,
    pub(super) target: Mlp,
    pub(super) opt: Optimizer,
    pub(super) replay: ReplayBuffer,
    pub(super) rng: ChaCha8Rng,
    pub(super) steps: u64,
    pub(super) updates: u64,
    pub(super) horizon: u64,
}

impl DqlAgent {
    pub fn new(config: AgentConfig, input_dim: usize) -> Self {
        let mut sizes = vec![input_dim];
        sizes.extend(&config.hidden_layers);
        sizes.push(Action::COUNT);
        let q = Mlp::new(&sizes, config.hidden_activation, 1.0, actor_seed(config.seed));
        Self {
            target: q.clone(),
            q,
            opt: Optimizer::new(config.optimizer_kind()),
            replay: ReplayBuffer::new(config.replay_capacity),
            rng: ChaCha8Rng::seed_from_u64(sampler_seed(config.seed)),
            steps: 0,
            updates: 0,
            horizon: DEFAULT_HORIZON,
            config,
        }
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn q_network(&self) -> &Mlp {
        &self.q
    }

    pub fn q_network_mut(&mut self) -> &mut Mlp {
        &mut self.q
    }

    pub fn target_network(&self) -> &Mlp {
        &self.target
    }

    pub fn replay(&self) -> &ReplayBuffer {
        &self.replay
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn set_exploration_horizon(&mut self, total_steps: u64) {
        self.horizon = total_steps;
    }

    /// Current exploration probability: linear from `epsilon_start` to
    /// `epsilon_end` over the first `epsilon_decay_fraction` of the horizon.
    pub fn epsilon(&self) -> f64 {
        let (start, end) = (self.config.epsilon_start, self.config.epsilon_end);
        let decay_steps = self.config.epsilon_decay_fraction * self.horizon as f64;
        if decay_steps <= 0.0 {
            return end;
        }
        let frac = (self.steps as f64 / decay_steps).min(1.0);
        start + (end - start) * frac
    }

    pub fn q_values(&self, obs: &Observation) -> Vec<f64> {
        self.q.predict(&self.config.features(obs)).expect("network built for this observation length")
    }

    pub fn greedy_action(&self, obs: &Observation) -> Action {
        action_at(argmax(&self.q_values(obs)))
    }

    pub fn act(&mut self, obs: &Observation, explore: bool) -> Action {
        if explore && self.rng.random::<f64>() < self.epsilon() {
            return action_at(self.rng.random_range(0..Action::COUNT));
        }
        self.greedy_action(obs)
    }

    pub fn remember(&mut self, transition: Transition) {
        self.steps += 1;
        self.replay.push(transition);
    }

    pub fn observe(&mut self, transition: Transition) -> Result<Option<UpdateReport>, AgentError> {
        self.remember(transition);
        let ready = self.steps >= self.config.learning_starts as u64
            && self.replay.len() >= self.config.batch_size
            && self.steps.is_multiple_of(self.config.train_every as u64);
        if !ready {
            return Ok(None);
        }
        self.replay_update().map(Some)
    }

    /// Gradient steps proportional to `new_steps` fresh environment steps.
    pub fn online_update(&mut self, new_steps: usize) -> Result<Option<UpdateReport>, AgentError> {
        if self.replay.len() < self.config.batch_size {
            return Ok(None);
        }
        let n = (new_steps / self.config.train_every).max(1);
        let mut report = UpdateReport::default();
        for _ in 0..n {
            report.critic_loss += self.replay_update()?.critic_loss;
        }
        report.critic_loss /= n as f64;
        Ok(Some(report))
    }

    fn replay_update(&mut self) -> Result<UpdateReport, AgentError> {
        let batch = self.replay.sample(&mut self.rng, self.config.batch_size);
        let loss = self.dql_update(&batch)?;
        Ok(UpdateReport { actor_loss: 0.0, critic_loss: loss })
    }

    /// One squared-error step of `Q(s,a)` toward
    /// `r + γ·max_a' Q_target(s',a')`, with no bootstrap at episode end.
    /// Syncs the target network on schedule.
    pub fn dql_update(&mut self, batch: &[Transition]) -> Result<f64, AgentError> {
        if batch.is_empty() {
            return Err(AgentError::EmptyBatch("replay batch"));
        }
        let mut inputs = Vec::with_capacity(batch.len());
        let mut heads = Vec::with_capacity(batch.len());
        let mut targets = Vec::with_capacity(batch.len());
        for t in batch {
            let r = t.reward * self.config.reward_scale;
            let bootstrap = if t.done {
                0.0
            } else {
                let next = self.target.predict(&self.config.features(&t.next_obs))?;
                self.config.gamma * next.iter().copied().fold(f64::NEG_INFINITY, f64::max)
            };
            inputs.push(self.config.features(&t.obs));
            heads.push(t.action.index());
            targets.push(r + bootstrap);
        }
        let eval = regression(&self.q, &inputs, &heads, &targets)?;
        if !eval.loss.is_finite() {
            return Err(AgentError::Diverged("TD loss"));
        }
        self.opt.step(&mut self.q, &eval.direction, self.config.q_lr)?;
        self.updates += 1;
        let sync_every = (self.config.target_sync_period / self.config.train_every).max(1) as u64;
        if self.updates.is_multiple_of(sync_every) {
            self.target = self.q.clone();
        }
        Ok(eval.loss)
    }
}

/// Tabular action values with the one-step Q-learning rule.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularQ {
    actions: usize,
    values: Vec<f64>,
}

impl TabularQ {
    pub fn new(states: usize, actions: usize) -> Self {
        Self { actions, values: vec![0.0; states * actions] }
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.actions + action] = value;
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn greedy(&self, state: usize) -> usize {
        argmax(self.row(state))
    }

    fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.actions..(state + 1) * self.actions]
    }

    /// `Q(s,a) ← Q(s,a) + α·(r + γ·max Q(s',·) − Q(s,a))`; returns the TD error.
    #[allow(clippy::too_many_arguments)]
    pub fn update(
        &mut self,
        state: usize,
        action: usize,
        reward: f64,
        next_state: usize,
        done: bool,
        alpha: f64,
        gamma: f64,
    ) -> f64 {
        let bootstrap = if done { 0.0 } else { gamma * self.max_value(next_state) };
        let q = self.get(state, action);
        let td = reward + bootstrap - q;
        self.set(state, action, q + alpha * td);
        td
    }
}
