//! Actor-critic agents sharing one rollout pipeline: A2C, PPO and ACKTR.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::objectives::{clipped_surrogate, log_softmax, policy_gradient_surrogate, regression, softmax, PolicySample};
use super::{action_at, argmax, compute_advantage, AgentConfig, Transition, UpdateReport};
use crate::approx::{CurvatureBatch, ForwardCache, Gradients, KfacStats, Mlp, Optimizer};
use crate::env::{Action, Observation};
use crate::error::AgentError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolicyAlgorithm {
    A2c,
    Ppo,
    Acktr,
}

/// Output-layer gain for a fresh actor; small so the initial policy is
/// close to uniform.
const ACTOR_OUTPUT_GAIN: f64 = 0.01;

#[derive(Debug, Clone)]
pub struct PolicyAgent {
    pub(super) kind: PolicyAlgorithm,
    pub(super) config: AgentConfig,
    pub(super) actor: Mlp,
    pub(super) critic: Mlp,
    pub(super) actor_opt: Optimizer,
    pub(super) critic_opt: Optimizer,
    pub(super) actor_kfac: Option<KfacStats>,
    pub(super) critic_kfac: Option<KfacStats>,
    pub(super) rng: ChaCha8Rng,
    pub(super) steps: u64,
    pub(super) updates: u64,
    pub(super) rollout: Vec<Transition>,
}

pub(super) fn actor_seed(seed: u64) -> u64 {
    seed.wrapping_mul(2).wrapping_add(1)
}

pub(super) fn critic_seed(seed: u64) -> u64 {
    seed.wrapping_mul(2).wrapping_add(2)
}

pub(super) fn sampler_seed(seed: u64) -> u64 {
    seed ^ 0x9E37_79B9_7F4A_7C15
}

impl PolicyAgent {
    pub fn new(kind: PolicyAlgorithm, config: AgentConfig, input_dim: usize) -> Self {
        let mut actor_sizes = vec![input_dim];
        actor_sizes.extend(&config.hidden_layers);
        let mut critic_sizes = actor_sizes.clone();
        actor_sizes.push(Action::COUNT);
        critic_sizes.push(1);
        let actor = Mlp::new(&actor_sizes, config.hidden_activation, ACTOR_OUTPUT_GAIN, actor_seed(config.seed));
        let critic = Mlp::new(&critic_sizes, config.hidden_activation, 1.0, critic_seed(config.seed));
        let (actor_kfac, critic_kfac) = if kind == PolicyAlgorithm::Acktr {
            (Some(KfacStats::new(&actor, config.kfac)), Some(KfacStats::new(&critic, config.kfac)))
        } else {
            (None, None)
        };
        let optimizer = config.optimizer_kind();
        Self {
            kind,
            actor_opt: Optimizer::new(optimizer),
            critic_opt: Optimizer::new(optimizer),
            rng: ChaCha8Rng::seed_from_u64(sampler_seed(config.seed)),
            config,
            actor,
            critic,
            actor_kfac,
            critic_kfac,
            steps: 0,
            updates: 0,
            rollout: Vec::new(),
        }
    }

    pub fn kind(&self) -> PolicyAlgorithm {
        self.kind
    }

    pub fn config(&self) -> &AgentConfig {
        &self.config
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    /// Curvature statistics of the actor (ACKTR only).
    pub fn actor_kfac_mut(&mut self) -> Option<&mut KfacStats> {
        self.actor_kfac.as_mut()
    }

    pub fn critic_kfac_mut(&mut self) -> Option<&mut KfacStats> {
        self.critic_kfac.as_mut()
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn updates(&self) -> u64 {
        self.updates
    }

    /// Action probabilities `π(·|s)`.
    pub fn probabilities(&self, obs: &Observation) -> Vec<f64> {
        softmax(&self.logits(obs))
    }

    fn logits(&self, obs: &Observation) -> Vec<f64> {
        self.actor.predict(&self.config.features(obs)).expect("actor built for this observation length")
    }

    pub fn value(&self, obs: &Observation) -> f64 {
        self.critic.predict(&self.config.features(obs)).expect("critic built for this observation length")[0]
    }

    pub fn act(&mut self, obs: &Observation, explore: bool) -> Action {
        if !explore {
            return self.greedy_action(obs);
        }
        let p = self.probabilities(obs);
        let u: f64 = self.rng.random();
        let mut acc = 0.0;
        for (i, pi) in p.iter().enumerate() {
            acc += pi;
            if u < acc {
                return action_at(i);
            }
        }
        action_at(p.len() - 1)
    }

    pub fn greedy_action(&self, obs: &Observation) -> Action {
        action_at(argmax(&self.logits(obs)))
    }

    pub fn observe(&mut self, transition: Transition) -> Result<Option<UpdateReport>, AgentError> {
        self.steps += 1;
        self.rollout.push(transition);
        if self.rollout.len() < self.config.rollout_length {
            return Ok(None);
        }
        let rollout = std::mem::take(&mut self.rollout);
        self.update(&rollout).map(Some)
    }

    /// Runs this agent's own update rule on `rollout`.
    pub fn update(&mut self, rollout: &[Transition]) -> Result<UpdateReport, AgentError> {
        match self.kind {
            PolicyAlgorithm::A2c => self.a2c_update(rollout),
            PolicyAlgorithm::Ppo => self.ppo_update(rollout),
            PolicyAlgorithm::Acktr => self.acktr_update(rollout),
        }
    }

    /// Features, one-step advantages and critic targets for a rollout.
    fn prepare(&self, rollout: &[Transition]) -> Result<Prepared, AgentError> {
        if rollout.is_empty() {
            return Err(AgentError::EmptyBatch("rollout"));
        }
        let gamma = self.config.gamma;
        let mut features = Vec::with_capacity(rollout.len());
        let mut advantages = Vec::with_capacity(rollout.len());
        let mut targets = Vec::with_capacity(rollout.len());
        for t in rollout {
            if !t.reward.is_finite() {
                return Err(AgentError::Diverged("non-finite reward"));
            }
            let x = self.config.features(&t.obs);
            let v_now = self.critic.predict(&x)?[0];
            let v_next = if t.done { 0.0 } else { self.critic.predict(&self.config.features(&t.next_obs))?[0] };
            let r = t.reward * self.config.reward_scale;
            advantages.push(compute_advantage(r, v_next, v_now, gamma, t.done));
            targets.push(compute_advantage(r, v_next, 0.0, gamma, t.done));
            features.push(x);
        }
        let samples = features
            .iter()
            .zip(rollout)
            .zip(&advantages)
            .map(|((x, t), &a)| PolicySample { features: x.clone(), action: t.action.index(), advantage: a, old_log_prob: 0.0 })
            .collect();
        Ok(Prepared { features, samples, targets })
    }

    /// Actor and critic gradients of the A2C objectives.
    fn a2c_gradients(&self, prep: &Prepared) -> Result<A2cGradients, AgentError> {
        let actor_eval = policy_gradient_surrogate(&self.actor, &prep.samples, self.config.entropy_coef)?;
        let heads = vec![0; prep.features.len()];
        let critic_eval = regression(&self.critic, &prep.features, &heads, &prep.targets)?;
        let report = UpdateReport { actor_loss: -actor_eval.objective, critic_loss: critic_eval.loss };
        check_report(&report)?;
        Ok(A2cGradients {
            actor: actor_eval.gradient,
            critic: critic_eval.direction,
            actor_caches: actor_eval.caches,
            critic_caches: critic_eval.caches,
            report,
        })
    }

    pub fn a2c_update(&mut self, rollout: &[Transition]) -> Result<UpdateReport, AgentError> {
        let prep = self.prepare(rollout)?;
        let g = self.a2c_gradients(&prep)?;
        self.actor_opt.step(&mut self.actor, &g.actor, self.config.actor_lr)?;
        self.critic_opt.step(&mut self.critic, &g.critic, self.config.critic_lr)?;
        self.updates += 1;
        Ok(g.report)
    }

    pub fn ppo_update(&mut self, rollout: &[Transition]) -> Result<UpdateReport, AgentError> {
        let mut prep = self.prepare(rollout)?;
        for s in &mut prep.samples {
            s.old_log_prob = log_softmax(&self.actor.predict(&s.features)?)[s.action];
        }
        let n = prep.samples.len();
        let minibatch = n.div_ceil(self.config.ppo_minibatches.min(n));
        let mut order: Vec<usize> = (0..n).collect();
        let mut report = UpdateReport::default();
        let mut batches = 0usize;
        for _ in 0..self.config.ppo_epochs {
            order.shuffle(&mut self.rng);
            for chunk in order.chunks(minibatch) {
                let samples: Vec<PolicySample> = chunk.iter().map(|&i| prep.samples[i].clone()).collect();
                let inputs: Vec<Vec<f64>> = chunk.iter().map(|&i| prep.features[i].clone()).collect();
                let targets: Vec<f64> = chunk.iter().map(|&i| prep.targets[i]).collect();
                let actor_eval =
                    clipped_surrogate(&self.actor, &samples, self.config.clip_epsilon, self.config.entropy_coef)?;
                let critic_eval = regression(&self.critic, &inputs, &vec![0; chunk.len()], &targets)?;
                let step = UpdateReport { actor_loss: -actor_eval.objective, critic_loss: critic_eval.loss };
                check_report(&step)?;
                self.actor_opt.step(&mut self.actor, &actor_eval.gradient, self.config.actor_lr)?;
                self.critic_opt.step(&mut self.critic, &critic_eval.direction, self.config.critic_lr)?;
                report.actor_loss += step.actor_loss;
                report.critic_loss += step.critic_loss;
                batches += 1;
            }
        }
        report.actor_loss /= batches as f64;
        report.critic_loss /= batches as f64;
        self.updates += 1;
        Ok(report)
    }

    pub fn acktr_update(&mut self, rollout: &[Transition]) -> Result<UpdateReport, AgentError> {
        let prep = self.prepare(rollout)?;
        let g = self.a2c_gradients(&prep)?;
        let actor_batch = actor_curvature(&self.actor, &g.actor_caches)?;
        let critic_batch = critic_curvature(&self.critic, &g.critic_caches)?;
        let cap = self.config.acktr_max_step;
        let (actor_kfac, critic_kfac) = match (self.actor_kfac.as_mut(), self.critic_kfac.as_mut()) {
            (Some(a), Some(c)) => (a, c),
            _ => {
                self.actor_kfac = Some(KfacStats::new(&self.actor, self.config.kfac));
                self.critic_kfac = Some(KfacStats::new(&self.critic, self.config.kfac));
                (self.actor_kfac.as_mut().expect("set"), self.critic_kfac.as_mut().expect("set"))
            }
        };
        actor_kfac.update(&actor_batch)?;
        critic_kfac.update(&critic_batch)?;
        let actor_step = capped(actor_kfac.precondition(&g.actor)?, self.config.actor_lr, cap);
        let critic_step = capped(critic_kfac.precondition(&g.critic)?, self.config.critic_lr, cap);
        self.actor_opt.step(&mut self.actor, &actor_step, self.config.actor_lr)?;
        self.critic_opt.step(&mut self.critic, &critic_step, self.config.critic_lr)?;
        self.updates += 1;
        Ok(g.report)
    }
}

struct Prepared {
    features: Vec<Vec<f64>>,
    samples: Vec<PolicySample>,
    targets: Vec<f64>,
}

struct A2cGradients {
    actor: Gradients,
    critic: Gradients,
    actor_caches: Vec<ForwardCache>,
    critic_caches: Vec<ForwardCache>,
    report: UpdateReport,
}

fn check_report(report: &UpdateReport) -> Result<(), AgentError> {
    if !report.actor_loss.is_finite() {
        return Err(AgentError::Diverged("actor loss"));
    }
    if !report.critic_loss.is_finite() {
        return Err(AgentError::Diverged("critic loss"));
    }
    Ok(())
}

/// Scales `direction` so that `lr·‖direction‖ ≤ max_step`.
fn capped(mut direction: Gradients, lr: f64, max_step: f64) -> Gradients {
    let norm = direction.norm() * lr;
    if norm > max_step {
        direction.scale(max_step / norm);
    }
    direction
}

/// Expected Fisher of the categorical policy: for each state, every action
/// `b` contributes the log-likelihood gradient `e_b − π` with weight `π(b)`.
fn actor_curvature(actor: &Mlp, caches: &[ForwardCache]) -> Result<CurvatureBatch, AgentError> {
    let mut scratch = Gradients::zeros_like(actor);
    let mut batch = CurvatureBatch::default();
    for cache in caches {
        let p = softmax(&cache.output);
        for (b, &pb) in p.iter().enumerate() {
            let out_grad: Vec<f64> =
                p.iter().enumerate().map(|(j, pj)| if j == b { 1.0 - pj } else { -pj }).collect();
            let pre = actor.backward_into(cache, &out_grad, 0.0, &mut scratch)?;
            batch.gradients.push((pb, pre));
        }
        batch.activations.push(cache.inputs.clone());
    }
    Ok(batch)
}

/// Fisher of a unit-variance Gaussian around the value prediction.
fn critic_curvature(critic: &Mlp, caches: &[ForwardCache]) -> Result<CurvatureBatch, AgentError> {
    let mut scratch = Gradients::zeros_like(critic);
    let mut batch = CurvatureBatch::default();
    for cache in caches {
        let pre = critic.backward_into(cache, &[1.0], 0.0, &mut scratch)?;
        batch.gradients.push((1.0, pre));
        batch.activations.push(cache.inputs.clone());
    }
    Ok(batch)
}
