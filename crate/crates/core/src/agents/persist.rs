//! Agent checkpoints on top of the binary parameter container.
//!
//! Saved: algorithm, configuration, networks, optimizer moments, curvature
//! factors, step counters and the sampling RNG position. Not saved: the DQL
//! replay buffer and any partially collected rollout.

use std::path::Path;

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::policy::{actor_seed, critic_seed};
use super::{Agent, AgentConfig, Algorithm, DqlAgent, FixedTimeAgent, PolicyAgent, PolicyAlgorithm};
use crate::approx::checkpoint::{Checkpoint, NamedNetwork};
use crate::approx::{Gradients, KfacStats, Mlp, Optimizer};
use crate::error::{AgentError, CheckpointError};

#[derive(Serialize, Deserialize)]
struct RngState {
    seed: [u8; 32],
    stream: u64,
    /// `u128` as a decimal string; JSON numbers cannot hold it exactly.
    word_pos: String,
}

impl RngState {
    fn capture(rng: &ChaCha8Rng) -> Self {
        Self { seed: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos().to_string() }
    }

    fn restore(&self) -> Result<ChaCha8Rng, CheckpointError> {
        let mut rng = ChaCha8Rng::from_seed(self.seed);
        rng.set_stream(self.stream);
        let pos = self.word_pos.parse().map_err(|_| CheckpointError::Header("bad RNG position".into()))?;
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Serialize, Deserialize)]
struct AgentMeta {
    algorithm: Algorithm,
    config: AgentConfig,
    steps: u64,
    updates: u64,
    #[serde(default)]
    horizon: u64,
    rng: Option<RngState>,
    optimizer_steps: Vec<u64>,
}

fn push_optimizer(blocks: &mut Vec<(String, Vec<f64>)>, name: &str, opt: &Optimizer) {
    if let Some((m, v)) = opt.moments() {
        blocks.push((format!("{name}.m"), m.flatten()));
        blocks.push((format!("{name}.v"), v.flatten()));
    }
}

fn restore_optimizer(ckpt: &Checkpoint, name: &str, net: &Mlp, opt: &mut Optimizer, steps: u64) -> Result<(), CheckpointError> {
    let moments = match (ckpt.block(&format!("{name}.m")), ckpt.block(&format!("{name}.v"))) {
        (Some(m), Some(v)) => {
            let mut gm = Gradients::zeros_like(net);
            let mut gv = Gradients::zeros_like(net);
            gm.unflatten(m).map_err(|e| CheckpointError::Shape(format!("{name} moments: {e}")))?;
            gv.unflatten(v).map_err(|e| CheckpointError::Shape(format!("{name} moments: {e}")))?;
            Some((gm, gv))
        }
        _ => None,
    };
    opt.restore(steps, moments);
    Ok(())
}

fn push_kfac(blocks: &mut Vec<(String, Vec<f64>)>, name: &str, stats: &KfacStats) {
    for (l, f) in stats.layers.iter().enumerate() {
        blocks.push((format!("{name}.kfac.{l}.a"), f.a.as_slice().to_vec()));
        blocks.push((format!("{name}.kfac.{l}.s"), f.s.as_slice().to_vec()));
    }
}

fn restore_kfac(ckpt: &Checkpoint, name: &str, stats: &mut KfacStats) -> Result<(), CheckpointError> {
    for (l, f) in stats.layers.iter_mut().enumerate() {
        for (suffix, m) in [("a", &mut f.a), ("s", &mut f.s)] {
            let key = format!("{name}.kfac.{l}.{suffix}");
            let data = ckpt.block(&key).ok_or_else(|| CheckpointError::Shape(format!("missing block `{key}`")))?;
            let n = m.nrows();
            if data.len() != n * n {
                return Err(CheckpointError::Shape(format!("block `{key}` has {} values, expected {}", data.len(), n * n)));
            }
            *m = DMatrix::from_column_slice(n, n, data);
        }
    }
    Ok(())
}

fn check_shape(name: &str, loaded: &Mlp, fresh: &Mlp) -> Result<(), CheckpointError> {
    if loaded.shapes() != fresh.shapes() {
        return Err(CheckpointError::Shape(format!("network `{name}` does not match the stored configuration")));
    }
    Ok(())
}

impl Agent {
    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut blocks = Vec::new();
        let mut networks = Vec::new();
        let meta = match self {
            Agent::FixedTime(a) => AgentMeta {
                algorithm: Algorithm::FixedTime,
                config: a.config().clone(),
                steps: 0,
                updates: 0,
                horizon: 0,
                rng: None,
                optimizer_steps: vec![],
            },
            Agent::Dql(a) => {
                let seed = actor_seed(a.config.seed);
                networks.push(NamedNetwork { name: "q".into(), seed, net: a.q.clone() });
                networks.push(NamedNetwork { name: "target".into(), seed, net: a.target.clone() });
                push_optimizer(&mut blocks, "q", &a.opt);
                AgentMeta {
                    algorithm: Algorithm::Dql,
                    config: a.config.clone(),
                    steps: a.steps,
                    updates: a.updates,
                    horizon: a.horizon,
                    rng: Some(RngState::capture(&a.rng)),
                    optimizer_steps: vec![a.opt.steps()],
                }
            }
            Agent::Policy(a) => {
                networks.push(NamedNetwork { name: "actor".into(), seed: actor_seed(a.config.seed), net: a.actor.clone() });
                networks.push(NamedNetwork { name: "critic".into(), seed: critic_seed(a.config.seed), net: a.critic.clone() });
                push_optimizer(&mut blocks, "actor", &a.actor_opt);
                push_optimizer(&mut blocks, "critic", &a.critic_opt);
                if let (Some(ak), Some(ck)) = (&a.actor_kfac, &a.critic_kfac) {
                    push_kfac(&mut blocks, "actor", ak);
                    push_kfac(&mut blocks, "critic", ck);
                }
                AgentMeta {
                    algorithm: a.config.algorithm,
                    config: a.config.clone(),
                    steps: a.steps,
                    updates: a.updates,
                    horizon: 0,
                    rng: Some(RngState::capture(&a.rng)),
                    optimizer_steps: vec![a.actor_opt.steps(), a.critic_opt.steps()],
                }
            }
        };
        let meta = serde_json::to_value(meta).expect("metadata is plain data");
        Checkpoint { meta, networks, blocks }
    }

    pub fn from_checkpoint(ckpt: &Checkpoint) -> Result<Self, AgentError> {
        let meta: AgentMeta = serde_json::from_value(ckpt.meta.clone())
            .map_err(|e| CheckpointError::Header(format!("agent metadata: {e}")))?;
        if meta.config.algorithm != meta.algorithm {
            return Err(CheckpointError::Header("algorithm and configuration disagree".into()).into());
        }
        meta.config.validate()?;
        let rng = || -> Result<ChaCha8Rng, CheckpointError> {
            meta.rng.as_ref().ok_or_else(|| CheckpointError::Header("missing RNG state".into()))?.restore()
        };
        let opt_steps = |i: usize| meta.optimizer_steps.get(i).copied().unwrap_or(0);
        Ok(match meta.algorithm {
            Algorithm::FixedTime => Agent::FixedTime(FixedTimeAgent::new(meta.config)),
            Algorithm::Dql => {
                let q = ckpt.network("q")?.clone();
                let mut a = DqlAgent::new(meta.config.clone(), q.input_dim());
                check_shape("q", &q, &a.q)?;
                a.target = ckpt.network("target")?.clone();
                check_shape("target", &a.target, &a.q)?;
                restore_optimizer(ckpt, "q", &q, &mut a.opt, opt_steps(0))?;
                a.q = q;
                a.steps = meta.steps;
                a.updates = meta.updates;
                a.horizon = meta.horizon;
                a.rng = rng()?;
                Agent::Dql(a)
            }
            alg => {
                let kind = match alg {
                    Algorithm::A2c => PolicyAlgorithm::A2c,
                    Algorithm::Ppo => PolicyAlgorithm::Ppo,
                    _ => PolicyAlgorithm::Acktr,
                };
                let actor = ckpt.network("actor")?.clone();
                let critic = ckpt.network("critic")?.clone();
                let mut a = PolicyAgent::new(kind, meta.config.clone(), actor.input_dim());
                check_shape("actor", &actor, &a.actor)?;
                check_shape("critic", &critic, &a.critic)?;
                restore_optimizer(ckpt, "actor", &actor, &mut a.actor_opt, opt_steps(0))?;
                restore_optimizer(ckpt, "critic", &critic, &mut a.critic_opt, opt_steps(1))?;
                if let Some(stats) = a.actor_kfac.as_mut() {
                    restore_kfac(ckpt, "actor", stats)?;
                }
                if let Some(stats) = a.critic_kfac.as_mut() {
                    restore_kfac(ckpt, "critic", stats)?;
                }
                a.actor = actor;
                a.critic = critic;
                a.steps = meta.steps;
                a.updates = meta.updates;
                a.rng = rng()?;
                Agent::Policy(a)
            }
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), AgentError> {
        self.to_checkpoint().save(path)?;
        Ok(())
    }

    /// Loads an agent of any algorithm.
    pub fn load(path: &Path) -> Result<Self, AgentError> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }

    /// Loads an agent and checks that it runs `expected`.
    pub fn load_expecting(path: &Path, expected: Algorithm) -> Result<Self, AgentError> {
        let agent = Self::load(path)?;
        if agent.algorithm() != expected {
            return Err(CheckpointError::AlgorithmMismatch {
                expected: expected.name().into(),
                found: agent.algorithm().name().into(),
            }
            .into());
        }
        Ok(agent)
    }
}
