//! Experiment configuration file.
//!
//! A TOML document with up to five sections, every key optional:
//!
//! ```toml
//! [experiment]          # what to run
//! scenario = "medium"
//! algorithms = ["ppo", "dql"]
//! rates = [0.1, 0.5, 1.0]
//! seeds = [0, 1, 2]
//!
//! [sim]                 # overrides on top of the scenario preset
//! [env]                 # episode length, reward mode, time-of-day slot
//! [agent]               # applies to every algorithm
//! [agent.ppo]           # applies to one algorithm, after [agent]
//! [deploy]              # deployment-phase settings
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::adapt::DeploymentConfig;
use crate::agents::{AgentConfig, Algorithm};
use crate::env::EnvConfig;
use crate::error::ConfigError;
use crate::sim::{Scenario, SimConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentSpec {
    pub name: String,
    pub scenario: Scenario,
    pub algorithms: Vec<Algorithm>,
    pub rates: Vec<f64>,
    pub train_steps: u64,
    pub eval_episodes: usize,
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
    /// Train agents as part of `sweep` and `adapt` instead of loading them.
    pub train_inline: bool,
    /// Where `sweep` and `adapt` look for checkpoints when not training
    /// inline; defaults to `<out_dir>/checkpoints`.
    pub checkpoint_dir: Option<PathBuf>,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            name: "experiment".into(),
            scenario: Scenario::Medium,
            algorithms: vec![Algorithm::Ppo],
            rates: vec![0.1, 0.5, 1.0],
            train_steps: 100_000,
            eval_episodes: 20,
            seeds: vec![0, 1, 2],
            out_dir: PathBuf::from("out"),
            train_inline: true,
            checkpoint_dir: None,
        }
    }
}

impl ExperimentSpec {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.algorithms.is_empty() {
            return Err(ConfigError::invalid("algorithms", "list is empty"));
        }
        if self.seeds.is_empty() {
            return Err(ConfigError::invalid("seeds", "list is empty"));
        }
        if let Some(r) = self.rates.iter().find(|r| !(0.0..=1.0).contains(*r)) {
            return Err(ConfigError::invalid("rates", format!("{r} lies outside [0, 1]")));
        }
        Ok(())
    }

    pub fn checkpoint_dir(&self) -> PathBuf {
        self.checkpoint_dir.clone().unwrap_or_else(|| self.out_dir.join("checkpoints"))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSpec,
    /// Raw `[sim]` keys, applied over the scenario preset.
    pub sim: toml::Table,
    pub env: EnvConfig,
    /// Raw `[agent]` table including per-algorithm subtables.
    pub agent: toml::Table,
    pub deploy: DeploymentConfig,
}

fn section<T: serde::de::DeserializeOwned + Default>(doc: &mut toml::Table, name: &str) -> Result<T, ConfigError> {
    match doc.remove(name) {
        Some(v) => Ok(v.try_into()?),
        None => Ok(T::default()),
    }
}

fn table(doc: &mut toml::Table, name: &'static str) -> Result<toml::Table, ConfigError> {
    match doc.remove(name) {
        Some(toml::Value::Table(t)) => Ok(t),
        Some(_) => Err(ConfigError::invalid(name, "must be a table")),
        None => Ok(toml::Table::new()),
    }
}

/// Deserializes `base` after overwriting it key by key with `overrides`.
fn overlay<T: Serialize + serde::de::DeserializeOwned>(base: &T, overrides: &toml::Table) -> Result<T, ConfigError> {
    let mut value = toml::Table::try_from(base).map_err(|e| ConfigError::invalid("config", e.to_string()))?;
    for (k, v) in overrides {
        value.insert(k.clone(), v.clone());
    }
    Ok(toml::Value::Table(value).try_into()?)
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let mut doc: toml::Table = toml::from_str(text)?;
        let config = Self {
            experiment: section(&mut doc, "experiment")?,
            sim: table(&mut doc, "sim")?,
            env: section(&mut doc, "env")?,
            agent: table(&mut doc, "agent")?,
            deploy: section(&mut doc, "deploy")?,
        };
        if let Some(key) = doc.keys().next() {
            return Err(ConfigError::invalid("config", format!("unknown section `{key}`")));
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.experiment.validate()?;
        self.sim_config()?;
        for alg in &self.experiment.algorithms {
            self.agent_config(*alg, 0)?;
        }
        self.deploy.validate()
    }

    /// Scenario preset with the `[sim]` overrides applied.
    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let sim: SimConfig = overlay(&SimConfig::preset(self.experiment.scenario), &self.sim)?;
        sim.validate()?;
        Ok(sim)
    }

    /// Environment at a fixed detection rate.
    pub fn env_config(&self, detection_rate: f64) -> Result<EnvConfig, ConfigError> {
        let mut env = self.env.clone();
        env.sim = SimConfig { detection_rate, ..self.sim_config()? };
        env.validate()?;
        Ok(env)
    }

    /// Tuned defaults for `algorithm`, then `[agent]`, then `[agent.<name>]`.
    pub fn agent_config(&self, algorithm: Algorithm, seed: u64) -> Result<AgentConfig, ConfigError> {
        let names: Vec<&str> = Algorithm::ALL.iter().map(|a| a.name()).collect();
        let common: toml::Table =
            self.agent.iter().filter(|(k, _)| !names.contains(&k.as_str())).map(|(k, v)| (k.clone(), v.clone())).collect();
        let mut config = overlay(&AgentConfig::for_algorithm(algorithm), &common)?;
        if let Some(specific) = self.agent.get(algorithm.name()) {
            let specific = specific
                .as_table()
                .ok_or_else(|| ConfigError::invalid("agent", format!("[agent.{algorithm}] must be a table")))?;
            config = overlay(&config, specific)?;
        }
        config.algorithm = algorithm;
        config.seed = seed;
        config.validate()?;
        Ok(config)
    }
}

/// Command-line values that replace config-file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub algorithms: Option<Vec<Algorithm>>,
    pub rates: Option<Vec<f64>>,
    pub scenario: Option<Scenario>,
    /// Training steps, or deployment steps for `adapt`.
    pub steps: Option<u64>,
    pub episodes: Option<usize>,
}

impl Overrides {
    pub fn apply(&self, config: &mut ExperimentConfig, steps_are_deployment: bool) -> Result<(), ConfigError> {
        let exp = &mut config.experiment;
        if let Some(seed) = self.seed {
            exp.seeds = vec![seed];
            config.deploy.seed = seed;
        }
        if let Some(out) = &self.out {
            exp.out_dir = out.clone();
        }
        if let Some(algs) = &self.algorithms {
            exp.algorithms = algs.clone();
        }
        if let Some(rates) = &self.rates {
            exp.rates = rates.clone();
        }
        if let Some(s) = self.scenario {
            exp.scenario = s;
        }
        if let Some(steps) = self.steps {
            if steps_are_deployment {
                config.deploy.total_steps = steps;
            } else {
                exp.train_steps = steps;
            }
        }
        if let Some(n) = self.episodes {
            exp.eval_episodes = n;
        }
        config.validate()
    }
}
