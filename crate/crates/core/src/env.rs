//! Step/reset environment over the simulator.
//!
//! Observations are the compact state vector: per-approach detected counts
//! and nearest detected distances, phase timing, the amber indicator, the
//! phase index and optionally the time of day. Only detected vehicles feed
//! the observation and the partial reward.

use serde::{Deserialize, Serialize};

use crate::error::{ConfigError, EnvError};
use crate::sim::{Approach, Metrics, SignalCommand, SimConfig, Simulation};

const SECONDS_PER_DAY: f64 = 86_400.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Action {
    Keep,
    Switch,
}

impl Action {
    pub const COUNT: usize = 2;

    pub fn index(self) -> usize {
        match self {
            Action::Keep => 0,
            Action::Switch => 1,
        }
    }

    pub fn from_index(index: usize) -> Option<Action> {
        match index {
            0 => Some(Action::Keep),
            1 => Some(Action::Switch),
            _ => None,
        }
    }
}

impl From<Action> for SignalCommand {
    fn from(action: Action) -> Self {
        match action {
            Action::Keep => SignalCommand::Keep,
            Action::Switch => SignalCommand::Switch,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardMode {
    Full,
    #[default]
    Partial,
}

/// Compact state vector seen by every controller.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Observation {
    /// Detected vehicles per approach over lane capacity, clamped to 1.
    pub detected_count: [f64; 4],
    /// Nearest detected vehicle per approach over lane length; 1 when none.
    pub nearest_detected_distance: [f64; 4],
    /// Seconds in the current phase, unnormalized.
    pub phase_time: f64,
    pub amber_flag: f64,
    pub current_phase: f64,
    pub time_of_day: Option<f64>,
}

impl Observation {
    pub const BASE_LEN: usize = 11;
    pub const PHASE_TIME_SLOT: usize = 8;

    pub fn len(&self) -> usize {
        Self::BASE_LEN + usize::from(self.time_of_day.is_some())
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Flat feature vector in slot order.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.len());
        out.extend_from_slice(&self.detected_count);
        out.extend_from_slice(&self.nearest_detected_distance);
        out.push(self.phase_time);
        out.push(self.amber_flag);
        out.push(self.current_phase);
        out.extend(self.time_of_day);
        out
    }

    /// Inverse of [`Observation::to_vec`].
    pub fn from_slice(values: &[f64]) -> Option<Observation> {
        if values.len() != Self::BASE_LEN && values.len() != Self::BASE_LEN + 1 {
            return None;
        }
        let mut detected_count = [0.0; 4];
        let mut nearest_detected_distance = [0.0; 4];
        detected_count.copy_from_slice(&values[0..4]);
        nearest_detected_distance.copy_from_slice(&values[4..8]);
        Some(Observation {
            detected_count,
            nearest_detected_distance,
            phase_time: values[8],
            amber_flag: values[9],
            current_phase: values[10],
            time_of_day: values.get(Self::BASE_LEN).copied(),
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RewardBreakdown {
    pub full: f64,
    pub partial: f64,
    pub detected_deficit: f64,
    pub undetected_deficit: f64,
}

impl RewardBreakdown {
    pub fn select(&self, mode: RewardMode) -> f64 {
        match mode {
            RewardMode::Full => self.full,
            RewardMode::Partial => self.partial,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    #[serde(skip)]
    pub sim: SimConfig,
    pub reward_mode: RewardMode,
    /// Episode length in seconds.
    pub episode_length: f64,
    pub include_time_of_day: bool,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            reward_mode: RewardMode::Partial,
            episode_length: 3600.0,
            include_time_of_day: false,
        }
    }
}

impl EnvConfig {
    pub fn new(sim: SimConfig) -> Self {
        Self { sim, ..Self::default() }
    }

    pub fn lane_capacity(&self) -> usize {
        self.sim.lane_capacity()
    }

    pub fn observation_len(&self) -> usize {
        Observation::BASE_LEN + usize::from(self.include_time_of_day)
    }

    /// Number of steps between reset and done.
    pub fn steps_per_episode(&self) -> u64 {
        (self.episode_length / self.sim.time_step).round() as u64
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.sim.validate()?;
        let steps = self.episode_length / self.sim.time_step;
        if !(self.episode_length > 0.0) || (steps - steps.round()).abs() > 1e-9 {
            return Err(ConfigError::invalid(
                "episode_length",
                format!(
                    "must be a positive multiple of time_step ({}), got {}",
                    self.sim.time_step, self.episode_length
                ),
            ));
        }
        Ok(())
    }
}

/// Everything `step` reports besides the observation and scalar reward.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub reward: RewardBreakdown,
    pub metrics: Metrics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub observation: Observation,
    pub reward: f64,
    pub done: bool,
    pub info: StepInfo,
}

pub fn build_observation(sim: &Simulation, config: &EnvConfig) -> Observation {
    let capacity = config.lane_capacity() as f64;
    let lane_length = config.sim.lane_length;
    let mut detected_count = [0.0; 4];
    let mut nearest_detected_distance = [1.0; 4];
    for approach in Approach::ALL {
        let i = approach.index();
        let mut count = 0usize;
        let mut nearest = f64::INFINITY;
        for v in sim.lane(approach).iter().filter(|v| v.detected) {
            count += 1;
            nearest = nearest.min(v.position);
        }
        detected_count[i] = (count as f64 / capacity).min(1.0);
        if count > 0 {
            nearest_detected_distance[i] = (nearest / lane_length).clamp(0.0, 1.0);
        }
    }
    let signal = sim.signal();
    Observation {
        detected_count,
        nearest_detected_distance,
        phase_time: signal.phase_elapsed,
        amber_flag: if signal.in_amber { 1.0 } else { 0.0 },
        current_phase: signal.phase.index() as f64,
        time_of_day: config
            .include_time_of_day
            .then(|| (sim.clock() % SECONDS_PER_DAY) / SECONDS_PER_DAY),
    }
}

/// Normalized speed deficit over all vehicles and over detected vehicles.
pub fn compute_reward(sim: &Simulation) -> RewardBreakdown {
    let mut detected_deficit = 0.0;
    let mut undetected_deficit = 0.0;
    for v in sim.vehicles() {
        let deficit = (v.vmax - v.speed) / v.vmax;
        if v.detected {
            detected_deficit += deficit;
        } else {
            undetected_deficit += deficit;
        }
    }
    RewardBreakdown {
        full: -(detected_deficit + undetected_deficit),
        partial: -detected_deficit,
        detected_deficit,
        undetected_deficit,
    }
}

/// Single-intersection environment.
#[derive(Debug, Clone)]
pub struct TrafficEnv {
    config: EnvConfig,
    sim: Simulation,
    steps_taken: u64,
    done: bool,
}

impl TrafficEnv {
    pub fn new(config: EnvConfig) -> Result<Self, EnvError> {
        config.validate()?;
        let sim = Simulation::new(config.sim.clone())?;
        Ok(Self { config, sim, steps_taken: 0, done: false })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn sim(&self) -> &Simulation {
        &self.sim
    }

    pub fn sim_mut(&mut self) -> &mut Simulation {
        &mut self.sim
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps_taken
    }

    /// Restarts from an empty intersection, reseeding the simulator.
    pub fn reset_with_seed(&mut self, seed: u64) -> Observation {
        self.config.sim.rng_seed = seed;
        self.reset()
    }

    /// Restarts from an empty intersection with the configured seed.
    pub fn reset(&mut self) -> Observation {
        self.sim = Simulation::new(self.config.sim.clone()).expect("config validated at construction");
        self.steps_taken = 0;
        self.done = false;
        self.observe()
    }

    /// Changes the detection probability of vehicles spawned from now on.
    pub fn set_detection_rate(&mut self, rate: f64) -> Result<(), EnvError> {
        self.sim.set_detection_rate(rate)?;
        self.config.sim.detection_rate = rate;
        Ok(())
    }

    pub fn observe(&self) -> Observation {
        build_observation(&self.sim, &self.config)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, EnvError> {
        if self.done {
            return Err(EnvError::EpisodeDone);
        }
        self.sim.step(action.into());
        self.steps_taken += 1;
        self.done = self.steps_taken >= self.config.steps_per_episode();
        let breakdown = compute_reward(&self.sim);
        Ok(StepOutcome {
            observation: self.observe(),
            reward: breakdown.select(self.config.reward_mode),
            done: self.done,
            info: StepInfo { reward: breakdown, metrics: self.sim.metrics_snapshot() },
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quiet_env() -> TrafficEnv {
        let sim = SimConfig { arrival_rate: 0.0, ..SimConfig::default() };
        TrafficEnv::new(EnvConfig::new(sim)).unwrap()
    }

    #[test]
    fn reset_gives_empty_observation() {
        let mut env = quiet_env();
        let obs = env.reset();
        assert_eq!(obs.detected_count, [0.0; 4]);
        assert_eq!(obs.nearest_detected_distance, [1.0; 4]);
        assert_eq!(obs.amber_flag, 0.0);
        assert_eq!(obs.current_phase, 0.0);
        assert_eq!(obs.phase_time, 0.0);
        assert_eq!(obs.to_vec().len(), 11);
    }

    #[test]
    fn time_of_day_adds_a_slot() {
        let config = EnvConfig { include_time_of_day: true, ..EnvConfig::default() };
        let mut env = TrafficEnv::new(config).unwrap();
        let obs = env.reset();
        assert_eq!(obs.to_vec().len(), 12);
        assert_eq!(obs.time_of_day, Some(0.0));
        assert_eq!(Observation::from_slice(&obs.to_vec()), Some(obs));
    }

    #[test]
    fn empty_intersection_reward_is_zero() {
        let mut env = quiet_env();
        env.reset();
        for action in [Action::Keep, Action::Switch] {
            let out = env.step(action).unwrap();
            assert_eq!(out.info.reward.full, 0.0);
            assert_eq!(out.info.reward.partial, 0.0);
        }
    }

    #[test]
    fn stopped_detected_vehicle_costs_one() {
        let mut env = quiet_env();
        env.reset();
        env.sim_mut().insert_vehicle(Approach::North, 30.0, 0.0, true);
        let r = compute_reward(env.sim());
        assert_eq!(r.partial, -1.0);
        assert_eq!(r.full, -1.0);
    }

    #[test]
    fn mixed_classes_reward() {
        let mut env = quiet_env();
        env.reset();
        let vmax = env.config().sim.vmax_default;
        env.sim_mut().insert_vehicle(Approach::North, 30.0, vmax / 2.0, true);
        env.sim_mut().insert_vehicle(Approach::East, 60.0, 0.0, false);
        let r = compute_reward(env.sim());
        assert_eq!(r.partial, -0.5);
        assert_eq!(r.full, -1.5);
        assert_eq!(r.detected_deficit, 0.5);
        assert_eq!(r.undetected_deficit, 1.0);
    }

    #[test]
    fn vehicles_at_top_speed_cost_nothing() {
        let mut env = quiet_env();
        env.reset();
        let vmax = env.config().sim.vmax_default;
        env.sim_mut().insert_vehicle(Approach::South, 90.0, vmax, true);
        env.sim_mut().insert_vehicle(Approach::West, 90.0, vmax, false);
        let r = compute_reward(env.sim());
        assert_eq!(r.full, 0.0);
        assert_eq!(r.partial, 0.0);
    }

    #[test]
    fn observation_counts_and_distance() {
        let mut env = quiet_env();
        env.reset();
        env.sim_mut().insert_vehicle(Approach::North, 30.0, 0.0, true);
        let obs = env.observe();
        assert_eq!(env.config().lane_capacity(), 20);
        assert_eq!(obs.detected_count, [0.05, 0.0, 0.0, 0.0]);
        assert_eq!(obs.nearest_detected_distance, [0.2, 1.0, 1.0, 1.0]);
    }

    #[test]
    fn undetected_vehicle_is_invisible() {
        let mut env = quiet_env();
        let empty = env.reset();
        env.sim_mut().insert_vehicle(Approach::West, 12.0, 3.0, false);
        assert_eq!(env.observe(), empty);
    }

    #[test]
    fn count_slot_clamps_at_capacity() {
        let mut env = quiet_env();
        env.reset();
        for k in 0..25 {
            env.sim_mut().insert_vehicle(Approach::East, 1.0 + 5.0 * k as f64, 0.0, true);
        }
        assert_eq!(env.observe().detected_count[Approach::East.index()], 1.0);
    }

    #[test]
    fn episode_has_exact_length_and_refuses_extra_steps() {
        let sim = SimConfig { arrival_rate: 0.1, ..SimConfig::default() };
        let config = EnvConfig { episode_length: 50.0, ..EnvConfig::new(sim) };
        let mut env = TrafficEnv::new(config).unwrap();
        env.reset();
        let mut steps = 0;
        loop {
            steps += 1;
            if env.step(Action::Keep).unwrap().done {
                break;
            }
        }
        assert_eq!(steps, 50);
        assert!(matches!(env.step(Action::Keep), Err(EnvError::EpisodeDone)));
        env.reset();
        assert!(env.step(Action::Keep).is_ok());
    }

    #[test]
    fn episode_length_must_divide_time_step() {
        let config = EnvConfig { episode_length: 10.5, ..EnvConfig::default() };
        assert!(TrafficEnv::new(config).is_err());
    }
}
