//! Discrete-time microscopic model of a four-approach intersection.
//!
//! Each approach is a single lane ending at a stop line. Vehicles follow a
//! safe-speed car-following rule: they accelerate toward their top speed but
//! never faster than what lets them stop behind their leader, or at the stop
//! line when their axis is not green. A vehicle that crosses the stop line on
//! green leaves the model and its waiting time is booked by detection class.
//!
//! One call to [`Simulation::step`] runs `signal_step`, `spawn_step` and
//! `kinematics_step` in that order and advances the clock by `time_step`.

mod config;
mod signal;

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

pub use config::{Scenario, SimConfig};
pub use signal::{Phase, SignalCommand, SignalState};

use crate::error::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Approach {
    North,
    South,
    East,
    West,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Axis {
    NorthSouth,
    EastWest,
}

impl Approach {
    pub const ALL: [Approach; 4] = [Approach::North, Approach::South, Approach::East, Approach::West];

    pub fn axis(self) -> Axis {
        match self {
            Approach::North | Approach::South => Axis::NorthSouth,
            Approach::East | Approach::West => Axis::EastWest,
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vehicle {
    pub id: u64,
    pub approach: Approach,
    /// Distance to the stop line (m). Negative once the vehicle has crossed.
    pub position: f64,
    pub speed: f64,
    pub vmax: f64,
    pub detected: bool,
    pub spawn_time: f64,
    pub cumulative_wait: f64,
}

/// Running total for one class of exited vehicles.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct WaitTally {
    pub count: u64,
    pub total_wait: f64,
    pub total_travel_time: f64,
}

impl WaitTally {
    pub fn record(&mut self, wait: f64, travel_time: f64) {
        self.count += 1;
        self.total_wait += wait;
        self.total_travel_time += travel_time;
    }

    pub fn mean_wait(&self) -> Option<f64> {
        (self.count > 0).then(|| self.total_wait / self.count as f64)
    }

    /// Tally of vehicles booked after `earlier` was taken.
    pub fn since(&self, earlier: &WaitTally) -> WaitTally {
        WaitTally {
            count: self.count - earlier.count,
            total_wait: self.total_wait - earlier.total_wait,
            total_travel_time: self.total_travel_time - earlier.total_travel_time,
        }
    }

    pub fn merge(&mut self, other: &WaitTally) {
        self.count += other.count;
        self.total_wait += other.total_wait;
        self.total_travel_time += other.total_travel_time;
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct ClassTallies {
    pub detected: WaitTally,
    pub undetected: WaitTally,
    pub all: WaitTally,
}

impl ClassTallies {
    pub fn record(&mut self, vehicle: &Vehicle, travel_time: f64) {
        let class = if vehicle.detected { &mut self.detected } else { &mut self.undetected };
        class.record(vehicle.cumulative_wait, travel_time);
        self.all.record(vehicle.cumulative_wait, travel_time);
    }

    pub fn since(&self, earlier: &ClassTallies) -> ClassTallies {
        ClassTallies {
            detected: self.detected.since(&earlier.detected),
            undetected: self.undetected.since(&earlier.undetected),
            all: self.all.since(&earlier.all),
        }
    }

    pub fn merge(&mut self, other: &ClassTallies) {
        self.detected.merge(&other.detected);
        self.undetected.merge(&other.undetected);
        self.all.merge(&other.all);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub count: u64,
    pub mean_wait: Option<f64>,
}

impl From<&WaitTally> for ClassMetrics {
    fn from(t: &WaitTally) -> Self {
        ClassMetrics { count: t.count, mean_wait: t.mean_wait() }
    }
}

/// Waiting-time statistics over exited vehicles plus the live queue picture.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub clock: f64,
    pub detected: ClassMetrics,
    pub undetected: ClassMetrics,
    pub all: ClassMetrics,
    /// Vehicles below the waiting-speed threshold, per approach (N, S, E, W).
    pub queue_lengths: [usize; 4],
    pub vehicles_present: usize,
    pub spawned: u64,
    pub exited: u64,
}

/// The complete simulation state.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    clock: f64,
    signal: SignalState,
    /// Per-approach queues ordered front (closest to the stop line) to back.
    lanes: [VecDeque<Vehicle>; 4],
    /// Arrivals that could not enter because the lane entrance was blocked.
    backlog: [u64; 4],
    next_id: u64,
    spawned_count: u64,
    exited_count: u64,
    tallies: ClassTallies,
    rng: ChaCha8Rng,
}

/// Largest speed `v` for which moving `v * dt` and then braking at `decel`
/// stops within `gap`, given a leader that can itself still brake from
/// `leader_speed`.
fn safe_speed(gap: f64, leader_speed: f64, decel: f64, dt: f64) -> f64 {
    let room = gap + leader_speed * leader_speed / (2.0 * decel);
    if room <= 0.0 {
        return 0.0;
    }
    decel * (-dt + (dt * dt + 2.0 * room / decel).sqrt())
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let rng = ChaCha8Rng::seed_from_u64(config.rng_seed);
        Ok(Self {
            config,
            clock: 0.0,
            signal: SignalState::default(),
            lanes: Default::default(),
            backlog: [0; 4],
            next_id: 0,
            spawned_count: 0,
            exited_count: 0,
            tallies: ClassTallies::default(),
            rng,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn signal(&self) -> &SignalState {
        &self.signal
    }

    pub fn signal_mut(&mut self) -> &mut SignalState {
        &mut self.signal
    }

    pub fn lane(&self, approach: Approach) -> &VecDeque<Vehicle> {
        &self.lanes[approach.index()]
    }

    /// Mutable lane access. Callers must keep the front-to-back ordering.
    pub fn lane_mut(&mut self, approach: Approach) -> &mut VecDeque<Vehicle> {
        &mut self.lanes[approach.index()]
    }

    pub fn vehicles(&self) -> impl Iterator<Item = &Vehicle> {
        self.lanes.iter().flatten()
    }

    pub fn vehicle(&self, id: u64) -> Option<&Vehicle> {
        self.vehicles().find(|v| v.id == id)
    }

    pub fn vehicle_count(&self) -> usize {
        self.lanes.iter().map(VecDeque::len).sum()
    }

    pub fn spawned_count(&self) -> u64 {
        self.spawned_count
    }

    pub fn exited_count(&self) -> u64 {
        self.exited_count
    }

    pub fn backlog(&self) -> [u64; 4] {
        self.backlog
    }

    pub fn tallies(&self) -> &ClassTallies {
        &self.tallies
    }

    /// Changes the probability that subsequently spawned vehicles are detected.
    pub fn set_detection_rate(&mut self, rate: f64) -> Result<(), ConfigError> {
        if !(0.0..=1.0).contains(&rate) {
            return Err(ConfigError::invalid("detection_rate", format!("{rate} outside [0, 1]")));
        }
        self.config.detection_rate = rate;
        Ok(())
    }

    /// Places a vehicle directly on an approach, keeping lane order. Counts as
    /// a spawn so conservation still holds. Returns the new vehicle id.
    pub fn insert_vehicle(&mut self, approach: Approach, position: f64, speed: f64, detected: bool) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        self.spawned_count += 1;
        let vehicle = Vehicle {
            id,
            approach,
            position,
            speed: speed.clamp(0.0, self.config.vmax_default),
            vmax: self.config.vmax_default,
            detected,
            spawn_time: self.clock,
            cumulative_wait: 0.0,
        };
        let lane = &mut self.lanes[approach.index()];
        let at = lane.partition_point(|v| v.position <= position);
        lane.insert(at, vehicle);
        id
    }

    /// Books an already-removed vehicle as exited.
    pub fn record_exit(&mut self, vehicle: &Vehicle) {
        self.exited_count += 1;
        self.tallies.record(vehicle, self.clock - vehicle.spawn_time);
    }

    /// One full simulation step.
    pub fn step(&mut self, command: SignalCommand) {
        self.signal_step(command);
        self.spawn_step();
        self.kinematics_step();
        self.clock += self.config.time_step;
    }

    pub fn signal_step(&mut self, command: SignalCommand) {
        self.signal.step(command, &self.config);
    }

    /// Draws Poisson arrivals per approach and admits at most one waiting
    /// arrival per approach whose entrance is clear.
    pub fn spawn_step(&mut self) {
        let mean = self.config.arrival_rate * self.config.time_step;
        let arrivals = if mean > 0.0 {
            Some(Poisson::new(mean).expect("validated arrival rate"))
        } else {
            None
        };
        for approach in Approach::ALL {
            let i = approach.index();
            if let Some(dist) = &arrivals {
                self.backlog[i] += dist.sample(&mut self.rng) as u64;
            }
            if self.backlog[i] == 0 {
                continue;
            }
            let entrance = self.config.lane_length;
            let spacing = self.config.vehicle_spacing();
            let speed = match self.lanes[i].back() {
                Some(rear) if rear.position > entrance - spacing => continue,
                Some(rear) => {
                    let gap = entrance - rear.position - spacing;
                    safe_speed(gap, rear.speed, self.config.decel, self.config.time_step)
                        .min(self.config.vmax_default)
                }
                None => self.config.vmax_default,
            };
            self.backlog[i] -= 1;
            let detected = self.rng.random_bool(self.config.detection_rate);
            let id = self.next_id;
            self.next_id += 1;
            self.spawned_count += 1;
            self.lanes[i].push_back(Vehicle {
                id,
                approach,
                position: entrance,
                speed,
                vmax: self.config.vmax_default,
                detected,
                spawn_time: self.clock,
                cumulative_wait: 0.0,
            });
        }
    }

    /// Moves every vehicle, removes those that crossed on green and
    /// accumulates waiting time.
    pub fn kinematics_step(&mut self) {
        let cfg = &self.config;
        let dt = cfg.time_step;
        let spacing = cfg.vehicle_spacing();
        let mut exited = Vec::new();
        for approach in Approach::ALL {
            let green = self.signal.is_green(approach.axis());
            let lane = &mut self.lanes[approach.index()];
            // Followers react to the leader's state at the start of the step
            // (one step of reaction delay) but are clamped against where the
            // leader actually ends up.
            let mut leader: Option<(f64, f64, f64)> = None;
            for v in lane.iter_mut() {
                let mut speed = (v.speed + cfg.accel * dt).min(v.vmax);
                let mut floor = f64::NEG_INFINITY;
                let (start_position, start_speed) = (v.position, v.speed);
                match leader {
                    Some((lead_pos, lead_speed, lead_new_pos)) => {
                        let gap = v.position - lead_pos - spacing;
                        speed = speed.min(safe_speed(gap, lead_speed, cfg.decel, dt));
                        floor = lead_new_pos + spacing;
                    }
                    None if !green => {
                        speed = speed.min(safe_speed(v.position, 0.0, cfg.decel, dt));
                        floor = 0.0;
                    }
                    None => {}
                }
                let target = (v.position - speed.max(0.0) * dt).max(floor);
                let new_position = target.min(v.position);
                v.speed = ((v.position - new_position) / dt).clamp(0.0, v.vmax);
                v.position = new_position;
                if v.speed < cfg.wait_speed_threshold {
                    v.cumulative_wait += dt;
                }
                leader = Some((start_position, start_speed, v.position));
            }
            while lane.front().is_some_and(|v| v.position < 0.0) {
                exited.extend(lane.pop_front());
            }
        }
        // Exits are booked at the end of the step.
        let exit_clock = self.clock + dt;
        for v in exited {
            self.exited_count += 1;
            self.tallies.record(&v, exit_clock - v.spawn_time);
        }
    }

    pub fn metrics_snapshot(&self) -> Metrics {
        let mut queue_lengths = [0; 4];
        for approach in Approach::ALL {
            queue_lengths[approach.index()] = self
                .lane(approach)
                .iter()
                .filter(|v| v.speed < self.config.wait_speed_threshold)
                .count();
        }
        Metrics {
            clock: self.clock,
            detected: (&self.tallies.detected).into(),
            undetected: (&self.tallies.undetected).into(),
            all: (&self.tallies.all).into(),
            queue_lengths,
            vehicles_present: self.vehicle_count(),
            spawned: self.spawned_count,
            exited: self.exited_count,
        }
    }
}
