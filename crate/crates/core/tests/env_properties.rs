use pdtsc::env::{Action, EnvConfig, Observation, RewardMode, TrafficEnv};
use pdtsc::sim::{Approach, Scenario, SimConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn env(scenario: Scenario, rate: f64, seed: u64) -> TrafficEnv {
    let sim = SimConfig { detection_rate: rate, rng_seed: seed, ..SimConfig::preset(scenario) };
    TrafficEnv::new(EnvConfig::new(sim)).unwrap()
}

fn check_bounds(obs: &Observation) -> Result<(), TestCaseError> {
    for v in obs.detected_count.iter().chain(&obs.nearest_detected_distance) {
        prop_assert!((0.0..=1.0).contains(v), "slot {v} outside [0, 1]");
    }
    prop_assert!(obs.amber_flag == 0.0 || obs.amber_flag == 1.0);
    prop_assert!(obs.current_phase == 0.0 || obs.current_phase == 1.0);
    prop_assert!(obs.phase_time >= 0.0);
    if let Some(t) = obs.time_of_day {
        prop_assert!((0.0..1.0).contains(&t));
    }
    Ok(())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn rewards_and_observations_stay_in_bounds(
        rate in 0.0f64..=1.0,
        seed in any::<u64>(),
        action_seed in any::<u64>(),
        dense in any::<bool>(),
    ) {
        let scenario = if dense { Scenario::Dense } else { Scenario::Medium };
        let mut env = env(scenario, rate, seed);
        let mut rng = ChaCha8Rng::seed_from_u64(action_seed);
        check_bounds(&env.reset())?;
        for _ in 0..600 {
            let action = if rng.random_bool(0.1) { Action::Switch } else { Action::Keep };
            let out = env.step(action).unwrap();
            let r = out.info.reward;
            prop_assert!(r.partial >= r.full);
            prop_assert!(r.full <= 0.0 && r.partial <= 0.0);
            prop_assert_eq!(r.full, -(r.detected_deficit + r.undetected_deficit));
            prop_assert_eq!(r.partial, -r.detected_deficit);
            if env.sim().vehicles().all(|v| v.detected) {
                prop_assert_eq!(r.partial, r.full);
            }
            check_bounds(&out.observation)?;
        }
    }

    #[test]
    fn undetected_vehicles_are_invisible(seed in any::<u64>(), shift in 0.0f64..30.0, new_speed in 0.0f64..13.0) {
        let mut env = env(Scenario::Dense, 0.5, seed);
        env.reset();
        for _ in 0..200 {
            env.step(Action::Keep).unwrap();
        }
        let obs = env.observe();
        let partial = pdtsc::env::compute_reward(env.sim()).partial;
        for approach in Approach::ALL {
            let lane_length = env.config().sim.lane_length;
            for v in env.sim_mut().lane_mut(approach).iter_mut().filter(|v| !v.detected) {
                v.speed = new_speed.min(v.vmax);
                v.position = (v.position + shift).min(lane_length);
            }
        }
        prop_assert_eq!(env.observe(), obs);
        prop_assert_eq!(pdtsc::env::compute_reward(env.sim()).partial, partial);
    }

    #[test]
    fn observation_flatten_round_trips(
        counts in prop::array::uniform4(0.0f64..=1.0),
        distances in prop::array::uniform4(0.0f64..=1.0),
        phase_time in 0.0f64..500.0,
        amber in any::<bool>(),
        phase in any::<bool>(),
        tod in prop::option::of(0.0f64..1.0),
    ) {
        let obs = Observation {
            detected_count: counts,
            nearest_detected_distance: distances,
            phase_time,
            amber_flag: f64::from(u8::from(amber)),
            current_phase: f64::from(u8::from(phase)),
            time_of_day: tod,
        };
        let flat = obs.to_vec();
        prop_assert_eq!(flat.len(), obs.len());
        prop_assert_eq!(Observation::from_slice(&flat), Some(obs));
    }
}

#[test]
fn episode_has_exact_length() {
    let mut e = env(Scenario::Sparse, 1.0, 3);
    let mut config = e.config().clone();
    config.episode_length = 120.0;
    e = TrafficEnv::new(config).unwrap();
    e.reset();
    let mut steps = 0;
    loop {
        steps += 1;
        if e.step(Action::Keep).unwrap().done {
            break;
        }
    }
    assert_eq!(steps, 120);
    assert!(e.step(Action::Keep).is_err());
    e.reset();
    assert!(e.step(Action::Keep).is_ok());
}

#[test]
fn reset_clears_the_intersection() {
    let mut e = env(Scenario::Dense, 1.0, 9);
    e.reset();
    for t in 0..300 {
        e.step(if t % 20 == 0 { Action::Switch } else { Action::Keep }).unwrap();
    }
    let obs = e.reset();
    assert_eq!(e.sim().clock(), 0.0);
    assert_eq!(e.sim().vehicle_count(), 0);
    assert_eq!(obs.phase_time, 0.0);
    assert_eq!(obs.current_phase, 0.0);
    assert_eq!(obs.detected_count, [0.0; 4]);
    assert_eq!(obs.nearest_detected_distance, [1.0; 4]);
}

#[test]
fn time_of_day_adds_a_slot() {
    let mut config = EnvConfig::new(SimConfig::default());
    assert_eq!(config.observation_len(), 11);
    config.include_time_of_day = true;
    let mut e = TrafficEnv::new(config).unwrap();
    let obs = e.reset();
    assert_eq!(obs.len(), 12);
    assert_eq!(obs.time_of_day, Some(0.0));
}

#[test]
fn full_reward_mode_returns_full_reward() {
    let mut config = EnvConfig::new(SimConfig { detection_rate: 0.3, ..SimConfig::preset(Scenario::Dense) });
    config.reward_mode = RewardMode::Full;
    let mut e = TrafficEnv::new(config).unwrap();
    e.reset();
    for _ in 0..200 {
        let out = e.step(Action::Keep).unwrap();
        assert_eq!(out.reward, out.info.reward.full);
    }
}

#[test]
fn rejects_bad_episode_length() {
    let mut config = EnvConfig::new(SimConfig::default());
    config.episode_length = 10.5;
    assert!(TrafficEnv::new(config).is_err());
}
