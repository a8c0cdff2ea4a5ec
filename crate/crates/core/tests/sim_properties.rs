mod common;

use pdtsc::sim::{Scenario, SignalCommand, SimConfig, Simulation};
use proptest::prelude::*;

fn scenario() -> impl Strategy<Value = Scenario> {
    prop_oneof![Just(Scenario::Sparse), Just(Scenario::Medium), Just(Scenario::Dense)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn invariants_hold_under_random_commands(
        scenario in scenario(),
        seed in any::<u64>(),
        detection_rate in 0.0f64..=1.0,
        switch_prob in 0.0f64..0.5,
        command_seed in any::<u64>(),
    ) {
        let config = SimConfig { rng_seed: seed, detection_rate, ..SimConfig::preset(scenario) };
        common::check_sim_invariants(config, 900, switch_prob, command_seed).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn invariants_hold_with_unusual_geometry(
        lane_length in 20.0f64..300.0,
        vmax in 3.0f64..30.0,
        accel in 0.5f64..4.0,
        decel in 1.0f64..8.0,
        min_gap in 0.5f64..5.0,
        arrival_rate in 0.0f64..0.8,
        seed in any::<u64>(),
    ) {
        let config = SimConfig {
            lane_length,
            vmax_default: vmax,
            accel,
            decel,
            min_gap,
            arrival_rate,
            rng_seed: seed,
            ..SimConfig::default()
        };
        common::check_sim_invariants(config, 600, 0.1, seed ^ 1).map_err(TestCaseError::fail)?;
    }

    #[test]
    fn same_seed_same_trajectory(seed in any::<u64>(), switch_every in 5usize..60) {
        let config = SimConfig { rng_seed: seed, detection_rate: 0.5, ..SimConfig::preset(Scenario::Dense) };
        let run = || {
            let mut sim = Simulation::new(config.clone()).unwrap();
            for t in 0..400 {
                let cmd = if t % switch_every == 0 { SignalCommand::Switch } else { SignalCommand::Keep };
                sim.step(cmd);
            }
            (sim.metrics_snapshot(), sim.vehicles().cloned().collect::<Vec<_>>())
        };
        prop_assert_eq!(run(), run());
    }
}

#[test]
fn empty_road_stays_empty() {
    let config = SimConfig { arrival_rate: 0.0, ..SimConfig::default() };
    let mut sim = Simulation::new(config).unwrap();
    for _ in 0..100 {
        sim.step(SignalCommand::Switch);
    }
    assert_eq!(sim.spawned_count(), 0);
    assert_eq!(sim.vehicle_count(), 0);
    assert_eq!(sim.clock(), 100.0);
}
