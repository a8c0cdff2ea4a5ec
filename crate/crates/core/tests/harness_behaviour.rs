use pdtsc::agents::{Agent, AgentConfig, Algorithm};
use pdtsc::adapt::TimelinePoint;
use pdtsc::env::EnvConfig;
use pdtsc::error::HarnessError;
use pdtsc::harness::records::{from_csv_str, read_csv, to_csv_string, CsvRecord};
use pdtsc::harness::{cmd_eval, cmd_sweep, cmd_train, evaluate, train, EpisodeRecord, ExperimentConfig, SweepRecord};
use pdtsc::sim::{Scenario, SimConfig};
use proptest::prelude::*;

fn env_config(rate: f64) -> EnvConfig {
    let mut config = EnvConfig::new(SimConfig { detection_rate: rate, ..SimConfig::preset(Scenario::Medium) });
    config.episode_length = 600.0;
    config
}

fn agent(alg: Algorithm, seed: u64) -> Agent {
    let config = AgentConfig { seed, hidden_layers: vec![16], learning_starts: 100, ..AgentConfig::for_algorithm(alg) };
    Agent::new(config, 11).unwrap()
}

fn tiny_experiment(dir: &std::path::Path, algorithms: &str, rates: &str) -> ExperimentConfig {
    let text = format!(
        r#"
[experiment]
scenario = "sparse"
algorithms = {algorithms}
rates = {rates}
train_steps = 1200
eval_episodes = 2
seeds = [0, 1]
out_dir = "{}"

[env]
episode_length = 300.0

[agent]
hidden_layers = [8]
learning_starts = 100
"#,
        dir.display()
    );
    ExperimentConfig::from_toml_str(&text).unwrap()
}

#[test]
fn zero_training_steps_leave_agent_untouched() {
    let mut a = agent(Algorithm::Ppo, 0);
    let before = a.parameters();
    let curve = train(&mut a, &env_config(1.0), 0, 0).unwrap();
    assert!(curve.is_empty());
    assert_eq!(a.parameters(), before);
}

#[test]
fn fixed_time_needs_no_training() {
    let mut a = agent(Algorithm::FixedTime, 0);
    assert!(train(&mut a, &env_config(1.0), 5_000, 0).unwrap().is_empty());
    let summary = evaluate(&a, &env_config(1.0), 2, 0).unwrap();
    assert_eq!(summary.episodes, 2);
    assert!(summary.wait_all().unwrap() > 0.0);
}

#[test]
fn training_and_evaluation_are_deterministic() {
    let run = || {
        let mut a = agent(Algorithm::Dql, 3);
        let curve = train(&mut a, &env_config(0.5), 1_800, 3).unwrap();
        (curve, a.parameters(), evaluate(&a, &env_config(0.5), 2, 3).unwrap())
    };
    let (c1, p1, e1) = run();
    let (c2, p2, e2) = run();
    assert_eq!(c1.len(), 3);
    assert_eq!(c1, c2);
    assert_eq!(p1, p2);
    assert_eq!(e1, e2);
}

#[test]
fn observation_shape_mismatch_is_reported() {
    let mut config = env_config(1.0);
    config.include_time_of_day = true;
    let mut a = agent(Algorithm::A2c, 0);
    let failure = train(&mut a, &config, 100, 0).unwrap_err();
    assert!(matches!(failure.error, HarnessError::ObservationShape { agent: 11, env: 12 }));
    assert!(matches!(evaluate(&a, &config, 1, 0), Err(HarnessError::ObservationShape { .. })));
}

#[test]
fn detection_extremes_leave_one_class_empty() {
    let a = agent(Algorithm::FixedTime, 0);
    let full = evaluate(&a, &env_config(1.0), 1, 0).unwrap();
    assert!(full.wait_undetected().is_none());
    assert_eq!(full.wait_detected(), full.wait_all());
    let blind = evaluate(&a, &env_config(0.0), 1, 0).unwrap();
    assert!(blind.wait_detected().is_none());
    assert_eq!(blind.wait_undetected(), blind.wait_all());
}

#[test]
fn sweep_writes_fixed_header_and_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_experiment(dir.path(), r#"["fixed", "a2c"]"#, "[0.0, 1.0]");
    let report = cmd_sweep(&config).unwrap();
    assert!(report.failures.is_empty());
    assert_eq!(report.records.len(), 8);
    let text = std::fs::read_to_string(&report.csv).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "algorithm,scenario,detection_rate,seed,wait_all,wait_detected,wait_undetected,episodes"
    );
    assert_eq!(read_csv::<SweepRecord>(&report.csv).unwrap(), report.records);
    let svg = std::fs::read_to_string(report.svg.unwrap()).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("a2c"));
    assert!(dir.path().join("sweep_summary.csv").exists());
    assert!(dir.path().join("curves").join("a2c_r1_s0.csv").exists());
}

#[test]
fn eval_uses_saved_checkpoint() {
    let dir = tempfile::tempdir().unwrap();
    let config = tiny_experiment(dir.path(), r#"["ppo"]"#, "[1.0]");
    let report = cmd_train(&config).unwrap();
    assert!(report.failures().is_empty());
    let ckpt = report.cells[0].checkpoint.clone().unwrap();
    let record = cmd_eval(&config, &ckpt).unwrap();
    assert_eq!(record.algorithm, Algorithm::Ppo);
    assert_eq!(record.episodes, 2);
    assert!(dir.path().join("eval.csv").exists());
    assert!(cmd_eval(&config, &dir.path().join("missing.ckpt")).is_err());
}

#[test]
fn missing_checkpoints_fail_cells_not_the_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let mut config = tiny_experiment(dir.path(), r#"["ppo"]"#, "[1.0]");
    config.experiment.train_inline = false;
    let report = cmd_sweep(&config).unwrap();
    assert_eq!(report.failures.iter().filter(|f| f.contains("missing checkpoint")).count(), 2);
    assert!(report.failures.iter().any(|f| f.starts_with("sweep chart")));
    assert!(report.records.is_empty());
    assert_eq!(std::fs::read_to_string(&report.csv).unwrap().lines().count(), 1);
    assert!(report.svg.is_none());
}

#[test]
fn empty_timeline_csv_is_header_only() {
    let text = to_csv_string::<TimelinePoint>(&[]).unwrap();
    assert_eq!(text.trim_end(), TimelinePoint::HEADER.join(","));
    assert!(from_csv_str::<TimelinePoint>(&text).unwrap().is_empty());
}

fn opt_wait() -> impl Strategy<Value = Option<f64>> {
    prop::option::of(0.0f64..1e4)
}

proptest! {
    #[test]
    fn sweep_records_round_trip(
        rows in prop::collection::vec((0.0f64..=1.0, any::<u64>(), opt_wait(), opt_wait(), opt_wait(), 0usize..100), 0..20),
    ) {
        let records: Vec<SweepRecord> = rows
            .into_iter()
            .map(|(rate, seed, a, d, u, n)| SweepRecord {
                algorithm: Algorithm::Acktr,
                scenario: Scenario::Dense,
                detection_rate: rate,
                seed,
                wait_all: a,
                wait_detected: d,
                wait_undetected: u,
                episodes: n,
            })
            .collect();
        let text = to_csv_string(&records).unwrap();
        prop_assert_eq!(from_csv_str::<SweepRecord>(&text).unwrap(), records);
    }

    #[test]
    fn timeline_records_round_trip(
        rows in prop::collection::vec((any::<u32>(), 0.0f64..=1.0, opt_wait(), opt_wait(), opt_wait(), any::<bool>()), 0..20),
    ) {
        let points: Vec<TimelinePoint> = rows
            .into_iter()
            .map(|(step, rate, a, d, u, flag)| TimelinePoint {
                step: u64::from(step),
                detection_rate: rate,
                wait_all: a,
                wait_detected: d,
                wait_undetected: u,
                instability_flag: flag,
            })
            .collect();
        let text = to_csv_string(&points).unwrap();
        prop_assert_eq!(from_csv_str::<TimelinePoint>(&text).unwrap(), points);
    }

    #[test]
    fn episode_records_round_trip(ret in -1e5f64..0.0, wait in opt_wait(), episode in any::<u32>()) {
        let rec = vec![EpisodeRecord {
            episode: u64::from(episode),
            steps: 3600,
            return_partial: ret,
            return_full: ret * 2.0,
            wait_all: wait,
            wait_detected: wait,
            wait_undetected: None,
        }];
        let text = to_csv_string(&rec).unwrap();
        prop_assert_eq!(from_csv_str::<EpisodeRecord>(&text).unwrap(), rec);
    }
}
