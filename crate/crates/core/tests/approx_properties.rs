mod common;

use pdtsc::approx::checkpoint::{Checkpoint, NamedNetwork};
use pdtsc::approx::{Activation, BiasMode, Dense, Gradients, KfacConfig, KfacStats, Mlp, Optimizer, OptimizerKind};
use pdtsc::error::CheckpointError;
use proptest::prelude::*;

#[test]
fn backward_and_surrogates_match_finite_differences() {
    for seed in 0..40 {
        let err = common::gradient_check_instance(seed);
        assert!(err < 1e-4, "instance {seed}: relative error {err}");
    }
}

#[test]
fn kfac_matches_dense_kronecker_solve() {
    for seed in 0..40 {
        for mode in [BiasMode::OutputFactorOnly, BiasMode::Augmented] {
            let err = common::kfac_dense_instance(seed, mode);
            assert!(err < 1e-8, "instance {seed} {mode:?}: relative error {err}");
        }
    }
}

#[test]
fn kfac_stats_track_sample_moments() {
    let net = Mlp::from_layers(vec![Dense::zeros(2, 2, Activation::Identity)]).unwrap();
    let mut stats = KfacStats::new(&net, KfacConfig { decay: 0.5, ..KfacConfig::default() });
    let batch = pdtsc::approx::CurvatureBatch {
        activations: vec![vec![vec![1.0, 2.0]], vec![vec![3.0, -1.0]]],
        gradients: vec![(1.0, vec![vec![2.0, 0.0]]), (3.0, vec![vec![0.0, 1.0]])],
    };
    stats.update(&batch).unwrap();
    // mean(aaᵀ) = [[5, -0.5], [-0.5, 2.5]]
    let a = &stats.layers[0].a;
    assert_eq!((a[(0, 0)], a[(0, 1)], a[(1, 1)]), (0.5 + 2.5, -0.25, 0.5 + 1.25));
    // weighted mean(ggᵀ) = [[4/4, 0], [0, 3/4]]
    let s = &stats.layers[0].s;
    assert_eq!((s[(0, 0)], s[(0, 1)], s[(1, 1)]), (0.5 + 0.5, 0.0, 0.5 + 0.375));
}

#[test]
fn single_affine_layer_example() {
    let net = Mlp::from_layers(vec![Dense {
        in_dim: 1,
        out_dim: 1,
        weights: vec![2.0],
        bias: vec![1.0],
        activation: Activation::Identity,
    }])
    .unwrap();
    assert_eq!(net.predict(&[3.0]).unwrap(), vec![7.0]);
    let cache = net.forward(&[3.0]).unwrap();
    let g = net.backward(&cache, &[1.0]).unwrap();
    assert_eq!(g.flatten(), vec![3.0, 1.0]);
}

#[test]
fn mismatched_input_is_rejected() {
    let net = Mlp::new(&[3, 4, 2], Activation::Tanh, 1.0, 0);
    assert!(net.predict(&[1.0, 2.0]).is_err());
    assert!(Mlp::from_layers(vec![
        Dense::zeros(3, 4, Activation::Tanh),
        Dense::zeros(5, 2, Activation::Identity)
    ])
    .is_err());
}

#[test]
fn sgd_step_moves_along_direction() {
    let mut net = Mlp::new(&[2, 3, 1], Activation::Tanh, 1.0, 4);
    let before = net.flatten();
    let mut dir = Gradients::zeros_like(&net);
    let flat: Vec<f64> = (0..before.len()).map(|i| i as f64 * 0.1 - 0.5).collect();
    dir.unflatten(&flat).unwrap();
    Optimizer::new(OptimizerKind::Sgd).step(&mut net, &dir, 0.01).unwrap();
    for ((after, b), d) in net.flatten().iter().zip(&before).zip(&flat) {
        assert_eq!(*after, b + 0.01 * d);
    }
}

fn checkpoint_bytes() -> Vec<u8> {
    Checkpoint {
        meta: serde_json::json!({ "kind": "test" }),
        networks: vec![NamedNetwork { name: "q".into(), seed: 3, net: Mlp::new(&[4, 5, 2], Activation::Relu, 1.0, 3) }],
        blocks: vec![("extra".into(), vec![1.0, 2.0])],
    }
    .to_bytes()
}

#[test]
fn checkpoint_errors_are_distinct() {
    let bytes = checkpoint_bytes();
    let mut wrong_version = bytes.clone();
    wrong_version[8] = 2;
    assert!(matches!(Checkpoint::from_bytes(&wrong_version), Err(CheckpointError::Version { found: 2, .. })));
    assert!(matches!(Checkpoint::from_bytes(&bytes[..bytes.len() - 8]), Err(CheckpointError::Truncated { .. })));
    let mut extra = bytes.clone();
    extra.extend_from_slice(&0f64.to_le_bytes());
    assert!(matches!(Checkpoint::from_bytes(&extra), Err(CheckpointError::Shape(_))));
    assert!(matches!(Checkpoint::from_bytes(b"hello"), Err(CheckpointError::BadMagic)));
}

proptest! {
    #[test]
    fn flatten_unflatten_round_trip(
        sizes in prop::collection::vec(1usize..6, 2..5),
        seed in any::<u64>(),
        relu in any::<bool>(),
    ) {
        let act = if relu { Activation::Relu } else { Activation::Tanh };
        let net = Mlp::new(&sizes, act, 1.0, seed);
        let flat = net.flatten();
        prop_assert_eq!(flat.len(), net.param_count());
        let mut copy = Mlp::zeros(&net.shapes()).unwrap();
        copy.unflatten(&flat).unwrap();
        prop_assert_eq!(&copy, &net);
        let mut short = flat.clone();
        short.pop();
        prop_assert!(copy.unflatten(&short).is_err());
    }

    #[test]
    fn checkpoint_bytes_round_trip(sizes in prop::collection::vec(1usize..6, 2..4), seed in any::<u64>(), block in prop::collection::vec(-1e6f64..1e6, 0..10)) {
        let ckpt = Checkpoint {
            meta: serde_json::json!({ "seed": seed }),
            networks: vec![NamedNetwork { name: "net".into(), seed, net: Mlp::new(&sizes, Activation::Tanh, 1.0, seed) }],
            blocks: vec![("b".into(), block)],
        };
        prop_assert_eq!(Checkpoint::from_bytes(&ckpt.to_bytes()).unwrap(), ckpt);
    }

    #[test]
    fn tabular_q_converges_on_random_deterministic_mdps(
        next in prop::array::uniform6(0usize..3),
        rewards in prop::array::uniform6(-2.0f64..2.0),
        terminal in 0usize..7,
        gamma in 0.5f64..0.9,
    ) {
        let mut mdp = [[(0, 0.0, false); 2]; 3];
        for i in 0..6 {
            mdp[i / 2][i % 2] = (next[i], rewards[i], i == terminal);
        }
        let err = common::tabular_q_error(&mdp, gamma, 40_000);
        prop_assert!(err < 1e-3, "max |Q - Q*| = {}", err);
    }
}

#[test]
fn tabular_q_matches_value_iteration_on_fixed_mdp() {
    let err = common::tabular_q_error(&common::MDP, 0.9, 40_000);
    assert!(err < 1e-3, "max |Q - Q*| = {err}");
}
