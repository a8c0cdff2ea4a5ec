#![allow(dead_code)]

use std::collections::HashMap;

use pdtsc::sim::{Approach, SignalCommand, SimConfig, Simulation};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Per-vehicle state remembered across one step.
struct Seen {
    position: f64,
    detected: bool,
    approach: Approach,
}

/// Steps `sim` for `steps` steps under random commands (switch with
/// probability `switch_prob`) and checks every simulator invariant after
/// each step. Returns the first violation.
pub fn check_sim_invariants(config: SimConfig, steps: usize, switch_prob: f64, seed: u64) -> Result<(), String> {
    let mut sim = Simulation::new(config.clone()).map_err(|e| e.to_string())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spacing = config.vehicle_length + config.min_gap;
    let mut seen: HashMap<u64, Seen> = HashMap::new();
    for step in 0..steps {
        let command = if rng.random_bool(switch_prob) { SignalCommand::Switch } else { SignalCommand::Keep };
        let clock = sim.clock();
        sim.step(command);
        let fail = |what: String| Err(format!("step {step}: {what}"));

        if sim.clock() != clock + config.time_step {
            return fail(format!("clock {} after {}", sim.clock(), clock));
        }
        if sim.spawned_count() != sim.exited_count() + sim.vehicle_count() as u64 {
            return fail(format!(
                "spawned {} != exited {} + present {}",
                sim.spawned_count(),
                sim.exited_count(),
                sim.vehicle_count()
            ));
        }
        let signal = *sim.signal();
        if signal.in_amber && !(0.0..=config.amber_duration).contains(&signal.amber_elapsed) {
            return fail(format!("amber_elapsed {}", signal.amber_elapsed));
        }
        if signal.phase_elapsed < 0.0 {
            return fail(format!("phase_elapsed {}", signal.phase_elapsed));
        }

        let mut present = HashMap::new();
        for approach in Approach::ALL {
            let lane = sim.lane(approach);
            for (i, v) in lane.iter().enumerate() {
                if !(0.0..=v.vmax).contains(&v.speed) {
                    return fail(format!("vehicle {} speed {} outside [0, {}]", v.id, v.speed, v.vmax));
                }
                if v.position < 0.0 {
                    return fail(format!("vehicle {} past the stop line at {}", v.id, v.position));
                }
                if i > 0 {
                    let leader = &lane[i - 1];
                    if v.position - leader.position < spacing - 1e-9 {
                        return fail(format!(
                            "vehicles {} and {} {} m apart, need {spacing}",
                            leader.id,
                            v.id,
                            v.position - leader.position
                        ));
                    }
                }
                if let Some(before) = seen.get(&v.id) {
                    if v.position > before.position {
                        return fail(format!("vehicle {} moved back from {} to {}", v.id, before.position, v.position));
                    }
                    if v.detected != before.detected {
                        return fail(format!("vehicle {} changed its detected flag", v.id));
                    }
                }
                present.insert(v.id, Seen { position: v.position, detected: v.detected, approach });
            }
        }
        for (id, before) in &seen {
            if !present.contains_key(id) && !signal.is_green(before.approach.axis()) {
                return fail(format!("vehicle {id} crossed on red from approach {:?}", before.approach));
            }
        }
        seen = present;
    }
    Ok(())
}

use nalgebra::DMatrix;
use pdtsc::agents::objectives::{clipped_surrogate, log_softmax, policy_gradient_surrogate, PolicySample};
use pdtsc::agents::TabularQ;
use pdtsc::approx::{Activation, BiasMode, Gradients, KfacConfig, KfacStats, Mlp};

/// Relative error `‖a − b‖ / max(‖a‖, ‖b‖, tiny)`.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale = norm(a).max(norm(b)).max(1e-12);
    diff / scale
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Central differences of `f` with respect to the flattened parameters of `net`.
pub fn numeric_gradient(net: &Mlp, h: f64, f: impl Fn(&Mlp) -> f64) -> Vec<f64> {
    let base = net.flatten();
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(base.len());
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.unflatten(&p).unwrap();
        let up = f(&probe);
        p[i] = base[i] - h;
        probe.unflatten(&p).unwrap();
        let down = f(&probe);
        out.push((up - down) / (2.0 * h));
    }
    out
}

/// Small random network: 1-3 layers of width <= 5, smooth activation.
pub fn random_net(rng: &mut ChaCha8Rng, outputs: usize) -> Mlp {
    let depth = rng.random_range(1..=3);
    let mut sizes = vec![rng.random_range(1..=5)];
    for _ in 1..depth {
        sizes.push(rng.random_range(1..=5));
    }
    sizes.push(outputs);
    let hidden = if rng.random_bool(0.5) { Activation::Tanh } else { Activation::Identity };
    Mlp::new(&sizes, hidden, 1.0, rng.random())
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-scale..scale)).collect()
}

/// Finite-difference checks of backward and both policy surrogates on one
/// random instance. Returns the worst relative error.
pub fn gradient_check_instance(seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-6;

    // backward: linear functional c·f(x)
    let outputs = rng.random_range(1..=4);
    let net = random_net(&mut rng, outputs);
    let x = random_vec(&mut rng, net.input_dim(), 1.0);
    let c = random_vec(&mut rng, outputs, 1.0);
    let cache = net.forward(&x).unwrap();
    let analytic = net.backward(&cache, &c).unwrap().flatten();
    let numeric = numeric_gradient(&net, h, |n| {
        n.predict(&x).unwrap().iter().zip(&c).map(|(y, c)| y * c).sum()
    });
    let mut worst = relative_error(&analytic, &numeric);

    // policy-gradient surrogate with entropy bonus
    let actions = rng.random_range(2..=3);
    let actor = random_net(&mut rng, actions);
    let samples: Vec<PolicySample> = (0..rng.random_range(1..=6))
        .map(|_| PolicySample {
            features: random_vec(&mut rng, actor.input_dim(), 1.0),
            action: rng.random_range(0..actions),
            advantage: rng.random_range(-2.0..2.0),
            old_log_prob: 0.0,
        })
        .collect();
    let entropy = rng.random_range(0.0..0.1);
    let analytic = policy_gradient_surrogate(&actor, &samples, entropy).unwrap().gradient.flatten();
    let numeric = numeric_gradient(&actor, h, |n| policy_gradient_surrogate(n, &samples, entropy).unwrap().objective);
    worst = worst.max(relative_error(&analytic, &numeric));

    // clipped surrogate; old log-probabilities are placed so the ratio sits
    // well inside or well outside the clip range
    let eps = 0.2;
    let samples: Vec<PolicySample> = samples
        .into_iter()
        .map(|mut s| {
            let lp = log_softmax(&actor.predict(&s.features).unwrap())[s.action];
            let ratio: f64 = match rng.random_range(0..3) {
                0 => rng.random_range(0.9..1.1),
                1 => rng.random_range(0.4..0.7),
                _ => rng.random_range(1.35..1.8),
            };
            s.old_log_prob = lp - ratio.ln();
            s
        })
        .collect();
    let analytic = clipped_surrogate(&actor, &samples, eps, entropy).unwrap().gradient.flatten();
    let numeric = numeric_gradient(&actor, h, |n| clipped_surrogate(n, &samples, eps, entropy).unwrap().objective);
    worst.max(relative_error(&analytic, &numeric))
}

/// Random symmetric positive-definite matrix.
pub fn random_spd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
    let m = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    &m * m.transpose() + DMatrix::identity(n, n) * rng.random_range(0.05..1.0)
}

/// Kronecker product `a ⊗ b`.
pub fn kron(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let (ar, ac, br, bc) = (a.nrows(), a.ncols(), b.nrows(), b.ncols());
    DMatrix::from_fn(ar * br, ac * bc, |i, j| a[(i / br, j / bc)] * b[(i % br, j % bc)])
}

/// Compares K-FAC preconditioning of one random single-layer instance with
/// a dense solve against `(A + λI) ⊗ (S + λI)`. Returns the relative error.
pub fn kfac_dense_instance(seed: u64, bias_mode: BiasMode) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let in_dim = rng.random_range(1..=5);
    let out_dim = rng.random_range(1..=6);
    let damping = if rng.random_bool(0.3) { 0.0 } else { rng.random_range(1e-3..0.5) };
    let net = Mlp::new(&[in_dim, out_dim], Activation::Identity, 1.0, seed);
    let mut stats = KfacStats::new(&net, KfacConfig { damping, decay: 0.9, bias_mode });
    let a_dim = in_dim + usize::from(bias_mode == BiasMode::Augmented);
    let a = random_spd(&mut rng, a_dim);
    let s = random_spd(&mut rng, out_dim);
    stats.layers[0].a = a.clone();
    stats.layers[0].s = s.clone();

    let mut g = Gradients::zeros_like(&net);
    g.layers[0].weights = random_vec(&mut rng, in_dim * out_dim, 2.0);
    g.layers[0].bias = random_vec(&mut rng, out_dim, 2.0);
    let got = stats.precondition(&g).unwrap();

    // Column-stacked G: the bias is an extra input column when augmented.
    let gm = DMatrix::from_fn(out_dim, a_dim, |r, c| {
        if c < in_dim {
            g.layers[0].weights[r * in_dim + c]
        } else {
            g.layers[0].bias[r]
        }
    });
    let a_d = &a + DMatrix::identity(a_dim, a_dim) * damping;
    let s_d = &s + DMatrix::identity(out_dim, out_dim) * damping;
    let fisher = kron(&a_d, &s_d);
    let vec_g = DMatrix::from_column_slice(out_dim * a_dim, 1, gm.as_slice());
    let solved = fisher.lu().solve(&vec_g).expect("SPD system");
    let delta = DMatrix::from_column_slice(out_dim, a_dim, solved.as_slice());

    let mut expected = Vec::new();
    for r in 0..out_dim {
        for c in 0..in_dim {
            expected.push(delta[(r, c)]);
        }
    }
    let expected_bias: Vec<f64> = match bias_mode {
        BiasMode::Augmented => (0..out_dim).map(|r| delta[(r, in_dim)]).collect(),
        BiasMode::OutputFactorOnly => {
            let b = DMatrix::from_column_slice(out_dim, 1, &g.layers[0].bias);
            s_d.lu().solve(&b).unwrap().as_slice().to_vec()
        }
    };
    expected.extend(expected_bias);
    relative_error(&got.flatten(), &expected)
}

/// A fixed deterministic 3-state, 2-action MDP: `(next_state, reward, done)`.
pub const MDP: [[(usize, f64, bool); 2]; 3] = [
    [(1, 0.0, false), (2, -1.0, false)],
    [(0, 1.0, false), (2, 2.0, false)],
    [(2, -0.5, false), (0, 0.0, true)],
];

/// Optimal action values by value iteration.
pub fn value_iteration(mdp: &[[(usize, f64, bool); 2]], gamma: f64) -> Vec<[f64; 2]> {
    let mut q = vec![[0.0f64; 2]; mdp.len()];
    loop {
        let v: Vec<f64> = q.iter().map(|row| row[0].max(row[1])).collect();
        let mut delta: f64 = 0.0;
        for (s, row) in mdp.iter().enumerate() {
            for (a, &(next, r, done)) in row.iter().enumerate() {
                let new = r + if done { 0.0 } else { gamma * v[next] };
                delta = delta.max((new - q[s][a]).abs());
                q[s][a] = new;
            }
        }
        if delta < 1e-13 {
            return q;
        }
    }
}

/// Tabular Q-learning with every pair visited in turn and a per-pair step
/// size `n^-0.6`. Returns the largest deviation from value iteration.
pub fn tabular_q_error(mdp: &[[(usize, f64, bool); 2]], gamma: f64, sweeps: usize) -> f64 {
    let mut q = TabularQ::new(mdp.len(), 2);
    for n in 1..=sweeps {
        let alpha = (n as f64).powf(-0.6);
        for (s, row) in mdp.iter().enumerate() {
            for (a, &(next, r, done)) in row.iter().enumerate() {
                q.update(s, a, r, next, done, alpha, gamma);
            }
        }
    }
    let oracle = value_iteration(mdp, gamma);
    let mut worst: f64 = 0.0;
    for (s, row) in oracle.iter().enumerate() {
        for (a, v) in row.iter().enumerate() {
            worst = worst.max((q.get(s, a) - v).abs());
        }
    }
    worst
}
