//! Analytic gradients against central finite differences.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sttl_ddpg::{Batch, DdpgAgent, DdpgConfig, Mlp, MlpSpec, NormMode, OutputActivation, Transition};

const STEP: f64 = 1e-5;

fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    diff / na.max(nb).max(1e-12)
}

fn numeric<F: FnMut(&[f64]) -> f64>(params: &[f64], mut f: F) -> Vec<f64> {
    let mut p = params.to_vec();
    (0..p.len())
        .map(|i| {
            let orig = p[i];
            p[i] = orig + STEP;
            let up = f(&p);
            p[i] = orig - STEP;
            let down = f(&p);
            p[i] = orig;
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn random_matrix(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Array2<f64> {
    Array2::from_shape_fn((rows, cols), |_| rng.random_range(-1.0..1.0))
}

fn with_params(net: &Mlp, params: &[f64]) -> Mlp {
    let mut copy = net.clone();
    copy.params_mut().copy_from_slice(params);
    copy
}

fn random_net(rng: &mut ChaCha8Rng, input: usize, output: usize, activation: OutputActivation) -> Mlp {
    let hidden = [rng.random_range(2..=8), rng.random_range(2..=8)];
    let mut net = Mlp::new(MlpSpec::new(input, &hidden, output, activation), 0.5, rng);
    // Non-trivial batch-norm scale, shift and running statistics.
    let warm = random_matrix(rng, 5, input) * 2.0;
    let cache = net.forward(warm.view(), NormMode::Batch);
    net.update_running_stats(&cache);
    let n = net.num_params();
    for p in net.params_mut().iter_mut().take(n) {
        *p += rng.random_range(-0.3..0.3);
    }
    net
}

#[test]
fn projected_output_gradient_both_norm_modes() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for case in 0..20 {
        let input = rng.random_range(1..=8);
        let output = rng.random_range(1..=4);
        let activation = if case % 2 == 0 { OutputActivation::Sigmoid } else { OutputActivation::Identity };
        let net = random_net(&mut rng, input, output, activation);
        let rows = rng.random_range(3..=8);
        let x = random_matrix(&mut rng, rows, input);
        let weights = random_matrix(&mut rng, rows, output);
        for mode in [NormMode::Batch, NormMode::Running] {
            let cache = net.forward(x.view(), mode);
            let (analytic, d_input) = net.backward(&cache, weights.view());
            let objective = |m: &Mlp, x: &Array2<f64>| (m.forward(x.view(), mode).output() * &weights).sum();
            let fd = numeric(net.params(), |p| objective(&with_params(&net, p), &x));
            let err = relative_error(&analytic, &fd);
            assert!(err < 1e-4, "case {case} {mode:?}: parameter error {err}");

            let flat: Vec<f64> = x.iter().copied().collect();
            let fd_input = numeric(&flat, |v| {
                let xi = Array2::from_shape_vec((rows, input), v.to_vec()).unwrap();
                objective(&net, &xi)
            });
            let analytic_input: Vec<f64> = d_input.iter().copied().collect();
            let err = relative_error(&analytic_input, &fd_input);
            assert!(err < 1e-4, "case {case} {mode:?}: input error {err}");
        }
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize, ds: usize, da: usize) -> Batch {
    let items: Vec<Transition> = (0..n)
        .map(|_| Transition {
            state: (0..ds).map(|_| rng.random_range(0.0..1.0)).collect(),
            action: (0..da).map(|_| rng.random_range(0.0..1.0)).collect(),
            reward: rng.random_range(-1.0..1.0),
            next_state: (0..ds).map(|_| rng.random_range(0.0..1.0)).collect(),
            done: rng.random_bool(0.2),
        })
        .collect();
    Batch::from_transitions(&items)
}

#[test]
fn critic_loss_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for case in 0..10 {
        let ds = rng.random_range(1..=6);
        let da = rng.random_range(1..=3);
        let actor = random_net(&mut rng, ds, da, OutputActivation::Sigmoid);
        let critic = random_net(&mut rng, ds + da, 1, OutputActivation::Identity);
        let agent = DdpgAgent::with_networks(actor, critic.clone(), DdpgConfig::default());
        let n = rng.random_range(3..=8);
        let batch = random_batch(&mut rng, n, ds, da);
        let targets = agent.critic_target(&batch);
        let (_, analytic) = agent.critic_loss_gradient(&batch, &targets);
        let input = ndarray::concatenate![ndarray::Axis(1), batch.states, batch.actions];
        let fd = numeric(critic.params(), |p| {
            let q = with_params(&critic, p).forward(input.view(), NormMode::Batch);
            let q: Array1<f64> = q.output().column(0).to_owned();
            (&q - &targets).mapv(|d| d * d).mean().unwrap()
        });
        let err = relative_error(&analytic, &fd);
        assert!(err < 1e-4, "case {case}: {err}");
    }
}

#[test]
fn actor_objective_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for case in 0..10 {
        let ds = rng.random_range(1..=6);
        let da = rng.random_range(1..=3);
        let actor = random_net(&mut rng, ds, da, OutputActivation::Sigmoid);
        let critic = random_net(&mut rng, ds + da, 1, OutputActivation::Identity);
        let agent = DdpgAgent::with_networks(actor.clone(), critic.clone(), DdpgConfig::default());
        let n = rng.random_range(3..=8);
        let states = random_matrix(&mut rng, n, ds);
        let (_, analytic) = agent.actor_objective_gradient(states.view());
        let fd = numeric(actor.params(), |p| {
            let a = with_params(&actor, p).forward(states.view(), NormMode::Batch).output().clone();
            let input = ndarray::concatenate![ndarray::Axis(1), states, a];
            -critic.forward(input.view(), NormMode::Running).output().mean().unwrap()
        });
        let err = relative_error(&analytic, &fd);
        assert!(err < 1e-4, "case {case}: {err}");
    }
}

#[test]
fn constant_critic_gives_zero_actor_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let actor = random_net(&mut rng, 3, 2, OutputActivation::Sigmoid);
    let mut critic = Mlp::zeros(MlpSpec::new(5, &[4, 4], 1, OutputActivation::Identity));
    let last_bias = critic.num_params() - 1;
    critic.params_mut()[last_bias] = 2.5;
    let mut agent = DdpgAgent::with_networks(actor.clone(), critic, DdpgConfig {
        batch_size: 4,
        ..DdpgConfig::default()
    });
    let states = random_matrix(&mut rng, 6, 3);
    let (objective, grads) = agent.actor_objective_gradient(states.view());
    assert_eq!(objective, 2.5);
    assert!(grads.iter().all(|g| *g == 0.0));
    let batch = random_batch(&mut rng, 6, 3, 2);
    agent.actor_update(&batch);
    assert_eq!(agent.actor().params(), actor.params());
}

#[test]
fn critic_already_fitting_targets_has_zero_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let critic = random_net(&mut rng, 4, 1, OutputActivation::Identity);
    let actor = random_net(&mut rng, 3, 1, OutputActivation::Sigmoid);
    let agent = DdpgAgent::with_networks(actor, critic.clone(), DdpgConfig::default());
    let batch = random_batch(&mut rng, 5, 3, 1);
    let input = ndarray::concatenate![ndarray::Axis(1), batch.states, batch.actions];
    let q = critic.forward(input.view(), NormMode::Batch).output().column(0).to_owned();
    let (loss, grads) = agent.critic_loss_gradient(&batch, &q);
    assert_eq!(loss, 0.0);
    assert!(grads.iter().all(|g| *g == 0.0));
}

#[test]
fn critic_loss_decreases_on_a_linear_fit() {
    // Rewards are a linear function of (state, action) and transitions are
    // terminal, so the critic solves a least-squares regression.
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let items: Vec<Transition> = (0..64)
        .map(|_| {
            let s: f64 = rng.random_range(0.0..1.0);
            let a: f64 = rng.random_range(0.0..1.0);
            Transition {
                state: vec![s],
                action: vec![a],
                reward: 0.5 * s - 2.0 * a + 0.3,
                next_state: vec![s],
                done: true,
            }
        })
        .collect();
    let batch = Batch::from_transitions(&items);
    let mut agent = DdpgAgent::new(1, 1, DdpgConfig {
        hidden: vec![16, 16],
        ..DdpgConfig::default()
    });
    let mut previous = f64::INFINITY;
    for step in 0..100 {
        let loss = agent.critic_update(&batch);
        assert!(loss <= previous, "step {step}: {loss} > {previous}");
        previous = loss;
    }
}

#[test]
fn actor_saturates_under_increasing_critic() {
    // Critic = sum of actions, fixed: the actor is pushed toward 1.
    let da = 2;
    let mut critic = Mlp::zeros(MlpSpec::new(2 + da, &[], 1, OutputActivation::Identity));
    critic.params_mut()[2] = 1.0;
    critic.params_mut()[3] = 1.0;
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let actor = Mlp::new(MlpSpec::new(2, &[8, 8], da, OutputActivation::Sigmoid), 3e-3, &mut rng);
    let mut agent = DdpgAgent::with_networks(actor, critic, DdpgConfig {
        actor_learning_rate: 1e-2,
        ..DdpgConfig::default()
    });
    let batch = random_batch(&mut rng, 16, 2, da);
    let first = agent.actor_update(&batch);
    let mut last = first;
    for _ in 0..300 {
        last = agent.actor_update(&batch);
    }
    assert!(last > first);
    assert!(last > 1.95, "objective {last}");
}
