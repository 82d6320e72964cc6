//! Actor-critic agent with target networks.

use ndarray::{concatenate, Array1, Array2, ArrayView2, Axis};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::adam::Adam;
use crate::error::DdpgError;
use crate::mlp::{Mlp, MlpSpec, NormMode, OutputActivation};
use crate::replay::{Batch, ReplayBuffer, Transition};

/// Hyperparameters. Defaults follow the published configuration for the
/// caching agents (two hidden layers of 64 units, buffer of one million
/// transitions, batches of 64).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DdpgConfig {
    pub hidden: Vec<usize>,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub discount: f64,
    pub polyak: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub noise_variance: f64,
    pub final_layer_scale: f64,
    pub seed: u64,
}

impl Default for DdpgConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            actor_learning_rate: 1e-4,
            critic_learning_rate: 1e-3,
            discount: 0.99,
            polyak: 0.999,
            buffer_capacity: 1_000_000,
            batch_size: 64,
            noise_variance: 0.01,
            final_layer_scale: 3e-3,
            seed: 0,
        }
    }
}

/// Losses of one learning step, for logging.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UpdateStats {
    pub critic_loss: f64,
    pub actor_objective: f64,
}

pub struct DdpgAgent {
    config: DdpgConfig,
    state_dim: usize,
    action_dim: usize,
    actor: Mlp,
    critic: Mlp,
    target_actor: Mlp,
    target_critic: Mlp,
    actor_opt: Adam,
    critic_opt: Adam,
    buffer: ReplayBuffer,
    rng: ChaCha8Rng,
    noise_variance: f64,
}

impl DdpgAgent {
    pub fn new(state_dim: usize, action_dim: usize, config: DdpgConfig) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
        let actor = Mlp::new(
            MlpSpec::new(state_dim, &config.hidden, action_dim, OutputActivation::Sigmoid),
            config.final_layer_scale,
            &mut rng,
        );
        let critic = Mlp::new(
            MlpSpec::new(state_dim + action_dim, &config.hidden, 1, OutputActivation::Identity),
            config.final_layer_scale,
            &mut rng,
        );
        Self::from_networks(actor, critic, config, rng)
    }

    /// Wraps explicit networks; targets start as exact copies.
    pub fn with_networks(actor: Mlp, critic: Mlp, config: DdpgConfig) -> Self {
        let rng = ChaCha8Rng::seed_from_u64(config.seed);
        Self::from_networks(actor, critic, config, rng)
    }

    fn from_networks(actor: Mlp, critic: Mlp, config: DdpgConfig, rng: ChaCha8Rng) -> Self {
        let state_dim = actor.spec().input;
        let action_dim = actor.spec().output;
        assert_eq!(critic.spec().input, state_dim + action_dim, "critic takes state and action");
        assert_eq!(critic.spec().output, 1, "critic is scalar");
        Self {
            state_dim,
            action_dim,
            actor_opt: Adam::new(actor.num_params(), config.actor_learning_rate),
            critic_opt: Adam::new(critic.num_params(), config.critic_learning_rate),
            target_actor: actor.clone(),
            target_critic: critic.clone(),
            actor,
            critic,
            buffer: ReplayBuffer::new(config.buffer_capacity),
            noise_variance: config.noise_variance,
            rng,
            config,
        }
    }

    pub fn config(&self) -> &DdpgConfig {
        &self.config
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_dim(&self) -> usize {
        self.action_dim
    }

    pub fn actor(&self) -> &Mlp {
        &self.actor
    }

    pub fn critic(&self) -> &Mlp {
        &self.critic
    }

    pub fn target_actor(&self) -> &Mlp {
        &self.target_actor
    }

    pub fn target_critic(&self) -> &Mlp {
        &self.target_critic
    }

    pub fn actor_mut(&mut self) -> &mut Mlp {
        &mut self.actor
    }

    pub fn critic_mut(&mut self) -> &mut Mlp {
        &mut self.critic
    }

    pub fn buffer(&self) -> &ReplayBuffer {
        &self.buffer
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    pub fn set_noise_variance(&mut self, variance: f64) {
        self.noise_variance = variance.max(0.0);
    }

    /// Deterministic action from the actor (running batch-norm statistics);
    /// with `explore`, Gaussian noise of the current variance is added and the
    /// result clipped to `[0, 1]`.
    pub fn act(&mut self, state: &[f64], explore: bool) -> Vec<f64> {
        let mut action = self.actor.predict(state);
        if explore && self.noise_variance > 0.0 {
            let noise = Normal::new(0.0, self.noise_variance.sqrt()).expect("finite variance");
            for a in &mut action {
                *a = (*a + noise.sample(&mut self.rng)).clamp(0.0, 1.0);
            }
        }
        action
    }

    /// Immutable copy of the actor for evaluation.
    pub fn policy_snapshot(&self) -> Mlp {
        self.actor.clone()
    }

    pub fn remember(&mut self, transition: Transition) {
        self.buffer.push(transition);
    }

    /// `r + discount * (1 - d) * Q'(s', mu'(s'))` with both target networks
    /// in inference mode.
    pub fn critic_target(&self, batch: &Batch) -> Array1<f64> {
        let next_actions = self
            .target_actor
            .forward(batch.next_states.view(), NormMode::Running)
            .output()
            .clone();
        let input = join(batch.next_states.view(), next_actions.view());
        let q_next = self.target_critic.forward(input.view(), NormMode::Running);
        let q_next = q_next.output().column(0);
        let mut y = batch.rewards.clone();
        for i in 0..y.len() {
            y[i] += self.config.discount * (1.0 - batch.dones[i]) * q_next[i];
        }
        y
    }

    /// Gradient of the mean squared TD error with respect to the critic
    /// parameters, plus the loss. Training-mode batch norm.
    pub fn critic_loss_gradient(&self, batch: &Batch, targets: &Array1<f64>) -> (f64, Vec<f64>) {
        let (loss, grads, _) = critic_loss_parts(&self.critic, batch, targets);
        (loss, grads)
    }

    /// One descent step on the critic; returns the loss before the step.
    pub fn critic_update(&mut self, batch: &Batch) -> f64 {
        let targets = self.critic_target(batch);
        let (loss, grads, cache) = critic_loss_parts(&self.critic, batch, &targets);
        self.critic.update_running_stats(&cache);
        self.critic_opt.step(self.critic.params_mut(), &grads);
        loss
    }

    /// Gradient of `-mean Q(s, mu(s))` with respect to the actor parameters,
    /// plus the objective `mean Q`. The critic is held fixed and evaluated
    /// with its running statistics: batch statistics would subtract the batch
    /// mean of the actions and hide any common shift from the actor.
    pub fn actor_objective_gradient(&self, states: ArrayView2<'_, f64>) -> (f64, Vec<f64>) {
        let (objective, grads, _) = actor_objective_parts(&self.actor, &self.critic, states);
        (objective, grads)
    }

    /// One ascent step on the actor; returns the objective before the step.
    pub fn actor_update(&mut self, batch: &Batch) -> f64 {
        let (objective, grads, cache) = actor_objective_parts(&self.actor, &self.critic, batch.states.view());
        self.actor.update_running_stats(&cache);
        self.actor_opt.step(self.actor.params_mut(), &grads);
        objective
    }

    pub fn polyak_update(&mut self) {
        let rho = self.config.polyak;
        self.target_actor.blend_from(&self.actor, rho);
        self.target_critic.blend_from(&self.critic, rho);
    }

    /// Samples a batch and runs critic, actor and target updates. Does nothing
    /// until the buffer holds one full batch.
    pub fn learn(&mut self) -> Result<Option<UpdateStats>, DdpgError> {
        let Some(batch) = self.buffer.sample(self.config.batch_size, &mut self.rng) else {
            return Ok(None);
        };
        let critic_loss = self.critic_update(&batch);
        let actor_objective = self.actor_update(&batch);
        self.polyak_update();
        if !(self.actor.is_finite() && self.critic.is_finite()) {
            return Err(DdpgError::NonFinite {
                what: "network parameters",
            });
        }
        Ok(Some(UpdateStats {
            critic_loss,
            actor_objective,
        }))
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            version: Checkpoint::VERSION,
            config: self.config.clone(),
            noise_variance: self.noise_variance,
            actor: self.actor.clone(),
            critic: self.critic.clone(),
            target_actor: self.target_actor.clone(),
            target_critic: self.target_critic.clone(),
            actor_opt: self.actor_opt.clone(),
            critic_opt: self.critic_opt.clone(),
        }
    }

    /// Restores networks and optimizer state. The replay buffer starts empty.
    pub fn from_checkpoint(cp: Checkpoint) -> Result<Self, DdpgError> {
        if cp.version != Checkpoint::VERSION {
            return Err(DdpgError::CheckpointVersion {
                found: cp.version,
                expected: Checkpoint::VERSION,
            });
        }
        let mut agent = Self::with_networks(cp.actor, cp.critic, cp.config);
        agent.target_actor = cp.target_actor;
        agent.target_critic = cp.target_critic;
        agent.actor_opt = cp.actor_opt;
        agent.critic_opt = cp.critic_opt;
        agent.noise_variance = cp.noise_variance;
        Ok(agent)
    }
}

/// Versioned dump of everything needed to resume or evaluate an agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config: DdpgConfig,
    pub noise_variance: f64,
    pub actor: Mlp,
    pub critic: Mlp,
    pub target_actor: Mlp,
    pub target_critic: Mlp,
    pub actor_opt: Adam,
    pub critic_opt: Adam,
}

impl Checkpoint {
    pub const VERSION: u32 = 1;

    pub fn to_json(&self) -> Result<String, DdpgError> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self, DdpgError> {
        Ok(serde_json::from_str(text)?)
    }
}

pub(crate) fn join(a: ArrayView2<'_, f64>, b: ArrayView2<'_, f64>) -> Array2<f64> {
    concatenate(Axis(1), &[a, b]).expect("equal row counts")
}

fn critic_loss_parts(
    critic: &Mlp,
    batch: &Batch,
    targets: &Array1<f64>,
) -> (f64, Vec<f64>, crate::mlp::ForwardCache) {
    let input = join(batch.states.view(), batch.actions.view());
    let cache = critic.forward(input.view(), NormMode::Batch);
    let n = batch.len() as f64;
    let q = cache.output().column(0);
    let diff = &q - targets;
    let loss = diff.mapv(|d| d * d).sum() / n;
    let d_out = (diff * (2.0 / n)).insert_axis(Axis(1));
    let (grads, _) = critic.backward(&cache, d_out.view());
    (loss, grads, cache)
}

fn actor_objective_parts(
    actor: &Mlp,
    critic: &Mlp,
    states: ArrayView2<'_, f64>,
) -> (f64, Vec<f64>, crate::mlp::ForwardCache) {
    let n = states.nrows() as f64;
    let actor_cache = actor.forward(states, NormMode::Batch);
    let input = join(states, actor_cache.output().view());
    let critic_cache = critic.forward(input.view(), NormMode::Running);
    let objective = critic_cache.output().sum() / n;
    let d_q = Array2::from_elem((states.nrows(), 1), -1.0 / n);
    let (_, d_input) = critic.backward(&critic_cache, d_q.view());
    let d_action = d_input.slice(ndarray::s![.., states.ncols()..]).to_owned();
    let (grads, _) = actor.backward(&actor_cache, d_action.view());
    (objective, grads, actor_cache)
}
