//! Episode loops for single- and multi-agent training and evaluation.

use serde::{Deserialize, Serialize};

use crate::agent::DdpgAgent;
use crate::error::DdpgError;
use crate::mlp::Mlp;
use crate::replay::Transition;

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: Vec<f64>,
    pub reward: f64,
    pub done: bool,
}

/// An episodic environment driven one action at a time.
pub trait Environment {
    type Error: std::error::Error + Send + Sync + 'static;

    fn reset(&mut self) -> Result<Vec<f64>, Self::Error>;

    fn step(&mut self, action: &[f64]) -> Result<StepResult, Self::Error>;

    /// Episode-level figure of merit reported in training logs.
    fn episode_metric(&self) -> f64 {
        f64::NAN
    }
}

/// Several independent learners sharing one environment. The environment
/// decides whose turn it is; `None` from [`MultiAgentEnvironment::next_agent`]
/// ends the episode.
pub trait MultiAgentEnvironment {
    type Error: std::error::Error + Send + Sync + 'static;

    fn num_agents(&self) -> usize;

    fn reset(&mut self) -> Result<(), Self::Error>;

    fn next_agent(&mut self) -> Option<usize>;

    fn observe(&self, agent: usize) -> Vec<f64>;

    fn step(&mut self, agent: usize, action: &[f64]) -> Result<StepResult, Self::Error>;

    fn episode_metric(&self) -> f64 {
        f64::NAN
    }
}

/// Exploration variance over the course of training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NoiseSchedule {
    Constant,
    /// Constant, then linear decay to zero over the final `episodes`.
    AnnealTail { episodes: usize },
}

impl NoiseSchedule {
    pub fn variance(&self, base: f64, episode: usize, total: usize) -> f64 {
        match *self {
            NoiseSchedule::Constant => base,
            NoiseSchedule::AnnealTail { episodes } => {
                let start = total.saturating_sub(episodes);
                if episode < start || episodes == 0 {
                    base
                } else if episodes == 1 {
                    0.0
                } else {
                    let remaining = total.saturating_sub(episode + 1) as f64;
                    base * remaining / (episodes - 1) as f64
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeRecord {
    pub episode: usize,
    pub total_return: f64,
    pub steps: usize,
    pub metric: f64,
    pub noise_variance: f64,
}

fn env_err<E: std::error::Error + Send + Sync + 'static>(episode: usize) -> impl FnOnce(E) -> DdpgError {
    move |e| DdpgError::Environment {
        episode,
        source: Box::new(e),
    }
}

fn check_finite(agent: &DdpgAgent, episode: usize) -> Result<(), DdpgError> {
    if agent.actor().is_finite() && agent.critic().is_finite() {
        Ok(())
    } else {
        Err(DdpgError::Diverged {
            what: "network parameters",
            episode,
        })
    }
}

/// Trains one agent for `episodes` episodes. `make_env` builds the
/// environment of each episode (typically from a per-episode seed). Every
/// environment step is followed by one learning step.
pub fn train<E, F>(
    agent: &mut DdpgAgent,
    mut make_env: F,
    episodes: usize,
    schedule: NoiseSchedule,
) -> Result<Vec<EpisodeRecord>, DdpgError>
where
    E: Environment,
    F: FnMut(usize) -> Result<E, E::Error>,
{
    let base = agent.config().noise_variance;
    let mut log = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let variance = schedule.variance(base, episode, episodes);
        agent.set_noise_variance(variance);
        let mut env = make_env(episode).map_err(env_err(episode))?;
        let mut state = env.reset().map_err(env_err(episode))?;
        let mut total_return = 0.0;
        let mut steps = 0;
        loop {
            let action = agent.act(&state, true);
            let step = env.step(&action).map_err(env_err(episode))?;
            total_return += step.reward;
            steps += 1;
            agent.remember(Transition {
                state: std::mem::take(&mut state),
                action,
                reward: step.reward,
                next_state: step.next_state.clone(),
                done: step.done,
            });
            agent.learn().map_err(|_| DdpgError::Diverged {
                what: "network parameters",
                episode,
            })?;
            if step.done {
                break;
            }
            state = step.next_state;
        }
        check_finite(agent, episode)?;
        log.push(EpisodeRecord {
            episode,
            total_return,
            steps,
            metric: env.episode_metric(),
            noise_variance: variance,
        });
    }
    agent.set_noise_variance(base);
    Ok(log)
}

/// Independent learners: agent `b` only ever sees its own observations and
/// learns from its own replay buffer.
pub fn train_multi<E, F>(
    agents: &mut [DdpgAgent],
    mut make_env: F,
    episodes: usize,
    schedule: NoiseSchedule,
) -> Result<Vec<EpisodeRecord>, DdpgError>
where
    E: MultiAgentEnvironment,
    F: FnMut(usize) -> Result<E, E::Error>,
{
    let bases: Vec<f64> = agents.iter().map(|a| a.config().noise_variance).collect();
    let mut log = Vec::with_capacity(episodes);
    for episode in 0..episodes {
        let mut variance = 0.0;
        for (agent, &base) in agents.iter_mut().zip(&bases) {
            variance = schedule.variance(base, episode, episodes);
            agent.set_noise_variance(variance);
        }
        let mut env = make_env(episode).map_err(env_err(episode))?;
        if env.num_agents() != agents.len() {
            return Err(DdpgError::AgentCount {
                env: env.num_agents(),
                given: agents.len(),
            });
        }
        env.reset().map_err(env_err(episode))?;
        let mut total_return = 0.0;
        let mut steps = 0;
        while let Some(b) = env.next_agent() {
            let state = env.observe(b);
            let agent = &mut agents[b];
            let action = agent.act(&state, true);
            let step = env.step(b, &action).map_err(env_err(episode))?;
            total_return += step.reward;
            steps += 1;
            agent.remember(Transition {
                state,
                action,
                reward: step.reward,
                next_state: step.next_state,
                done: step.done,
            });
            agent.learn().map_err(|_| DdpgError::Diverged {
                what: "network parameters",
                episode,
            })?;
        }
        for agent in agents.iter() {
            check_finite(agent, episode)?;
        }
        log.push(EpisodeRecord {
            episode,
            total_return,
            steps,
            metric: env.episode_metric(),
            noise_variance: variance,
        });
    }
    for (agent, base) in agents.iter_mut().zip(bases) {
        agent.set_noise_variance(base);
    }
    Ok(log)
}

/// Runs one episode with the deterministic policy `actor`: no exploration and
/// no parameter or batch-norm updates.
pub fn evaluate<E: Environment>(actor: &Mlp, env: &mut E) -> Result<EpisodeRecord, E::Error> {
    let mut state = env.reset()?;
    let mut total_return = 0.0;
    let mut steps = 0;
    loop {
        let action = actor.predict(&state);
        let step = env.step(&action)?;
        total_return += step.reward;
        steps += 1;
        if step.done {
            break;
        }
        state = step.next_state;
    }
    Ok(EpisodeRecord {
        episode: 0,
        total_return,
        steps,
        metric: env.episode_metric(),
        noise_variance: 0.0,
    })
}

pub fn evaluate_multi<E: MultiAgentEnvironment>(actors: &[Mlp], env: &mut E) -> Result<EpisodeRecord, E::Error> {
    assert_eq!(actors.len(), env.num_agents(), "one actor per agent");
    env.reset()?;
    let mut total_return = 0.0;
    let mut steps = 0;
    while let Some(b) = env.next_agent() {
        let action = actors[b].predict(&env.observe(b));
        total_return += env.step(b, &action)?.reward;
        steps += 1;
    }
    Ok(EpisodeRecord {
        episode: 0,
        total_return,
        steps,
        metric: env.episode_metric(),
        noise_variance: 0.0,
    })
}
