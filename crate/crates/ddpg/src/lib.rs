//! Deep deterministic policy gradient for continuous actions in `[0, 1]^n`.
//!
//! The crate is self-contained: networks, optimizer, replay and training
//! loops are written against plain `ndarray` so that every gradient can be
//! checked against finite differences.

pub mod adam;
pub mod agent;
pub mod error;
pub mod mlp;
pub mod replay;
pub mod train;

pub use adam::Adam;
pub use agent::{Checkpoint, DdpgAgent, DdpgConfig, UpdateStats};
pub use error::DdpgError;
pub use mlp::{Mlp, MlpSpec, NormMode, OutputActivation};
pub use replay::{Batch, ReplayBuffer, Transition};
pub use train::{
    evaluate, evaluate_multi, train, train_multi, EpisodeRecord, Environment, MultiAgentEnvironment,
    NoiseSchedule, StepResult,
};
