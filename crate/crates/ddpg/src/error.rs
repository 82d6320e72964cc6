use thiserror::Error;

#[derive(Debug, Error)]
pub enum DdpgError {
    #[error("non-finite values in {what}")]
    NonFinite { what: &'static str },
    #[error("non-finite values in {what} during episode {episode}")]
    Diverged { what: &'static str, episode: usize },
    #[error("checkpoint version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },
    #[error("malformed checkpoint: {0}")]
    Json(#[from] serde_json::Error),
    #[error("environment failed in episode {episode}: {source}")]
    Environment {
        episode: usize,
        #[source]
        source: Box<dyn std::error::Error + Send + Sync>,
    },
    #[error("agent count mismatch: environment has {env}, got {given}")]
    AgentCount { env: usize, given: usize },
}
