use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExpError {
    #[error("config: {0}")]
    Config(String),
    #[error(transparent)]
    Core(#[from] sttl_core::Error),
    #[error(transparent)]
    Ddpg(#[from] sttl_ddpg::DdpgError),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = ExpError> = std::result::Result<T, E>;
