use std::path::PathBuf;

use serde::Serialize;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// A stage that still has work but cannot fire, with the channels holding
/// it back.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockedStage {
    pub stage: String,
    /// Inputs with no readable tile.
    pub starved_on: Vec<String>,
    /// Outputs with no free slot.
    pub full: Vec<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid graph: {0}")]
    InvalidGraph(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("deadlock at cycle {cycle}: {} stage(s) blocked ({})", blocked.len(), blocked.iter().map(|b| b.stage.as_str()).collect::<Vec<_>>().join(", "))]
    Deadlock { cycle: u64, blocked: Vec<BlockedStage> },

    #[error("horizon of {horizon} cycles exceeded with {images_done} image(s) complete")]
    HorizonExceeded { horizon: u64, images_done: usize },

    #[error("channel `{channel}` deadlocks even at depth {hi}")]
    NoDeadlockFreeDepth { channel: String, hi: u64 },

    #[error(transparent)]
    Resource(#[from] hgpipe_resource::Error),

    #[error("graph parse error: {0}")]
    Toml(#[from] toml::de::Error),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn graph(msg: impl Into<String>) -> Self {
        Error::InvalidGraph(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
