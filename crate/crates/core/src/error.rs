use thiserror::Error;

use crate::topology::NodeId;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("node {node} out of range (graph has {n} nodes)")]
    InvalidNode { node: NodeId, n: usize },

    #[error("unsupported combination: {0}")]
    Unsupported(String),

    #[error("protocol violation: {0}")]
    ProtocolViolation(String),

    #[error("routing failure: {0}")]
    RoutingFailure(String),

    #[error("timeout after {steps} steps")]
    Timeout { steps: u64 },

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidParameter(msg.into()))
}
