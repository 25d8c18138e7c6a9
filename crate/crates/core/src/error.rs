use thiserror::Error;

use crate::cluster::AgentId;

#[derive(Debug, Error)]
pub enum BeliefError {
    #[error("grid shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("compression factor must be >= 1, got {0}")]
    InvalidCompression(f64),
    #[error("malformed grid snapshot: {0}")]
    Malformed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum ProtocolError {
    #[error("agent {0} is not registered")]
    UnknownAgent(AgentId),
    #[error("agent {0} does not own a level-{1} token")]
    NotAHead(AgentId, u32),
    #[error("token of agent {head} lists dangling member {member}")]
    DanglingMember { head: AgentId, member: AgentId },
}

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("invalid configuration: {0}")]
    Invalid(String),
    #[error("could not parse configuration: {0}")]
    Parse(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Belief(#[from] BeliefError),
    #[error(transparent)]
    Protocol(#[from] ProtocolError),
    #[error("clustering invariant violated at t={time}: {details}")]
    InvariantViolation { time: f64, details: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
