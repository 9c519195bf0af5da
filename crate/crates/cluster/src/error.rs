use shardgraph_rpc::RpcError;
use thiserror::Error;

pub type Result<T, E = ClusterError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ClusterError {
    #[error(transparent)]
    Rpc(#[from] RpcError),

    #[error("start vertex {0:?} not found")]
    StartNotFound(String),

    #[error("vertex {0:?} not found")]
    VertexNotFound(String),

    #[error("shard {shard} unreachable: {source}")]
    ShardUnreachable { shard: usize, source: RpcError },

    /// Synchronous add_edge failed at `step` (1-based, in protocol order);
    /// steps before it committed.
    #[error("add_edge step {step} failed ({completed} steps committed): {source}")]
    Step {
        step: u8,
        completed: u8,
        source: RpcError,
    },

    /// Asynchronous add_edge failed at message `hop` (1-based).
    #[error("add_edge hop {hop} failed: {message}")]
    Hop { hop: u8, message: String },

    #[error("{0}")]
    Invalid(String),
}
