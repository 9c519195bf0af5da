use thiserror::Error;

use crate::ids::VertexId;

pub type Result<T, E = GraphError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum GraphError {
    #[error(transparent)]
    Kv(#[from] shardgraph_kv::Error),

    #[error("graph {0:?} already exists")]
    AlreadyExists(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("vertex {0:?} not found on this shard")]
    VertexNotFound(VertexId),

    #[error("label space exhausted (255 labels)")]
    LabelSpaceExhausted,

    #[error("invalid label {0:?}")]
    InvalidLabel(String),

    #[error("external id must not be empty")]
    InvalidExternalId,

    #[error("invalid property name {0:?}")]
    InvalidPropertyName(String),

    #[error("{0} id space exhausted")]
    IdSpaceExhausted(&'static str),

    #[error("corrupt graph data: {0}")]
    Corrupt(String),
}
