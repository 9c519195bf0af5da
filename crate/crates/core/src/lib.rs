//! Graph storage for one shard.
//!
//! Vertices are addressed by a caller-chosen external id (any non-empty byte
//! string) and by a packed internal [`VertexId`]. Each edge is stored twice:
//! an outgoing half under its source and an incoming half under its target,
//! both carrying the same [`EdgeId`]. In a partitioned deployment the two
//! halves may live on different shards; this crate only ever touches the
//! halves owned by its own shard.

mod error;
mod ids;
mod property;
mod store;

pub use error::{GraphError, Result};
pub use ids::{
    EdgeId, EdgeIdRange, EdgeRecord, LabelId, ShardId, VertexId, EDGE_LOCAL_BITS, LABEL_BITS,
    MAX_EDGE_LOCAL, MAX_SHARDS, MAX_VERTEX_LOCAL, SHARD_BITS, VERTEX_LOCAL_BITS,
};
pub use property::PropertyValue;
pub use shardgraph_kv as kv;
pub use store::{
    BulkEdge, DeletedVertex, Direction, GraphConfig, GraphStore, GraphTxn, NewVertex,
    PropertyLayout,
};
