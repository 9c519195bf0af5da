//! Sharded property graph: shard servers, the distributed facade used by
//! clients, batched firehose ingest and the Query Manager.

pub mod canon;
mod dgraph;
mod error;
mod firehose;
pub mod local;
mod placement;
pub mod proto;
mod qm;
mod server;

pub use dgraph::{
    decode_edge_reply, DeleteReport, DgraphConfig, DistributedGraph, EdgeHandle, DEFAULT_VERTEX_CACHE,
};
pub use error::{ClusterError, Result};
pub use firehose::{Firehose, FirehoseConfig, FlushReport, PendingEdge, ShardFlush, DEFAULT_BATCH};
pub use local::{LocalCluster, LocalConfig};
pub use placement::{fnv1a64, PlacementFn, ShardMap};
pub use qm::{bfs, AddEdgeMode, BfsResult, ClientHandle, LevelTiming, PartitionedFrontier, QueryManager};
pub use server::{ShardConfig, ShardDump, ShardServer, ShardStats, DEFAULT_GRAPH};

pub use shardgraph_core as core;
pub use shardgraph_rpc as rpc;
