//! Library side of the `shardgraph` tool: CSV formats, loaders, reports,
//! synthetic data and process management shared by the binary and the
//! acceptance suite.

pub mod csvio;
pub mod durability;
pub mod gen;
pub mod load;
pub mod procs;
pub mod report;
