//! Workload for crash-injection runs: a fixed sequence of write
//! transactions against one shard store, reporting each commit on stdout
//! so a supervisor can kill the process at arbitrary points.
//!
//! Transaction `i` (from 0) creates vertex `d{i}`, adds an edge
//! `d{i} -> d{target(i)}` when `i > 0`, and sets property `txn = i + 1` on
//! the `meta` vertex. A recovered store therefore records how many
//! transactions it holds.

use std::io::Write;
use std::path::Path;

use anyhow::Result;
use shardgraph_cluster::core::kv::{Env, EnvConfig};
use shardgraph_cluster::core::{
    GraphConfig, GraphStore, LabelId, PropertyLayout, PropertyValue, ShardId,
};

pub const GRAPH: &str = "crash";
pub const META: &[u8] = b"meta";

pub fn vertex(i: u64) -> String {
    format!("d{i}")
}

/// Earlier vertex that transaction `i` points at.
pub fn target(i: u64) -> u64 {
    ((i * 2_654_435_761) >> 16) % i
}

/// Continues from whatever the store holds up to `txns` transactions,
/// printing `committed N` after each commit.
pub fn run_writer(dir: &Path, txns: u64, out: &mut impl Write) -> Result<()> {
    let env = Env::open(dir, EnvConfig::default())?;
    let store = GraphStore::open_or_create(
        &env,
        GRAPH,
        ShardId::new(0).expect("shard 0"),
        GraphConfig {
            property_layout: PropertyLayout::EntityKey,
        },
    )?;
    let start = {
        let t = store.read()?;
        match t.vertex_id(META)? {
            Some(m) => match t.get_vertex_property(m, "txn")? {
                Some(PropertyValue::Int(n)) => n as u64,
                _ => 0,
            },
            None => 0,
        }
    };
    for i in start..txns {
        let mut t = store.write()?;
        let meta = t.check_or_create_vertex(META, LabelId::NONE)?;
        let v = t.check_or_create_vertex(vertex(i).as_bytes(), LabelId::NONE)?;
        if i > 0 {
            let tv = t.check_or_create_vertex(vertex(target(i)).as_bytes(), LabelId::NONE)?;
            t.add_edge(v, tv, LabelId::NONE)?;
        }
        t.set_vertex_property(meta, "txn", &PropertyValue::Int(i as i64 + 1))?;
        t.commit()?;
        writeln!(out, "committed {}", i + 1)?;
        out.flush()?;
    }
    env.close();
    Ok(())
}
