//! Query Manager: runs queries on behalf of clients over its own
//! `DistributedGraph`, plus the fixed-depth BFS.

use std::collections::HashSet;
use std::net::TcpListener;
use std::sync::Arc;
use std::time::{Duration, Instant};

use shardgraph_core::{EdgeId, EdgeRecord, PropertyValue, VertexId};
use shardgraph_rpc::{
    Bytes, Hostfile, Incoming, Messenger, Poller, RpcError, TaskPool, WireReader, WireWriter,
};

use crate::dgraph::{DeleteReport, DgraphConfig, DistributedGraph};
use crate::error::{ClusterError, Result};
use crate::placement::ShardMap;
use crate::proto::*;

/// Frontier split by owning shard, with the set of vertices already seen.
#[derive(Clone, Debug, Default)]
pub struct PartitionedFrontier {
    buckets: Vec<Vec<VertexId>>,
    visited: HashSet<VertexId>,
}

impl PartitionedFrontier {
    pub fn new(shards: usize) -> Self {
        Self {
            buckets: vec![Vec::new(); shards],
            visited: HashSet::new(),
        }
    }

    /// Adds `v` to its shard's bucket unless it was seen before. Returns
    /// true if it was new.
    pub fn insert(&mut self, v: VertexId) -> bool {
        if !self.visited.insert(v) {
            return false;
        }
        self.buckets[v.shard().index()].push(v);
        true
    }

    pub fn len(&self) -> usize {
        self.buckets.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.buckets.iter().all(Vec::is_empty)
    }

    pub fn bucket(&self, shard: usize) -> &[VertexId] {
        &self.buckets[shard]
    }

    pub fn visited(&self) -> &HashSet<VertexId> {
        &self.visited
    }

    /// Empties the buckets for the next level, keeping the visited set.
    fn take_buckets(&mut self) -> Vec<Vec<VertexId>> {
        let n = self.buckets.len();
        std::mem::replace(&mut self.buckets, vec![Vec::new(); n])
    }
}

/// Phase timings of one BFS level.
///
/// `issue` is the time to send every bucket request, `server` the part of
/// the wait covered by the slowest shard's own execution time, `network` the
/// rest of the wait, and `process` the time spent merging replies into the
/// next frontier.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LevelTiming {
    pub frontier: usize,
    pub issue: Duration,
    pub server: Duration,
    pub network: Duration,
    pub process: Duration,
    pub wall: Duration,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct BfsResult {
    /// Every vertex reached, sorted.
    pub visited: Vec<VertexId>,
    pub edges_traversed: u64,
    pub levels: Vec<LevelTiming>,
    /// External ids of `visited`, same order, when requested.
    pub externals: Option<Vec<Vec<u8>>>,
}

fn put_dur(w: &mut WireWriter, d: Duration) {
    w.u64(d.as_nanos() as u64);
}

fn get_dur(r: &mut WireReader<'_>) -> std::result::Result<Duration, RpcError> {
    Ok(Duration::from_nanos(r.u64()?))
}

impl BfsResult {
    pub fn encode(&self) -> Bytes {
        let mut w = WireWriter::with_capacity(16 + 8 * self.visited.len());
        w.u32(self.visited.len() as u32);
        for v in &self.visited {
            w.u64(v.raw());
        }
        w.u64(self.edges_traversed).u32(self.levels.len() as u32);
        for l in &self.levels {
            w.u64(l.frontier as u64);
            for d in [l.issue, l.server, l.network, l.process, l.wall] {
                put_dur(&mut w, d);
            }
        }
        match &self.externals {
            Some(ext) => {
                w.bool(true);
                for e in ext {
                    w.bytes(e);
                }
            }
            None => {
                w.bool(false);
            }
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> std::result::Result<Self, RpcError> {
        let mut r = WireReader::new(buf);
        let n = r.u32()? as usize;
        let visited = (0..n).map(|_| get_vid(&mut r)).collect::<std::result::Result<Vec<_>, _>>()?;
        let edges_traversed = r.u64()?;
        let mut levels = Vec::new();
        for _ in 0..r.u32()? {
            levels.push(LevelTiming {
                frontier: r.u64()? as usize,
                issue: get_dur(&mut r)?,
                server: get_dur(&mut r)?,
                network: get_dur(&mut r)?,
                process: get_dur(&mut r)?,
                wall: get_dur(&mut r)?,
            });
        }
        let externals = if r.bool()? {
            Some((0..n).map(|_| r.bytes().map(<[u8]>::to_vec)).collect::<std::result::Result<_, _>>()?)
        } else {
            None
        };
        r.finish()?;
        Ok(Self {
            visited,
            edges_traversed,
            levels,
            externals,
        })
    }
}

/// Fixed-depth BFS over out-edges from `start`. Depth 0 returns only the
/// start vertex. No snapshot is held across levels.
pub fn bfs(dg: &DistributedGraph, start: &[u8], depth: u32, with_externals: bool) -> Result<BfsResult> {
    let start_v = dg
        .lookup_vertex(start)?
        .ok_or_else(|| ClusterError::StartNotFound(String::from_utf8_lossy(start).into_owned()))?;
    let mut frontier = PartitionedFrontier::new(dg.shard_count());
    frontier.insert(start_v);
    let mut result = BfsResult::default();
    let mut d = 0;
    while d < depth && !frontier.is_empty() {
        let level_start = Instant::now();
        let mut timing = LevelTiming {
            frontier: frontier.len(),
            ..Default::default()
        };
        let buckets = frontier.take_buckets();
        let mut poller = Poller::new();
        for (shard, bucket) in buckets.iter().enumerate() {
            if !bucket.is_empty() {
                poller.add(shard, dg.get_all_edges_async(shard, bucket));
            }
        }
        timing.issue = level_start.elapsed();
        let wait_start = Instant::now();
        let replies = poller.drain();
        let wait = wait_start.elapsed();
        let process_start = Instant::now();
        let mut max_exec = Duration::ZERO;
        for (shard, r) in replies {
            let b = r.map_err(|source| ClusterError::ShardUnreachable { shard, source })?;
            let lists = EdgeLists::decode(&b)?;
            max_exec = max_exec.max(Duration::from_nanos(lists.exec_nanos));
            for list in lists.lists {
                result.edges_traversed += list.len() as u64;
                for rec in list {
                    frontier.insert(rec.other);
                }
            }
        }
        timing.process = process_start.elapsed();
        timing.server = max_exec.min(wait);
        timing.network = wait - timing.server;
        timing.wall = level_start.elapsed();
        result.levels.push(timing);
        d += 1;
    }
    let mut visited: Vec<VertexId> = frontier.visited.into_iter().collect();
    visited.sort_unstable();
    if with_externals {
        let ext = dg.externals(&visited)?;
        result.externals = Some(ext.into_iter().map(Option::unwrap_or_default).collect());
    }
    result.visited = visited;
    Ok(result)
}

/// `QM_ADD_EDGE` modes.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AddEdgeMode {
    Sync,
    SyncConfirm,
    Async,
    AsyncConfirm,
}

impl AddEdgeMode {
    fn to_u8(self) -> u8 {
        match self {
            AddEdgeMode::Sync => 0,
            AddEdgeMode::SyncConfirm => 1,
            AddEdgeMode::Async => 2,
            AddEdgeMode::AsyncConfirm => 3,
        }
    }

    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            0 => AddEdgeMode::Sync,
            1 => AddEdgeMode::SyncConfirm,
            2 => AddEdgeMode::Async,
            3 => AddEdgeMode::AsyncConfirm,
            _ => return None,
        })
    }
}

/// A running Query Manager.
#[derive(Clone)]
pub struct QueryManager {
    dg: Arc<DistributedGraph>,
}

impl std::fmt::Debug for QueryManager {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("QueryManager").finish_non_exhaustive()
    }
}

impl QueryManager {
    /// Serves clients on `listener`. The QM is the last node of `hosts`.
    pub fn start(hosts: Hostfile, listener: TcpListener, workers: usize, config: DgraphConfig) -> Result<Self> {
        let node = hosts.len().checked_sub(1).ok_or_else(|| ClusterError::Invalid("empty hostfile".into()))?;
        let map = ShardMap::new(hosts.shard_count().max(1));
        let messenger = Messenger::new(Some(node), hosts, TaskPool::start(workers));
        let dg = Arc::new(DistributedGraph::new(messenger.clone(), map, config));
        let qm = Self { dg };
        qm.register(&messenger)?;
        messenger.serve(listener)?;
        Ok(qm)
    }

    pub fn graph(&self) -> &Arc<DistributedGraph> {
        &self.dg
    }

    /// Blocks until a `NODE_SHUTDOWN` request has stopped the messenger.
    pub fn wait(&self) {
        while !self.dg.messenger().is_shutdown() {
            std::thread::sleep(Duration::from_millis(50));
        }
    }

    pub fn shutdown(&self) {
        self.dg.messenger().shutdown();
        self.dg.messenger().pool().shutdown();
    }

    fn register(&self, m: &Messenger) -> Result<()> {
        let reg = |op: u16, f: fn(&DistributedGraph, &[u8]) -> Result<WireWriter>| {
            let dg = Arc::downgrade(&self.dg);
            m.register_handler(op, move |inc: Incoming| {
                let Some(dg) = dg.upgrade() else { return };
                match f(&dg, &inc.payload) {
                    Ok(w) => inc.responder.reply(w.finish()),
                    Err(e) => inc.responder.fail(e),
                }
            })
        };
        reg(QM_ADD_VERTEX, q_add_vertex)?;
        reg(QM_ADD_EDGE, q_add_edge)?;
        reg(QM_GET_VERTEX, q_get_vertex)?;
        reg(QM_OUT_EDGES, q_out_edges)?;
        reg(QM_BFS, q_bfs)?;
        reg(QM_DELETE_VERTEX, q_delete_vertex)?;
        reg(QM_DELETE_EDGE, q_delete_edge)?;
        reg(QM_SET_VERTEX_PROP, q_set_vertex_prop)?;
        reg(QM_SET_EDGE_PROP, q_set_edge_prop)?;
        reg(QM_GET_EDGE_PROP, q_get_edge_prop)?;
        // Shutdown is accepted here too so one loop can stop every node.
        let m2 = m.clone();
        m.register_handler(NODE_SHUTDOWN, move |inc: Incoming| {
            inc.responder.reply(Bytes::new());
            let m = m2.clone();
            std::thread::spawn(move || {
                std::thread::sleep(Duration::from_millis(50));
                m.shutdown();
            });
        })?;
        Ok(())
    }
}

fn q_add_vertex(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let mut r = WireReader::new(p);
    let ext = r.bytes()?;
    let label = r.str()?;
    let props = get_props(&mut r)?;
    let v = dg.add_vertex(ext, label, &props)?;
    let mut w = WireWriter::new();
    w.u64(v.raw());
    Ok(w)
}

fn q_add_edge(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let mut r = WireReader::new(p);
    let src = r.bytes()?;
    let label = r.str()?;
    let tgt = r.bytes()?;
    let props = get_props(&mut r)?;
    let mode = AddEdgeMode::from_u8(r.u8()?).ok_or_else(|| ClusterError::Invalid("bad add_edge mode".into()))?;
    let eid = match mode {
        AddEdgeMode::Sync | AddEdgeMode::SyncConfirm => {
            Some(dg.add_edge_sync(src, label, tgt, &props, mode == AddEdgeMode::SyncConfirm)?)
        }
        AddEdgeMode::Async | AddEdgeMode::AsyncConfirm => {
            dg.add_edge_async(src, label, tgt, &props, mode == AddEdgeMode::AsyncConfirm)?.wait()?
        }
    };
    let mut w = WireWriter::new();
    w.u64(eid.map_or(0, EdgeId::raw));
    Ok(w)
}

fn q_get_vertex(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let ext = WireReader::new(p).bytes()?;
    let mut w = WireWriter::new();
    match dg.get_vertex(ext)? {
        Some((v, props)) => {
            w.bool(true).u64(v.raw());
            put_props(&mut w, &props);
        }
        None => {
            w.bool(false).u64(0).u32(0);
        }
    }
    Ok(w)
}

fn q_out_edges(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let ext = WireReader::new(p).bytes()?;
    let mut w = WireWriter::new();
    put_records(&mut w, &dg.out_edges(ext, None)?);
    Ok(w)
}

fn q_bfs(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let mut r = WireReader::new(p);
    let start = r.bytes()?;
    let depth = r.u32()?;
    let ext = r.bool()?;
    let res = bfs(dg, start, depth, ext)?;
    let mut w = WireWriter::new();
    w.raw(&res.encode());
    Ok(w)
}

fn q_delete_vertex(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let ext = WireReader::new(p).bytes()?;
    let rep = dg.delete_vertex(ext)?;
    let mut w = WireWriter::new();
    w.u32(rep.incoming_purged as u32).u32(rep.outgoing_purged as u32);
    Ok(w)
}

fn q_delete_edge(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let mut r = WireReader::new(p);
    let eid = get_eid(&mut r)?;
    let src = r.bytes()?;
    let tgt = r.bytes()?;
    let found = dg.delete_edge(eid, src, tgt)?;
    let mut w = WireWriter::new();
    w.bool(found);
    Ok(w)
}

fn q_set_vertex_prop(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let mut r = WireReader::new(p);
    let ext = r.bytes()?;
    let name = r.str()?;
    let value = get_value_bytes(&mut r)?;
    dg.set_vertex_property(ext, name, &value)?;
    Ok(WireWriter::new())
}

fn q_set_edge_prop(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let mut r = WireReader::new(p);
    let eid = get_eid(&mut r)?;
    let name = r.str()?;
    let value = get_value_bytes(&mut r)?;
    dg.set_edge_property(eid, name, &value)?;
    Ok(WireWriter::new())
}

fn q_get_edge_prop(dg: &DistributedGraph, p: &[u8]) -> Result<WireWriter> {
    let mut r = WireReader::new(p);
    let eid = get_eid(&mut r)?;
    let name = r.str()?;
    let mut w = WireWriter::new();
    put_opt_value(&mut w, dg.get_edge_property(eid, name)?.as_ref());
    Ok(w)
}

/// Client connection to a Query Manager.
#[derive(Clone, Debug)]
pub struct ClientHandle {
    messenger: Messenger,
    qm: usize,
}

impl ClientHandle {
    /// Connects lazily to the last node of `hosts`.
    pub fn connect(hosts: Hostfile) -> Self {
        let qm = hosts.len().saturating_sub(1);
        Self {
            messenger: Messenger::new(None, hosts, TaskPool::start(1)),
            qm,
        }
    }

    pub fn messenger(&self) -> &Messenger {
        &self.messenger
    }

    fn call(&self, op: u16, w: WireWriter) -> Result<Bytes> {
        Ok(self.messenger.call(self.qm, op, w.finish())?)
    }

    pub fn add_vertex(&self, ext: &[u8], label: &str, props: &[(String, PropertyValue)]) -> Result<VertexId> {
        let mut w = WireWriter::new();
        w.bytes(ext).str(label);
        put_props(&mut w, props);
        let rep = self.call(QM_ADD_VERTEX, w)?;
        Ok(get_vid(&mut WireReader::new(&rep))?)
    }

    /// Returns the edge id, or `None` for an unconfirmed async insert.
    pub fn add_edge(
        &self,
        src: &[u8],
        label: &str,
        tgt: &[u8],
        props: &[(String, PropertyValue)],
        mode: AddEdgeMode,
    ) -> Result<Option<EdgeId>> {
        let mut w = WireWriter::new();
        w.bytes(src).str(label).bytes(tgt);
        put_props(&mut w, props);
        w.u8(mode.to_u8());
        let rep = self.call(QM_ADD_EDGE, w)?;
        let raw = WireReader::new(&rep).u64()?;
        Ok((raw != 0).then(|| EdgeId::from_raw(raw)))
    }

    pub fn get_vertex(&self, ext: &[u8]) -> Result<Option<(VertexId, Props)>> {
        let mut w = WireWriter::new();
        w.bytes(ext);
        let rep = self.call(QM_GET_VERTEX, w)?;
        let mut r = WireReader::new(&rep);
        let found = r.bool()?;
        let v = get_vid(&mut r)?;
        let props = get_props(&mut r)?;
        Ok(found.then_some((v, props)))
    }

    pub fn out_edges(&self, ext: &[u8]) -> Result<Vec<EdgeRecord>> {
        let mut w = WireWriter::new();
        w.bytes(ext);
        let rep = self.call(QM_OUT_EDGES, w)?;
        Ok(get_records(&mut WireReader::new(&rep))?)
    }

    pub fn bfs(&self, start: &[u8], depth: u32, with_externals: bool) -> Result<BfsResult> {
        let mut w = WireWriter::new();
        w.bytes(start).u32(depth).bool(with_externals);
        Ok(BfsResult::decode(&self.call(QM_BFS, w)?)?)
    }

    pub fn delete_vertex(&self, ext: &[u8]) -> Result<DeleteReport> {
        let mut w = WireWriter::new();
        w.bytes(ext);
        let rep = self.call(QM_DELETE_VERTEX, w)?;
        let mut r = WireReader::new(&rep);
        Ok(DeleteReport {
            incoming_purged: r.u32()? as usize,
            outgoing_purged: r.u32()? as usize,
        })
    }

    pub fn delete_edge(&self, eid: EdgeId, src: &[u8], tgt: &[u8]) -> Result<bool> {
        let mut w = WireWriter::new();
        w.u64(eid.raw()).bytes(src).bytes(tgt);
        let rep = self.call(QM_DELETE_EDGE, w)?;
        Ok(WireReader::new(&rep).bool()?)
    }

    pub fn set_vertex_property(&self, ext: &[u8], name: &str, value: &PropertyValue) -> Result<()> {
        let mut w = WireWriter::new();
        w.bytes(ext).str(name);
        put_value(&mut w, value);
        self.call(QM_SET_VERTEX_PROP, w)?;
        Ok(())
    }

    pub fn set_edge_property(&self, eid: EdgeId, name: &str, value: &PropertyValue) -> Result<()> {
        let mut w = WireWriter::new();
        w.u64(eid.raw()).str(name);
        put_value(&mut w, value);
        self.call(QM_SET_EDGE_PROP, w)?;
        Ok(())
    }

    pub fn get_edge_property(&self, eid: EdgeId, name: &str) -> Result<Option<PropertyValue>> {
        let mut w = WireWriter::new();
        w.u64(eid.raw()).str(name);
        let rep = self.call(QM_GET_EDGE_PROP, w)?;
        Ok(get_opt_value(&mut WireReader::new(&rep))?)
    }

    pub fn close(&self) {
        self.messenger.shutdown();
        self.messenger.pool().shutdown();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use shardgraph_core::{LabelId, ShardId};

    fn vid(shard: u32, local: u64) -> VertexId {
        VertexId::new(LabelId::NONE, ShardId::new(shard).unwrap(), local)
    }

    #[test]
    fn frontier_buckets_by_shard_and_dedups() {
        let mut f = PartitionedFrontier::new(3);
        assert!(f.insert(vid(2, 1)));
        assert!(f.insert(vid(0, 1)));
        assert!(!f.insert(vid(2, 1)));
        assert_eq!(f.bucket(2), &[vid(2, 1)]);
        assert_eq!(f.len(), 2);
        let b = f.take_buckets();
        assert_eq!(b.iter().map(Vec::len).sum::<usize>(), 2);
        assert!(f.is_empty());
        assert!(!f.insert(vid(0, 1)), "visited survives a level change");
    }

    #[test]
    fn bfs_result_roundtrip() {
        let r = BfsResult {
            visited: vec![vid(0, 1), vid(1, 7)],
            edges_traversed: 9,
            levels: vec![LevelTiming {
                frontier: 1,
                issue: Duration::from_micros(3),
                server: Duration::from_micros(4),
                network: Duration::from_micros(5),
                process: Duration::from_micros(6),
                wall: Duration::from_micros(20),
            }],
            externals: Some(vec![b"a".to_vec(), b"b".to_vec()]),
        };
        assert_eq!(BfsResult::decode(&r.encode()).unwrap(), r);
        let plain = BfsResult {
            externals: None,
            ..r
        };
        assert_eq!(BfsResult::decode(&plain.encode()).unwrap(), plain);
    }

    #[test]
    fn add_edge_mode_codes() {
        for m in [AddEdgeMode::Sync, AddEdgeMode::SyncConfirm, AddEdgeMode::Async, AddEdgeMode::AsyncConfirm] {
            assert_eq!(AddEdgeMode::from_u8(m.to_u8()), Some(m));
        }
        assert_eq!(AddEdgeMode::from_u8(9), None);
    }
}
