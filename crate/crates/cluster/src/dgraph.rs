//! Client-side facade over all shards.
//!
//! A `DistributedGraph` owns no data. It maps external ids to shards,
//! forwards single-shard operations, and drives the multi-shard protocols
//! (synchronous and asynchronous add_edge, delete_vertex, delete_edge).

use std::collections::HashMap;
use std::num::NonZeroUsize;
use std::time::{Duration, Instant};

use lru::LruCache;
use parking_lot::{Mutex, RwLock};
use shardgraph_core::{EdgeId, EdgeRecord, LabelId, PropertyValue, VertexId};
use shardgraph_rpc::{
    Bytes, CompletionHandle, Hostfile, MessageCounters, Messenger, Poller, RpcError, TaskPool,
    WireReader, WireWriter,
};

use crate::error::{ClusterError, Result};
use crate::placement::ShardMap;
use crate::proto::*;
use crate::server::{ShardDump, ShardStats};

pub const DEFAULT_VERTEX_CACHE: usize = 1_000_000;

#[derive(Clone, Debug)]
pub struct DgraphConfig {
    /// Capacity of the external → internal id cache; 0 disables it.
    pub vertex_cache: usize,
}

impl Default for DgraphConfig {
    fn default() -> Self {
        Self {
            vertex_cache: DEFAULT_VERTEX_CACHE,
        }
    }
}

/// Outcome of a distributed vertex delete.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DeleteReport {
    /// Purge messages sent for edges that pointed at the vertex.
    pub incoming_purged: usize,
    /// Purge messages sent for the vertex's own outgoing edges.
    pub outgoing_purged: usize,
}

/// Result of an asynchronous add_edge.
#[derive(Clone, Debug)]
pub struct EdgeHandle {
    handle: CompletionHandle,
    confirm: bool,
}

impl EdgeHandle {
    pub fn is_ready(&self) -> bool {
        self.handle.is_ready()
    }

    /// The underlying completion, for use with a [`Poller`].
    pub fn completion(&self) -> &CompletionHandle {
        &self.handle
    }

    /// Waits for completion. Without confirmation the handle is ready at
    /// once and carries no edge id.
    pub fn wait(&self) -> Result<Option<EdgeId>> {
        decode_edge_reply(self.handle.wait(), self.confirm)
    }
}

/// Interprets an async add_edge completion.
pub fn decode_edge_reply(r: std::result::Result<Bytes, RpcError>, confirm: bool) -> Result<Option<EdgeId>> {
    match r {
        Ok(b) if !confirm => {
            debug_assert!(b.is_empty());
            Ok(None)
        }
        Ok(b) => Ok(Some(get_eid(&mut WireReader::new(&b))?)),
        Err(RpcError::Remote(msg)) => Err(parse_hop_error(&msg)),
        Err(e) => Err(ClusterError::Hop {
            hop: 1,
            message: e.to_string(),
        }),
    }
}

fn parse_hop_error(msg: &str) -> ClusterError {
    if let Some(rest) = msg.strip_prefix("hop ") {
        if let Some((n, m)) = rest.split_once(": ") {
            if let Ok(hop) = n.parse() {
                return ClusterError::Hop {
                    hop,
                    message: m.to_string(),
                };
            }
        }
    }
    ClusterError::Hop {
        hop: 1,
        message: msg.to_string(),
    }
}

pub struct DistributedGraph {
    messenger: Messenger,
    map: ShardMap,
    cache: Option<Mutex<LruCache<Vec<u8>, VertexId>>>,
    labels: RwLock<HashMap<String, LabelId>>,
}

impl std::fmt::Debug for DistributedGraph {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("DistributedGraph")
            .field("shards", &self.map.shard_count())
            .finish()
    }
}

impl DistributedGraph {
    pub fn new(messenger: Messenger, map: ShardMap, config: DgraphConfig) -> Self {
        Self {
            messenger,
            map,
            cache: NonZeroUsize::new(config.vertex_cache).map(|n| Mutex::new(LruCache::new(n))),
            labels: RwLock::new(HashMap::new()),
        }
    }

    /// A pure client (no node id) talking to the shards in `hosts`.
    pub fn connect(hosts: Hostfile, config: DgraphConfig) -> Self {
        let map = ShardMap::new(hosts.shard_count().max(1));
        let messenger = Messenger::new(None, hosts, TaskPool::start(1));
        Self::new(messenger, map, config)
    }

    pub fn messenger(&self) -> &Messenger {
        &self.messenger
    }

    pub fn shard_map(&self) -> &ShardMap {
        &self.map
    }

    pub fn shard_count(&self) -> usize {
        self.map.shard_count()
    }

    pub fn shard_of(&self, ext: &[u8]) -> usize {
        self.map.shard_of(ext)
    }

    // ---- caches ----

    pub fn cached_vertex(&self, ext: &[u8]) -> Option<VertexId> {
        self.cache.as_ref()?.lock().get(ext).copied()
    }

    pub fn cache_vertex(&self, ext: &[u8], v: VertexId) {
        if let Some(c) = &self.cache {
            c.lock().put(ext.to_vec(), v);
        }
    }

    pub fn cache_enabled(&self) -> bool {
        self.cache.is_some()
    }

    pub fn clear_cache(&self) {
        if let Some(c) = &self.cache {
            c.lock().clear();
        }
    }

    fn uncache(&self, ext: &[u8]) {
        if let Some(c) = &self.cache {
            c.lock().pop(ext);
        }
    }

    /// Label id for `name`, interning it on shard 0 on first use. The empty
    /// name is the unlabeled id.
    pub fn resolve_label(&self, name: &str) -> Result<LabelId> {
        if name.is_empty() {
            return Ok(LabelId::NONE);
        }
        if let Some(l) = self.labels.read().get(name) {
            return Ok(*l);
        }
        let rep = self.messenger.call(0, LABEL_RESOLVE, name.as_bytes().to_vec())?;
        let l = LabelId(WireReader::new(&rep).u8()?);
        self.labels.write().insert(name.to_string(), l);
        Ok(l)
    }

    pub fn label_name(&self, label: LabelId) -> Result<Option<String>> {
        if label == LabelId::NONE {
            return Ok(Some(String::new()));
        }
        if let Some((n, _)) = self.labels.read().iter().find(|(_, l)| **l == label) {
            return Ok(Some(n.clone()));
        }
        let rep = self.messenger.call(0, LABEL_NAME, vec![label.0])?;
        let mut r = WireReader::new(&rep);
        Ok(r.bool()?.then(|| r.str().map(str::to_string)).transpose()?)
    }

    // ---- vertices ----

    fn check_or_create_call(&self, ext: &[u8], label: LabelId, props: &[(String, PropertyValue)]) -> CompletionHandle {
        let mut w = WireWriter::new();
        w.bytes(ext).u8(label.0);
        put_props(&mut w, props);
        self.messenger.call_async(self.shard_of(ext), VERTEX_CHECK_OR_CREATE, w.finish())
    }

    fn finish_check_or_create(&self, ext: &[u8], r: std::result::Result<Bytes, RpcError>) -> std::result::Result<VertexId, RpcError> {
        let b = r?;
        let v = get_vid(&mut WireReader::new(&b))?;
        self.cache_vertex(ext, v);
        Ok(v)
    }

    /// Check-or-create on the owning shard; properties are set in the same
    /// shard transaction.
    pub fn add_vertex(&self, ext: &[u8], label: &str, props: &[(String, PropertyValue)]) -> Result<VertexId> {
        if ext.is_empty() {
            return Err(ClusterError::Invalid("external id must not be empty".into()));
        }
        let label = self.resolve_label(label)?;
        let r = self.check_or_create_call(ext, label, props).wait();
        Ok(self.finish_check_or_create(ext, r)?)
    }

    /// Internal id of `ext`, from the cache or the owning shard.
    pub fn lookup_vertex(&self, ext: &[u8]) -> Result<Option<VertexId>> {
        if let Some(v) = self.cached_vertex(ext) {
            return Ok(Some(v));
        }
        let rep = self.messenger.call(self.shard_of(ext), VERTEX_LOOKUP, ext.to_vec())?;
        let mut r = WireReader::new(&rep);
        let found = r.bool()?;
        let v = get_vid(&mut r)?;
        if found {
            self.cache_vertex(ext, v);
        }
        Ok(found.then_some(v))
    }

    fn require_vertex(&self, ext: &[u8]) -> Result<VertexId> {
        self.lookup_vertex(ext)?
            .ok_or_else(|| ClusterError::VertexNotFound(String::from_utf8_lossy(ext).into_owned()))
    }

    pub fn get_vertex(&self, ext: &[u8]) -> Result<Option<(VertexId, Props)>> {
        let mut w = WireWriter::new();
        w.bytes(ext);
        let rep = self.messenger.call(self.shard_of(ext), VERTEX_GET, w.finish())?;
        let mut r = WireReader::new(&rep);
        let found = r.bool()?;
        let v = get_vid(&mut r)?;
        let props = get_props(&mut r)?;
        Ok(found.then_some((v, props)))
    }

    pub fn set_vertex_property(&self, ext: &[u8], name: &str, value: &PropertyValue) -> Result<()> {
        let v = self.require_vertex(ext)?;
        let mut w = WireWriter::new();
        w.u64(v.raw()).str(name);
        put_value(&mut w, value);
        self.messenger.call(v.shard().index(), VERTEX_PROP_SET, w.finish())?;
        Ok(())
    }

    pub fn get_vertex_property(&self, ext: &[u8], name: &str) -> Result<Option<PropertyValue>> {
        let v = self.require_vertex(ext)?;
        let mut w = WireWriter::new();
        w.u64(v.raw()).str(name);
        let rep = self.messenger.call(v.shard().index(), VERTEX_PROP_GET, w.finish())?;
        Ok(get_opt_value(&mut WireReader::new(&rep))?)
    }

    /// External ids of `vids`, in order; `None` for unknown ids.
    pub fn externals(&self, vids: &[VertexId]) -> Result<Vec<Option<Vec<u8>>>> {
        let mut buckets: Vec<Vec<usize>> = vec![Vec::new(); self.shard_count()];
        for (i, v) in vids.iter().enumerate() {
            buckets
                .get_mut(v.shard().index())
                .ok_or_else(|| ClusterError::Invalid(format!("vertex {v:?} on unknown shard")))?
                .push(i);
        }
        let mut poller = Poller::new();
        for (shard, idx) in buckets.iter().enumerate().filter(|(_, b)| !b.is_empty()) {
            let mut w = WireWriter::new();
            w.u32(idx.len() as u32);
            for &i in idx {
                w.u64(vids[i].raw());
            }
            poller.add(shard, self.messenger.call_async(shard, VERTEX_EXTERNALS, w.finish()));
        }
        let mut out = vec![None; vids.len()];
        for (shard, r) in poller.drain() {
            let b = r.map_err(|source| ClusterError::ShardUnreachable { shard, source })?;
            let mut rd = WireReader::new(&b);
            for &i in &buckets[shard] {
                let found = rd.bool()?;
                let e = rd.bytes()?;
                out[i] = found.then(|| e.to_vec());
            }
        }
        Ok(out)
    }

    // ---- edges ----

    /// Synchronous add_edge, driven step by step from the caller:
    ///
    /// 1. check-or-create the target (request + reply, skipped on a cache hit)
    /// 2. check-or-create the source (request + reply, skipped on a cache hit)
    /// 3. resolve the label from the local cache
    /// 4. write the outgoing half on the source shard, which allocates the
    ///    edge id (request + reply)
    /// 5. write the incoming half on the target shard (one-way, or request +
    ///    reply with `confirm`)
    pub fn add_edge_sync(
        &self,
        src: &[u8],
        label: &str,
        tgt: &[u8],
        props: &[(String, PropertyValue)],
        confirm: bool,
    ) -> Result<EdgeId> {
        let step = |step: u8, source: RpcError| ClusterError::Step {
            step,
            completed: step - 1,
            source,
        };
        if src.is_empty() || tgt.is_empty() {
            return Err(ClusterError::Invalid("external id must not be empty".into()));
        }
        let tv = match self.cached_vertex(tgt) {
            Some(v) => v,
            None => {
                let r = self.check_or_create_call(tgt, LabelId::NONE, &[]).wait();
                self.finish_check_or_create(tgt, r).map_err(|e| step(1, e))?
            }
        };
        let sv = match self.cached_vertex(src) {
            Some(v) => v,
            None => {
                let r = self.check_or_create_call(src, LabelId::NONE, &[]).wait();
                self.finish_check_or_create(src, r).map_err(|e| step(2, e))?
            }
        };
        let label = self.resolve_label(label).map_err(|e| match e {
            ClusterError::Rpc(r) => step(3, r),
            other => other,
        })?;
        let mut w = WireWriter::new();
        w.u64(sv.raw()).u64(tv.raw()).u8(label.0);
        put_props(&mut w, props);
        let rep = self
            .messenger
            .call(sv.shard().index(), EDGE_ADD_OUT, w.finish())
            .map_err(|e| step(4, e))?;
        let eid = get_eid(&mut WireReader::new(&rep)).map_err(|e| step(4, e))?;
        let mut w = WireWriter::new();
        w.u64(tv.raw()).u64(sv.raw()).u64(eid.raw()).u8(label.0);
        let target = tv.shard().index();
        if confirm {
            self.messenger.call(target, EDGE_ADD_IN, w.finish())
        } else {
            self.messenger.send_oneway(target, EDGE_ADD_IN, w.finish()).map(|_| Bytes::new())
        }
        .map_err(|e| step(5, e))?;
        Ok(eid)
    }

    /// Asynchronous add_edge: message 1 goes to the target's shard, which
    /// forwards to the source's shard (message 2), which sends the incoming
    /// half back (message 3). With `confirm`, message 1 is a request and the
    /// target shard answers it with the edge id once the incoming half is
    /// stored (message 4).
    pub fn add_edge_async(
        &self,
        src: &[u8],
        label: &str,
        tgt: &[u8],
        props: &[(String, PropertyValue)],
        confirm: bool,
    ) -> Result<EdgeHandle> {
        if src.is_empty() || tgt.is_empty() {
            return Err(ClusterError::Invalid("external id must not be empty".into()));
        }
        let label = self.resolve_label(label)?;
        let mut w = WireWriter::new();
        w.bytes(src).bytes(tgt).u8(label.0);
        put_props(&mut w, props);
        let target = self.shard_of(tgt);
        let handle = if confirm {
            self.messenger.call_async(target, ASYNC_HOP_TARGET, w.finish())
        } else {
            CompletionHandle::completed(
                self.messenger
                    .send_oneway(target, ASYNC_HOP_TARGET, w.finish())
                    .map(|_| Bytes::new()),
            )
        };
        Ok(EdgeHandle { handle, confirm })
    }

    /// One request returning the out-edges of every vertex in `vids`, all
    /// owned by `shard`, read in one shard transaction.
    pub fn get_all_edges_async(&self, shard: usize, vids: &[VertexId]) -> CompletionHandle {
        let mut w = WireWriter::with_capacity(4 + 8 * vids.len());
        w.u32(vids.len() as u32);
        for v in vids {
            w.u64(v.raw());
        }
        self.messenger.call_async(shard, EDGE_GET_ALL, w.finish())
    }

    fn edge_list(&self, ext: &[u8], dir: u8, label: Option<&str>) -> Result<Vec<EdgeRecord>> {
        let v = self.require_vertex(ext)?;
        let filter = label.map(|l| self.resolve_label(l)).transpose()?;
        let mut w = WireWriter::new();
        w.u64(v.raw()).u8(dir).bool(filter.is_some()).u8(filter.unwrap_or_default().0);
        let rep = self.messenger.call(v.shard().index(), EDGE_LIST, w.finish())?;
        Ok(get_records(&mut WireReader::new(&rep))?)
    }

    pub fn out_edges(&self, ext: &[u8], label: Option<&str>) -> Result<Vec<EdgeRecord>> {
        self.edge_list(ext, 0, label)
    }

    pub fn in_edges(&self, ext: &[u8], label: Option<&str>) -> Result<Vec<EdgeRecord>> {
        self.edge_list(ext, 1, label)
    }

    /// Edge properties live on the shard that allocated the edge id.
    pub fn set_edge_property(&self, eid: EdgeId, name: &str, value: &PropertyValue) -> Result<()> {
        let mut w = WireWriter::new();
        w.u64(eid.raw()).str(name);
        put_value(&mut w, value);
        self.messenger.call(eid.shard().index(), EDGE_PROP_SET, w.finish())?;
        Ok(())
    }

    pub fn get_edge_property(&self, eid: EdgeId, name: &str) -> Result<Option<PropertyValue>> {
        let mut w = WireWriter::new();
        w.u64(eid.raw()).str(name);
        let rep = self.messenger.call(eid.shard().index(), EDGE_PROP_GET, w.finish())?;
        Ok(get_opt_value(&mut WireReader::new(&rep))?)
    }

    /// Deletes the vertex in one transaction on its shard, then sends one
    /// purge message per edge half left on other vertices. Not atomic
    /// across shards.
    pub fn delete_vertex(&self, ext: &[u8]) -> Result<DeleteReport> {
        let v = self.require_vertex(ext)?;
        let mut w = WireWriter::new();
        w.u64(v.raw());
        let rep = self.messenger.call(v.shard().index(), VERTEX_DELETE, w.finish());
        self.uncache(ext);
        let rep = rep?;
        let mut r = WireReader::new(&rep);
        let mut report = DeleteReport::default();
        for (op, count) in [
            (EDGE_PURGE_OUT, &mut report.incoming_purged),
            (EDGE_PURGE_IN, &mut report.outgoing_purged),
        ] {
            for _ in 0..r.u32()? {
                let other = get_vid(&mut r)?;
                let eid = get_eid(&mut r)?;
                let mut w = WireWriter::new();
                w.u64(other.raw()).u64(eid.raw());
                self.messenger.send_oneway(other.shard().index(), op, w.finish())?;
                *count += 1;
            }
        }
        Ok(report)
    }

    /// Removes both halves of an edge: one transaction on each endpoint's
    /// shard.
    pub fn delete_edge(&self, eid: EdgeId, src: &[u8], tgt: &[u8]) -> Result<bool> {
        let sv = self.require_vertex(src)?;
        let tv = self.require_vertex(tgt)?;
        let mut found = false;
        for (op, owner) in [(EDGE_DELETE_OUT, sv), (EDGE_DELETE_IN, tv)] {
            let mut w = WireWriter::new();
            w.u64(owner.raw()).u64(eid.raw());
            let rep = self.messenger.call(owner.shard().index(), op, w.finish())?;
            found |= WireReader::new(&rep).bool()?;
        }
        Ok(found)
    }

    // ---- bulk and admin ----

    pub fn stats(&self, shard: usize) -> Result<ShardStats> {
        Ok(ShardStats::decode(&self.messenger.call(shard, SHARD_STATS, Bytes::new())?)?)
    }

    pub fn dump_shard(&self, shard: usize) -> Result<ShardDump> {
        Ok(ShardDump::decode(&self.messenger.call(shard, DUMP_SHARD, Bytes::new())?)?)
    }

    /// Messages sent and received by every shard plus this process.
    pub fn cluster_counters(&self) -> Result<MessageCounters> {
        let mut total = self.messenger.counters_snapshot();
        for s in 0..self.shard_count() {
            total.merge(&self.messenger.remote_counters(s)?);
        }
        Ok(total)
    }

    pub fn reset_counters(&self) -> Result<()> {
        for s in 0..self.shard_count() {
            self.messenger.remote_counters_reset(s)?;
        }
        self.messenger.counters_reset();
        Ok(())
    }

    /// Committed write transactions per shard.
    pub fn commits(&self) -> Result<Vec<u64>> {
        (0..self.shard_count()).map(|s| Ok(self.stats(s)?.commits)).collect()
    }

    /// Waits until no message is in flight and every shard is idle, seen
    /// twice in a row. Only traffic of this process and the shards is
    /// visible; other clients must have stopped sending.
    pub fn quiesce(&self, timeout: Duration) -> Result<()> {
        let deadline = Instant::now() + timeout;
        let mut stable_rounds = 0;
        let mut last = None;
        loop {
            let c = self.cluster_counters()?;
            let mut idle = c.total_sent() == c.total_received();
            let mut commits = Vec::new();
            for s in 0..self.shard_count() {
                let st = self.stats(s)?;
                idle &= st.idle();
                commits.push(st.commits);
            }
            let snapshot = (c.total_sent(), commits);
            if idle && last.as_ref() == Some(&snapshot) {
                stable_rounds += 1;
                if stable_rounds >= 2 {
                    return Ok(());
                }
            } else {
                stable_rounds = 0;
            }
            last = Some(snapshot);
            if Instant::now() > deadline {
                return Err(ClusterError::Rpc(RpcError::Timeout));
            }
            std::thread::sleep(Duration::from_millis(2));
        }
    }

    /// Asks every node in the hostfile to stop.
    pub fn shutdown_nodes(&self) {
        for n in 0..self.messenger.hosts().len() {
            let _ = self
                .messenger
                .call_timeout(n, NODE_SHUTDOWN, Bytes::new(), Duration::from_secs(5));
        }
    }
}
