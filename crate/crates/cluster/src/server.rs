//! One shard process: a graph store, a single writer thread, and the RPC
//! handlers that serve it.
//!
//! Read requests run on pool workers against their own snapshot. Every
//! write request becomes one job for the writer thread, and each job is
//! exactly one committed (or aborted) transaction. Replies and follow-up
//! messages are sent only after the commit.

use std::collections::HashMap;
use std::net::TcpListener;
use std::sync::atomic::{AtomicU64, AtomicUsize, Ordering};
use std::sync::{mpsc, Arc, Weak};
use std::thread::JoinHandle;
use std::time::Instant;

use parking_lot::{Condvar, Mutex};
use shardgraph_core::kv::Env;
use shardgraph_core::{
    BulkEdge, Direction, EdgeRecord, GraphConfig, GraphError, GraphStore, GraphTxn, LabelId,
    NewVertex, PropertyLayout, ShardId, VertexId,
};
use shardgraph_rpc::{Bytes, Hostfile, Incoming, Messenger, Responder, RpcError, TaskPool, WireReader, WireWriter};

use crate::placement::ShardMap;
use crate::proto::{self, *};

pub const DEFAULT_GRAPH: &str = "default";

#[derive(Clone, Debug)]
pub struct ShardConfig {
    pub graph: String,
    pub layout: PropertyLayout,
    pub workers: usize,
}

impl Default for ShardConfig {
    fn default() -> Self {
        Self {
            graph: DEFAULT_GRAPH.to_string(),
            layout: PropertyLayout::default(),
            workers: shardgraph_rpc::runtime::configured_workers(),
        }
    }
}

#[derive(Debug)]
struct Failure(String);

impl From<GraphError> for Failure {
    fn from(e: GraphError) -> Self {
        Failure(e.to_string())
    }
}

impl From<RpcError> for Failure {
    fn from(e: RpcError) -> Self {
        Failure(e.to_string())
    }
}

impl std::fmt::Display for Failure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

type Job = Box<dyn FnOnce(&ShardInner) + Send>;

enum WriterMsg {
    Job(Job),
    Stop,
}

struct ShardInner {
    shard: usize,
    store: GraphStore,
    messenger: Messenger,
    map: ShardMap,
    writer_tx: Mutex<mpsc::Sender<WriterMsg>>,
    writer_pending: AtomicUsize,
    commits: AtomicU64,
    tokens: Mutex<HashMap<u64, Responder>>,
    next_token: AtomicU64,
    stopped: Mutex<bool>,
    stop_cv: Condvar,
}

/// Counters reported by `SHARD_STATS`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ShardStats {
    pub commits: u64,
    pub vertices: u64,
    pub out_halves: u64,
    pub in_halves: u64,
    pub max_eid: u64,
    pub writer_pending: u64,
    pub pool_queued: u64,
    pub pool_running: u64,
}

impl ShardStats {
    pub fn encode(&self) -> Bytes {
        let mut w = WireWriter::new();
        for v in [
            self.commits,
            self.vertices,
            self.out_halves,
            self.in_halves,
            self.max_eid,
            self.writer_pending,
            self.pool_queued,
            self.pool_running,
        ] {
            w.u64(v);
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, RpcError> {
        let mut r = WireReader::new(buf);
        let s = Self {
            commits: r.u64()?,
            vertices: r.u64()?,
            out_halves: r.u64()?,
            in_halves: r.u64()?,
            max_eid: r.u64()?,
            writer_pending: r.u64()?,
            pool_queued: r.u64()?,
            pool_running: r.u64()?,
        };
        r.finish()?;
        Ok(s)
    }

    /// No queued or running work apart from the stats request itself.
    pub fn idle(&self) -> bool {
        self.writer_pending == 0 && self.pool_queued == 0 && self.pool_running <= 1
    }
}

/// Full contents of one shard, as returned by `DUMP_SHARD`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ShardDump {
    pub labels: Vec<(LabelId, String)>,
    pub vertices: Vec<(VertexId, Vec<u8>, Props)>,
    pub out_edges: Vec<(VertexId, EdgeRecord, Props)>,
    pub in_edges: Vec<(VertexId, EdgeRecord)>,
}

impl ShardDump {
    fn read(t: &GraphTxn<'_>) -> Result<Self, GraphError> {
        let mut d = ShardDump {
            labels: t.labels()?,
            ..Default::default()
        };
        for (v, ext) in t.vertices()? {
            d.vertices.push((v, ext, t.vertex_properties(v)?));
        }
        for (owner, rec) in t.all_edges(Direction::Out)? {
            d.out_edges.push((owner, rec, t.edge_properties(rec.edge)?));
        }
        d.in_edges = t.all_edges(Direction::In)?;
        Ok(d)
    }

    pub fn encode(&self) -> Bytes {
        let mut w = WireWriter::new();
        w.u32(self.labels.len() as u32);
        for (l, name) in &self.labels {
            w.u8(l.0).str(name);
        }
        w.u32(self.vertices.len() as u32);
        for (v, ext, props) in &self.vertices {
            w.u64(v.raw()).bytes(ext);
            put_props(&mut w, props);
        }
        w.u32(self.out_edges.len() as u32);
        for (owner, rec, props) in &self.out_edges {
            w.u64(owner.raw());
            put_record(&mut w, rec);
            put_props(&mut w, props);
        }
        w.u32(self.in_edges.len() as u32);
        for (owner, rec) in &self.in_edges {
            w.u64(owner.raw());
            put_record(&mut w, rec);
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self, RpcError> {
        let mut r = WireReader::new(buf);
        let mut d = ShardDump::default();
        for _ in 0..r.u32()? {
            let l = LabelId(r.u8()?);
            d.labels.push((l, r.str()?.to_string()));
        }
        for _ in 0..r.u32()? {
            let v = get_vid(&mut r)?;
            let ext = r.bytes()?.to_vec();
            d.vertices.push((v, ext, get_props(&mut r)?));
        }
        for _ in 0..r.u32()? {
            let owner = get_vid(&mut r)?;
            let rec = get_record(&mut r)?;
            d.out_edges.push((owner, rec, get_props(&mut r)?));
        }
        for _ in 0..r.u32()? {
            let owner = get_vid(&mut r)?;
            d.in_edges.push((owner, get_record(&mut r)?));
        }
        r.finish()?;
        Ok(d)
    }
}

/// A running shard. Dropping the handle does not stop it; call
/// [`ShardServer::shutdown`].
#[derive(Clone)]
pub struct ShardServer {
    inner: Arc<ShardInner>,
    writer: Arc<Mutex<Option<JoinHandle<()>>>>,
}

impl std::fmt::Debug for ShardServer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ShardServer").field("shard", &self.inner.shard).finish()
    }
}

impl ShardServer {
    /// Opens (or creates) the shard's graph in `env` and starts serving on
    /// `listener`. `shard` is this node's index in `hosts`; every line but
    /// the last is a shard.
    pub fn start(
        shard: usize,
        hosts: Hostfile,
        env: &Env,
        config: ShardConfig,
        listener: TcpListener,
    ) -> Result<Self, String> {
        let shard_count = hosts.shard_count().max(1);
        if shard >= shard_count {
            return Err(format!("shard {shard} out of range (hostfile has {shard_count} shards)"));
        }
        let shard_id = ShardId::new(shard as u32).ok_or("shard id out of range")?;
        let store = GraphStore::open_or_create(
            env,
            &config.graph,
            shard_id,
            GraphConfig {
                property_layout: config.layout,
            },
        )
        .map_err(|e| e.to_string())?;
        if store.shard() != shard_id {
            return Err(format!(
                "data directory belongs to shard {}, not {shard}",
                store.shard()
            ));
        }
        let pool = TaskPool::start(config.workers);
        let messenger = Messenger::new(Some(shard), hosts, pool);
        let (tx, rx) = mpsc::channel();
        let inner = Arc::new(ShardInner {
            shard,
            store,
            messenger: messenger.clone(),
            map: ShardMap::new(shard_count),
            writer_tx: Mutex::new(tx),
            writer_pending: AtomicUsize::new(0),
            commits: AtomicU64::new(0),
            tokens: Mutex::new(HashMap::new()),
            next_token: AtomicU64::new(1),
            stopped: Mutex::new(false),
            stop_cv: Condvar::new(),
        });
        let w = inner.clone();
        let writer = std::thread::Builder::new()
            .name(format!("shard{shard}-writer"))
            .spawn(move || {
                for msg in rx {
                    match msg {
                        WriterMsg::Job(job) => {
                            job(&w);
                            w.writer_pending.fetch_sub(1, Ordering::SeqCst);
                        }
                        WriterMsg::Stop => break,
                    }
                }
            })
            .map_err(|e| e.to_string())?;
        register_handlers(&inner).map_err(|e| e.to_string())?;
        messenger.serve(listener).map_err(|e| e.to_string())?;
        Ok(Self {
            inner,
            writer: Arc::new(Mutex::new(Some(writer))),
        })
    }

    pub fn shard(&self) -> usize {
        self.inner.shard
    }

    pub fn messenger(&self) -> &Messenger {
        &self.inner.messenger
    }

    pub fn store(&self) -> &GraphStore {
        &self.inner.store
    }

    pub fn commits(&self) -> u64 {
        self.inner.commits.load(Ordering::SeqCst)
    }

    /// Blocks until a `NODE_SHUTDOWN` request arrives or `shutdown` is
    /// called.
    pub fn wait(&self) {
        let mut s = self.inner.stopped.lock();
        while !*s {
            self.inner.stop_cv.wait(&mut s);
        }
    }

    /// Stops accepting messages, finishes queued writes and stops the
    /// writer and the pool.
    pub fn shutdown(&self) {
        self.inner.messenger.shutdown();
        self.inner.messenger.pool().shutdown();
        let _ = self.inner.writer_tx.lock().send(WriterMsg::Stop);
        if let Some(h) = self.writer.lock().take() {
            let _ = h.join();
        }
        signal_stop(&self.inner);
    }
}

fn signal_stop(inner: &ShardInner) {
    *inner.stopped.lock() = true;
    inner.stop_cv.notify_all();
}

impl ShardInner {
    /// Runs `f` in its own write transaction on the writer thread, then
    /// hands the outcome to `done` (still on the writer thread, after the
    /// commit).
    fn write<R: Send + 'static>(
        &self,
        f: impl FnOnce(&mut GraphTxn<'_>) -> Result<R, Failure> + Send + 'static,
        done: impl FnOnce(&ShardInner, Result<R, Failure>) + Send + 'static,
    ) {
        self.writer_pending.fetch_add(1, Ordering::SeqCst);
        let job: Job = Box::new(move |inner: &ShardInner| {
            let result = (|| {
                let mut t = inner.store.write()?;
                let v = f(&mut t)?;
                t.commit()?;
                Ok(v)
            })();
            if result.is_ok() {
                inner.commits.fetch_add(1, Ordering::SeqCst);
            }
            done(inner, result);
        });
        if self.writer_tx.lock().send(WriterMsg::Job(job)).is_err() {
            self.writer_pending.fetch_sub(1, Ordering::SeqCst);
            log::warn!("shard {}: write after writer stopped", self.shard);
        }
    }

    /// Write whose result is the reply.
    fn write_reply(
        &self,
        responder: Responder,
        f: impl FnOnce(&mut GraphTxn<'_>) -> Result<WireWriter, Failure> + Send + 'static,
    ) {
        self.write(f, move |_, r| match r {
            Ok(w) => responder.reply(w.finish()),
            Err(e) => responder.fail(e),
        });
    }

    fn read_reply(
        &self,
        responder: Responder,
        f: impl FnOnce(&GraphTxn<'_>) -> Result<WireWriter, Failure>,
    ) {
        let r = self.store.read().map_err(Failure::from).and_then(|t| f(&t));
        match r {
            Ok(w) => responder.reply(w.finish()),
            Err(e) => responder.fail(e),
        }
    }

    fn park(&self, responder: Responder) -> u64 {
        if responder.is_oneway() {
            return 0;
        }
        let token = self.next_token.fetch_add(1, Ordering::Relaxed);
        self.tokens.lock().insert(token, responder);
        token
    }

    fn finish_token(&self, token: u64, result: Result<Bytes, String>) {
        if token == 0 {
            if let Err(e) = result {
                log::warn!("shard {}: async add_edge failed: {e}", self.shard);
            }
            return;
        }
        let Some(responder) = self.tokens.lock().remove(&token) else {
            log::warn!("shard {}: unknown async token {token}", self.shard);
            return;
        };
        match result {
            Ok(b) => responder.reply(b),
            Err(e) => responder.fail(e),
        }
    }

    fn stats(&self) -> Result<ShardStats, Failure> {
        let t = self.store.read()?;
        let pool = self.messenger.pool();
        Ok(ShardStats {
            commits: self.commits.load(Ordering::SeqCst),
            vertices: t.vertex_count()?,
            out_halves: t.edge_half_count(Direction::Out)?,
            in_halves: t.edge_half_count(Direction::In)?,
            max_eid: t.counters().1,
            writer_pending: self.writer_pending.load(Ordering::SeqCst) as u64,
            pool_queued: pool.queued() as u64,
            pool_running: pool.running() as u64,
        })
    }
}

fn register_handlers(inner: &Arc<ShardInner>) -> Result<(), RpcError> {
    let m = inner.messenger.clone();
    let reg = |op: u16, f: fn(&Arc<ShardInner>, Incoming) -> Result<(), Failure>| {
        let weak: Weak<ShardInner> = Arc::downgrade(inner);
        m.register_handler(op, move |inc: Incoming| {
            let Some(inner) = weak.upgrade() else { return };
            // Handlers that fail while parsing still own the responder; it
            // is dropped here and the caller gets an error.
            if let Err(e) = f(&inner, inc) {
                log::warn!("shard {}: opcode {op:#06x}: {e}", inner.shard);
            }
        })
    };
    reg(VERTEX_CHECK_OR_CREATE, h_check_or_create)?;
    reg(VERTEX_LOOKUP, h_lookup)?;
    reg(VERTEX_GET, h_vertex_get)?;
    reg(VERTEX_PROP_SET, h_vertex_prop_set)?;
    reg(VERTEX_PROP_GET, h_vertex_prop_get)?;
    reg(VERTEX_DELETE, h_vertex_delete)?;
    reg(EDGE_PURGE_OUT, h_purge_out)?;
    reg(EDGE_PURGE_IN, h_purge_in)?;
    reg(VERTEX_EXTERNALS, h_externals)?;
    reg(EDGE_ADD_OUT, h_add_out)?;
    reg(EDGE_ADD_IN, h_add_in)?;
    reg(ASYNC_HOP_TARGET, h_hop_target)?;
    reg(ASYNC_HOP_SOURCE, h_hop_source)?;
    reg(ASYNC_HOP_INCOMING, h_hop_incoming)?;
    reg(ASYNC_HOP_FAILED, h_hop_failed)?;
    reg(EDGE_GET_ALL, h_get_all)?;
    reg(EDGE_LIST, h_edge_list)?;
    reg(EDGE_PROP_SET, h_edge_prop_set)?;
    reg(EDGE_PROP_GET, h_edge_prop_get)?;
    reg(EDGE_DELETE_OUT, h_delete_out)?;
    reg(EDGE_DELETE_IN, h_delete_in)?;
    reg(LABEL_RESOLVE, h_label_resolve)?;
    reg(LABEL_NAME, h_label_name)?;
    reg(BULK_VERTICES, h_bulk_vertices)?;
    reg(BULK_EDGES, h_bulk_edges)?;
    reg(DUMP_SHARD, h_dump)?;
    reg(SHARD_STATS, h_stats)?;
    reg(NODE_SHUTDOWN, h_shutdown)?;
    Ok(())
}

fn h_check_or_create(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let ext = r.bytes()?.to_vec();
    let label = LabelId(r.u8()?);
    let props = get_props(&mut r)?;
    inner.write_reply(inc.responder, move |t| {
        let (v, created) = t.check_or_create_vertex_flag(&ext, label)?;
        for (name, value) in &props {
            t.set_vertex_property(v, name, value)?;
        }
        let mut w = WireWriter::new();
        w.u64(v.raw()).bool(created);
        Ok(w)
    });
    Ok(())
}

fn h_lookup(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    inner.read_reply(inc.responder, |t| {
        let v = t.vertex_id(&inc.payload[..])?;
        let mut w = WireWriter::new();
        w.bool(v.is_some()).u64(v.map_or(0, |v| v.raw()));
        Ok(w)
    });
    Ok(())
}

fn h_vertex_get(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let ext = r.bytes()?;
    inner.read_reply(inc.responder, |t| {
        let mut w = WireWriter::new();
        match t.vertex_id(ext)? {
            Some(v) => {
                w.bool(true).u64(v.raw());
                put_props(&mut w, &t.vertex_properties(v)?);
            }
            None => {
                w.bool(false).u64(0).u32(0);
            }
        }
        Ok(w)
    });
    Ok(())
}

fn h_vertex_prop_set(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let v = get_vid(&mut r)?;
    let name = r.str()?.to_string();
    let value = get_value_bytes(&mut r)?;
    inner.write_reply(inc.responder, move |t| {
        t.set_vertex_property(v, &name, &value)?;
        Ok(WireWriter::new())
    });
    Ok(())
}

fn h_vertex_prop_get(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let v = get_vid(&mut r)?;
    let name = r.str()?;
    inner.read_reply(inc.responder, |t| {
        let mut w = WireWriter::new();
        put_opt_value(&mut w, t.get_vertex_property(v, name)?.as_ref());
        Ok(w)
    });
    Ok(())
}

fn h_vertex_delete(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let v = get_vid(&mut WireReader::new(&inc.payload))?;
    inner.write_reply(inc.responder, move |t| {
        let refs = t.delete_vertex_local(v)?;
        let mut w = WireWriter::new();
        for list in [&refs.incoming, &refs.outgoing] {
            w.u32(list.len() as u32);
            for (other, eid) in list {
                w.u64(other.raw()).u64(eid.raw());
            }
        }
        Ok(w)
    });
    Ok(())
}

fn h_purge_out(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let (src, eid) = (get_vid(&mut r)?, get_eid(&mut r)?);
    inner.write_reply(inc.responder, move |t| {
        t.delete_out_edge(src, eid)?;
        Ok(WireWriter::new())
    });
    Ok(())
}

fn h_purge_in(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let (tgt, eid) = (get_vid(&mut r)?, get_eid(&mut r)?);
    inner.write_reply(inc.responder, move |t| {
        t.delete_in_edge(tgt, eid)?;
        Ok(WireWriter::new())
    });
    Ok(())
}

fn h_externals(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let n = r.u32()? as usize;
    let vids: Vec<VertexId> = (0..n).map(|_| get_vid(&mut r)).collect::<Result<_, _>>()?;
    inner.read_reply(inc.responder, |t| {
        let mut w = WireWriter::new();
        for v in vids {
            match t.external_id(v)? {
                Some(e) => w.bool(true).bytes(&e),
                None => w.bool(false).bytes(&[]),
            };
        }
        Ok(w)
    });
    Ok(())
}

fn h_add_out(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let src = get_vid(&mut r)?;
    let tgt = get_vid(&mut r)?;
    let label = LabelId(r.u8()?);
    let props = get_props(&mut r)?;
    inner.write_reply(inc.responder, move |t| {
        let eid = t.add_outgoing_edge(src, tgt, label, None)?;
        for (name, value) in &props {
            t.set_edge_property(eid, name, value)?;
        }
        let mut w = WireWriter::new();
        w.u64(eid.raw());
        Ok(w)
    });
    Ok(())
}

fn h_add_in(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let tgt = get_vid(&mut r)?;
    let src = get_vid(&mut r)?;
    let eid = get_eid(&mut r)?;
    let label = LabelId(r.u8()?);
    inner.write_reply(inc.responder, move |t| {
        t.add_incoming_edge(tgt, src, eid, label)?;
        Ok(WireWriter::new())
    });
    Ok(())
}

/// Async protocol, message 1: resolve or create the target vertex here,
/// then hand over to the source shard.
fn h_hop_target(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let src_ext = r.bytes()?.to_vec();
    let tgt_ext = r.bytes()?.to_vec();
    let label = LabelId(r.u8()?);
    let props_raw = r.rest().to_vec();
    let token = inner.park(inc.responder);
    inner.write(
        move |t| Ok(t.check_or_create_vertex(&tgt_ext, LabelId::NONE)?),
        move |inner, res| {
            let tgt = match res {
                Ok(v) => v,
                Err(e) => return inner.finish_token(token, Err(format!("hop 1: {e}"))),
            };
            let src_shard = inner.map.shard_of(&src_ext);
            let mut w = WireWriter::new();
            w.u64(token).bytes(&src_ext).u64(tgt.raw()).u8(label.0).raw(&props_raw);
            if let Err(e) = inner.messenger.send_oneway(src_shard, ASYNC_HOP_SOURCE, w.finish()) {
                inner.finish_token(token, Err(format!("hop 2: {e}")));
            }
        },
    );
    Ok(())
}

/// Message 2: create the source vertex and the outgoing half, allocating
/// the edge id, then send the incoming half to the target's shard.
fn h_hop_source(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let token = r.u64()?;
    let src_ext = r.bytes()?.to_vec();
    let tgt = get_vid(&mut r)?;
    let label = LabelId(r.u8()?);
    let props = get_props(&mut r)?;
    inner.write(
        move |t| {
            let src = t.check_or_create_vertex(&src_ext, LabelId::NONE)?;
            let eid = t.add_outgoing_edge(src, tgt, label, None)?;
            for (name, value) in &props {
                t.set_edge_property(eid, name, value)?;
            }
            Ok((src, eid))
        },
        move |inner, res| {
            let tgt_shard = tgt.shard().index();
            match res {
                Ok((src, eid)) => {
                    let mut w = WireWriter::new();
                    w.u64(token).u64(tgt.raw()).u64(src.raw()).u64(eid.raw()).u8(label.0);
                    if let Err(e) = inner.messenger.send_oneway(tgt_shard, ASYNC_HOP_INCOMING, w.finish()) {
                        log::warn!("shard {}: async hop 3 not sent: {e}", inner.shard);
                    }
                }
                Err(e) => send_hop_failure(inner, tgt_shard, token, 2, &e.0),
            }
        },
    );
    Ok(())
}

fn send_hop_failure(inner: &ShardInner, shard: usize, token: u64, hop: u8, msg: &str) {
    if token == 0 {
        log::warn!("shard {}: async add_edge hop {hop} failed: {msg}", inner.shard);
        return;
    }
    let mut w = WireWriter::new();
    w.u64(token).u8(hop).str(msg);
    if let Err(e) = inner.messenger.send_oneway(shard, ASYNC_HOP_FAILED, w.finish()) {
        log::warn!("shard {}: failure report lost: {e}", inner.shard);
    }
}

/// Message 3: store the incoming half; answer the original request if one
/// is waiting (message 4).
fn h_hop_incoming(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let token = r.u64()?;
    let tgt = get_vid(&mut r)?;
    let src = get_vid(&mut r)?;
    let eid = get_eid(&mut r)?;
    let label = LabelId(r.u8()?);
    inner.write(
        move |t| Ok(t.add_incoming_edge(tgt, src, eid, label)?),
        move |inner, res| {
            let out = res
                .map(|()| {
                    let mut w = WireWriter::new();
                    w.u64(eid.raw());
                    w.finish()
                })
                .map_err(|e| format!("hop 3: {e}"));
            inner.finish_token(token, out);
        },
    );
    Ok(())
}

fn h_hop_failed(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let token = r.u64()?;
    let hop = r.u8()?;
    let msg = r.str()?;
    inner.finish_token(token, Err(format!("hop {hop}: {msg}")));
    Ok(())
}

fn h_get_all(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let start = Instant::now();
    let mut r = WireReader::new(&inc.payload);
    let n = r.u32()? as usize;
    let vids: Vec<VertexId> = (0..n).map(|_| get_vid(&mut r)).collect::<Result<_, _>>()?;
    let t = inner.store.read()?;
    let mut lists = Vec::with_capacity(n);
    for v in vids {
        lists.push(t.out_edges(v, None)?);
    }
    drop(t);
    let out = proto::EdgeLists {
        exec_nanos: start.elapsed().as_nanos() as u64,
        lists,
    };
    inc.responder.reply(out.encode().finish());
    Ok(())
}

fn h_edge_list(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let v = get_vid(&mut r)?;
    let dir = r.u8()?;
    let has_label = r.bool()?;
    let label = LabelId(r.u8()?);
    let filter = has_label.then_some(label);
    inner.read_reply(inc.responder, |t| {
        let recs = if dir == 0 {
            t.out_edges(v, filter)?
        } else {
            t.in_edges(v, filter)?
        };
        let mut w = WireWriter::new();
        put_records(&mut w, &recs);
        Ok(w)
    });
    Ok(())
}

fn h_edge_prop_set(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let eid = get_eid(&mut r)?;
    let name = r.str()?.to_string();
    let value = get_value_bytes(&mut r)?;
    inner.write_reply(inc.responder, move |t| {
        t.set_edge_property(eid, &name, &value)?;
        Ok(WireWriter::new())
    });
    Ok(())
}

fn h_edge_prop_get(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let eid = get_eid(&mut r)?;
    let name = r.str()?;
    inner.read_reply(inc.responder, |t| {
        let mut w = WireWriter::new();
        put_opt_value(&mut w, t.get_edge_property(eid, name)?.as_ref());
        Ok(w)
    });
    Ok(())
}

fn h_delete_out(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let (src, eid) = (get_vid(&mut r)?, get_eid(&mut r)?);
    inner.write_reply(inc.responder, move |t| {
        let found = t.delete_out_edge(src, eid)?.is_some();
        let mut w = WireWriter::new();
        w.bool(found);
        Ok(w)
    });
    Ok(())
}

fn h_delete_in(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let (tgt, eid) = (get_vid(&mut r)?, get_eid(&mut r)?);
    inner.write_reply(inc.responder, move |t| {
        let found = t.delete_in_edge(tgt, eid)?.is_some();
        let mut w = WireWriter::new();
        w.bool(found);
        Ok(w)
    });
    Ok(())
}

fn h_label_resolve(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let name = std::str::from_utf8(&inc.payload)
        .map_err(|e| Failure(e.to_string()))?
        .to_string();
    if let Some(l) = inner.store.read()?.label_id(&name)? {
        inc.responder.reply(vec![l.0]);
        return Ok(());
    }
    inner.write_reply(inc.responder, move |t| {
        let l = t.check_or_create_label(&name)?;
        let mut w = WireWriter::new();
        w.u8(l.0);
        Ok(w)
    });
    Ok(())
}

fn h_label_name(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let l = LabelId(WireReader::new(&inc.payload).u8()?);
    inner.read_reply(inc.responder, |t| {
        let mut w = WireWriter::new();
        match t.label_name(l)? {
            Some(n) => w.bool(true).str(&n),
            None => w.bool(false).str(""),
        };
        Ok(w)
    });
    Ok(())
}

fn h_bulk_vertices(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let range_len = r.u64()?;
    let n = r.u32()? as usize;
    let mut vs = Vec::with_capacity(n);
    for _ in 0..n {
        let external = r.bytes()?.to_vec();
        let label = LabelId(r.u8()?);
        vs.push(NewVertex {
            external,
            label,
            props: get_props(&mut r)?,
        });
    }
    inner.write_reply(inc.responder, move |t| {
        let (ids, range) = t.batch_add_vertices(&vs, range_len)?;
        let mut w = WireWriter::with_capacity(20 + 8 * ids.len());
        w.u32(ids.len() as u32);
        for v in ids {
            w.u64(v.raw());
        }
        w.u64(range.start).u64(range.end);
        Ok(w)
    });
    Ok(())
}

fn h_bulk_edges(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let mut r = WireReader::new(&inc.payload);
    let n = r.u32()? as usize;
    let mut edges = Vec::with_capacity(n);
    for _ in 0..n {
        let owner = get_vid(&mut r)?;
        let direction = if r.u8()? == 0 { Direction::Out } else { Direction::In };
        let record = get_record(&mut r)?;
        edges.push(BulkEdge {
            owner,
            record,
            direction,
            props: get_props(&mut r)?,
        });
    }
    inner.write_reply(inc.responder, move |t| {
        let n = t.batch_add_edges(&edges)?;
        let mut w = WireWriter::new();
        w.u32(n as u32);
        Ok(w)
    });
    Ok(())
}

fn h_dump(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    let d = ShardDump::read(&inner.store.read()?)?;
    inc.responder.reply(d.encode());
    Ok(())
}

fn h_stats(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    inc.responder.reply(inner.stats()?.encode());
    Ok(())
}

fn h_shutdown(inner: &Arc<ShardInner>, inc: Incoming) -> Result<(), Failure> {
    inc.responder.reply(Bytes::new());
    signal_stop(inner);
    Ok(())
}
