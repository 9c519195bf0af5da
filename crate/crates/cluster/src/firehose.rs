//! Batched ingest straight to the shards.
//!
//! Submissions land in per-shard outgoing/incoming queues. A flush swaps
//! the queue set out (the producer keeps filling the other one) and, per
//! shard in parallel, sends one bulk vertex request carrying the uncached
//! endpoints and submitted vertices plus an edge-id reservation, then one
//! bulk edge request with the materialized halves. That is at most four
//! messages per shard per flush.

use std::collections::{HashMap, VecDeque};
use std::sync::mpsc;
use std::sync::Arc;
use std::thread::JoinHandle;
use std::time::{Duration, Instant};

use parking_lot::Mutex;
use shardgraph_core::{EdgeId, EdgeIdRange, EdgeRecord, LabelId, ShardId, VertexId};
use shardgraph_rpc::{Bytes, RpcError, WireReader, WireWriter};

use crate::dgraph::DistributedGraph;
use crate::error::{ClusterError, Result};
use crate::proto::*;

pub const DEFAULT_BATCH: usize = 100_000;

#[derive(Clone, Debug)]
pub struct FirehoseConfig {
    /// Edges per flush. Vertices flush at `batch × shards`.
    pub batch: usize,
    /// Skip endpoints already in the vertex cache.
    pub use_cache: bool,
}

impl Default for FirehoseConfig {
    fn default() -> Self {
        Self {
            batch: DEFAULT_BATCH,
            use_cache: true,
        }
    }
}

/// An edge as handed to the firehose, by external ids.
#[derive(Clone, Debug, PartialEq)]
pub struct PendingEdge {
    pub src: Vec<u8>,
    pub tgt: Vec<u8>,
    pub label: String,
    pub props: Props,
}

/// Per-shard outcome of one flush.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ShardFlush {
    pub vertices_sent: usize,
    pub out_tuples: usize,
    pub in_tuples: usize,
    pub messages: u64,
    pub vertex_time: Duration,
    pub edge_time: Duration,
    pub error: Option<String>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FlushReport {
    pub edges: usize,
    pub vertices: usize,
    /// Edges with at least one half not stored.
    pub failed_edges: usize,
    pub shards: Vec<ShardFlush>,
    pub elapsed: Duration,
}

impl FlushReport {
    pub fn messages(&self) -> u64 {
        self.shards.iter().map(|s| s.messages).sum()
    }

    /// Folds `other` into `self`, adding counts and times shard by shard.
    pub fn merge(&mut self, other: &FlushReport) {
        self.edges += other.edges;
        self.vertices += other.vertices;
        self.failed_edges += other.failed_edges;
        self.elapsed += other.elapsed;
        if self.shards.len() < other.shards.len() {
            self.shards.resize(other.shards.len(), ShardFlush::default());
        }
        for (a, b) in self.shards.iter_mut().zip(&other.shards) {
            a.vertices_sent += b.vertices_sent;
            a.out_tuples += b.out_tuples;
            a.in_tuples += b.in_tuples;
            a.messages += b.messages;
            a.vertex_time += b.vertex_time;
            a.edge_time += b.edge_time;
            if a.error.is_none() {
                a.error.clone_from(&b.error);
            }
        }
    }
}

struct QueuedEdge {
    src: Vec<u8>,
    tgt: Vec<u8>,
    label: LabelId,
    props: Props,
}

struct QueuedVertex {
    ext: Vec<u8>,
    label: LabelId,
    props: Props,
}

/// One queue set: per shard the outgoing and incoming edge queues (as
/// indices into `edges`) and the submitted vertices.
#[derive(Default)]
struct QueueSet {
    edges: Vec<QueuedEdge>,
    out_q: Vec<Vec<usize>>,
    in_q: Vec<Vec<usize>>,
    vertices: Vec<Vec<QueuedVertex>>,
    vertex_count: usize,
}

impl QueueSet {
    fn new(shards: usize) -> Self {
        Self {
            out_q: vec![Vec::new(); shards],
            in_q: vec![Vec::new(); shards],
            vertices: (0..shards).map(|_| Vec::new()).collect(),
            ..Default::default()
        }
    }

    fn is_empty(&self) -> bool {
        self.edges.is_empty() && self.vertex_count == 0
    }
}

struct FlushJob {
    set: QueueSet,
    reply: Option<mpsc::Sender<FlushReport>>,
}

struct Flusher {
    dg: Arc<DistributedGraph>,
    use_cache: bool,
    /// Unused reserved edge ids per shard, oldest first.
    leftover: Vec<VecDeque<EdgeIdRange>>,
    reserved: Arc<Mutex<Vec<EdgeIdRange>>>,
}

pub struct Firehose {
    dg: Arc<DistributedGraph>,
    config: FirehoseConfig,
    active: QueueSet,
    tx: Option<mpsc::SyncSender<FlushJob>>,
    thread: Option<JoinHandle<()>>,
    reports: Arc<Mutex<FlushReport>>,
    reserved: Arc<Mutex<Vec<EdgeIdRange>>>,
}

impl std::fmt::Debug for Firehose {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Firehose").field("config", &self.config).finish()
    }
}

impl Firehose {
    pub fn open(dg: Arc<DistributedGraph>, config: FirehoseConfig) -> Self {
        let shards = dg.shard_count();
        let reserved = Arc::new(Mutex::new(Vec::new()));
        let reports = Arc::new(Mutex::new(FlushReport::default()));
        // Rendezvous channel: the producer can fill one set while the
        // flush thread drains the other, never more.
        let (tx, rx) = mpsc::sync_channel::<FlushJob>(0);
        let mut flusher = Flusher {
            dg: dg.clone(),
            use_cache: config.use_cache,
            leftover: vec![VecDeque::new(); shards],
            reserved: reserved.clone(),
        };
        let acc = reports.clone();
        let thread = std::thread::Builder::new()
            .name("firehose-flush".into())
            .spawn(move || {
                for job in rx {
                    let report = flusher.flush(job.set);
                    acc.lock().merge(&report);
                    if let Some(r) = job.reply {
                        let _ = r.send(report);
                    }
                }
            })
            .expect("spawn flush thread");
        Self {
            dg,
            active: QueueSet::new(shards),
            config,
            tx: Some(tx),
            thread: Some(thread),
            reports,
            reserved,
        }
    }

    pub fn graph(&self) -> &Arc<DistributedGraph> {
        &self.dg
    }

    pub fn config(&self) -> &FirehoseConfig {
        &self.config
    }

    pub fn submit_edge(&mut self, e: PendingEdge) -> Result<()> {
        if e.src.is_empty() || e.tgt.is_empty() {
            return Err(ClusterError::Invalid("external id must not be empty".into()));
        }
        let label = self.dg.resolve_label(&e.label)?;
        let i = self.active.edges.len();
        self.active.out_q[self.dg.shard_of(&e.src)].push(i);
        self.active.in_q[self.dg.shard_of(&e.tgt)].push(i);
        self.active.edges.push(QueuedEdge {
            src: e.src,
            tgt: e.tgt,
            label,
            props: e.props,
        });
        if self.active.edges.len() >= self.config.batch.max(1) {
            self.dispatch(None);
        }
        Ok(())
    }

    pub fn submit_vertex(&mut self, ext: &[u8], label: &str, props: Props) -> Result<()> {
        if ext.is_empty() {
            return Err(ClusterError::Invalid("external id must not be empty".into()));
        }
        let label = self.dg.resolve_label(label)?;
        self.active.vertices[self.dg.shard_of(ext)].push(QueuedVertex {
            ext: ext.to_vec(),
            label,
            props,
        });
        self.active.vertex_count += 1;
        if self.active.vertex_count >= self.config.batch.max(1) * self.dg.shard_count() {
            self.dispatch(None);
        }
        Ok(())
    }

    fn dispatch(&mut self, reply: Option<mpsc::Sender<FlushReport>>) {
        let set = std::mem::replace(&mut self.active, QueueSet::new(self.dg.shard_count()));
        if let Some(tx) = &self.tx {
            if tx.send(FlushJob { set, reply }).is_err() {
                log::error!("firehose flush thread is gone");
            }
        }
    }

    /// Flushes whatever is queued and waits for it. Earlier automatic
    /// flushes complete first.
    pub fn flush(&mut self) -> FlushReport {
        // An empty set is still dispatched so the call waits out a flush
        // that may be in flight.
        let (tx, rx) = mpsc::channel();
        self.dispatch(Some(tx));
        rx.recv().unwrap_or_default()
    }

    /// Totals over every flush so far.
    pub fn totals(&self) -> FlushReport {
        self.reports.lock().clone()
    }

    /// Every edge-id range reserved by this firehose, in order.
    pub fn reserved_ranges(&self) -> Vec<EdgeIdRange> {
        self.reserved.lock().clone()
    }

    /// Final flush, then stops the flush thread.
    pub fn close(mut self) -> FlushReport {
        self.flush();
        self.stop();
        self.totals()
    }

    fn stop(&mut self) {
        self.tx.take();
        if let Some(t) = self.thread.take() {
            let _ = t.join();
        }
    }
}

impl Drop for Firehose {
    fn drop(&mut self) {
        if !self.active.is_empty() {
            self.flush();
        }
        self.stop();
    }
}

impl Flusher {
    fn cached(&self, ext: &[u8]) -> Option<VertexId> {
        if self.use_cache {
            self.dg.cached_vertex(ext)
        } else {
            None
        }
    }

    fn available(&self, shard: usize) -> u64 {
        self.leftover[shard].iter().map(EdgeIdRange::len).sum()
    }

    fn take_eid(&mut self, shard: usize) -> Option<EdgeId> {
        let q = &mut self.leftover[shard];
        while let Some(r) = q.front_mut() {
            if let Some(e) = r.edge_id(0) {
                r.start += 1;
                return Some(e);
            }
            q.pop_front();
        }
        None
    }

    fn flush(&mut self, set: QueueSet) -> FlushReport {
        let started = Instant::now();
        let p = self.dg.shard_count();
        let mut report = FlushReport {
            edges: set.edges.len(),
            vertices: set.vertex_count,
            shards: vec![ShardFlush::default(); p],
            ..Default::default()
        };
        if set.is_empty() {
            return report;
        }
        let mut ids: HashMap<&[u8], VertexId> = HashMap::new();

        // Vertex step: one request per shard that has something uncached,
        // submitted vertices, or too few reserved edge ids.
        let mut pending = Vec::new();
        for s in 0..p {
            let mut send: Vec<(&[u8], LabelId, &[(String, shardgraph_core::PropertyValue)])> = Vec::new();
            let mut seen = std::collections::HashSet::new();
            for v in &set.vertices[s] {
                if seen.insert(&v.ext[..]) {
                    send.push((&v.ext, v.label, &v.props));
                }
            }
            let endpoints = set.out_q[s]
                .iter()
                .map(|&i| &set.edges[i].src[..])
                .chain(set.in_q[s].iter().map(|&i| &set.edges[i].tgt[..]));
            for ext in endpoints {
                if seen.contains(ext) {
                    continue;
                }
                match self.cached(ext) {
                    Some(v) => {
                        ids.insert(ext, v);
                    }
                    None => {
                        seen.insert(ext);
                        send.push((ext, LabelId::NONE, &[]));
                    }
                }
            }
            let needed = set.out_q[s].len() as u64;
            let have = self.available(s);
            if send.is_empty() && have >= needed {
                continue;
            }
            let shortfall = needed.saturating_sub(have);
            let range_len = if needed == 0 { 0 } else { shortfall + needed };
            let mut w = WireWriter::new();
            w.u64(range_len).u32(send.len() as u32);
            for (ext, label, props) in &send {
                w.bytes(ext).u8(label.0);
                put_props(&mut w, props);
            }
            let exts: Vec<&[u8]> = send.iter().map(|(e, _, _)| *e).collect();
            report.shards[s].vertices_sent = exts.len();
            report.shards[s].messages += 2;
            let t = Instant::now();
            pending.push((s, exts, t, self.dg.messenger().call_async(s, BULK_VERTICES, w.finish())));
        }
        let mut failed_shard = vec![false; p];
        for (s, exts, t, h) in pending {
            let r = h.wait().and_then(|b| {
                let mut r = WireReader::new(&b);
                let n = r.u32()? as usize;
                if n != exts.len() {
                    return Err(RpcError::Decode("bulk vertex reply count".into()));
                }
                let vids: Vec<VertexId> = (0..n).map(|_| get_vid(&mut r)).collect::<std::result::Result<_, _>>()?;
                let (start, end) = (r.u64()?, r.u64()?);
                Ok((vids, start, end))
            });
            report.shards[s].vertex_time = t.elapsed();
            match r {
                Ok((vids, start, end)) => {
                    for (ext, v) in exts.into_iter().zip(vids) {
                        ids.insert(ext, v);
                        self.dg.cache_vertex(ext, v);
                    }
                    if start < end {
                        let range = EdgeIdRange {
                            shard: ShardId::new(s as u32).expect("shard index in range"),
                            start,
                            end,
                        };
                        self.reserved.lock().push(range);
                        self.leftover[s].push_back(range);
                    }
                }
                Err(e) => {
                    failed_shard[s] = true;
                    report.shards[s].error = Some(e.to_string());
                }
            }
        }

        // Edge step: materialize both halves with ids from the source
        // shard's reservation.
        let mut out_tuples: Vec<WireWriter> = (0..p).map(|_| WireWriter::new()).collect();
        let mut in_tuples: Vec<WireWriter> = (0..p).map(|_| WireWriter::new()).collect();
        let mut counts = vec![(0u32, 0u32); p];
        let mut owners: Vec<(usize, usize)> = Vec::with_capacity(set.edges.len());
        let mut failed = vec![false; set.edges.len()];
        for (i, e) in set.edges.iter().enumerate() {
            let (ss, ts) = (self.dg.shard_of(&e.src), self.dg.shard_of(&e.tgt));
            owners.push((ss, ts));
            let (Some(&sv), Some(&tv)) = (ids.get(&e.src[..]), ids.get(&e.tgt[..])) else {
                failed[i] = true;
                continue;
            };
            let Some(eid) = self.take_eid(ss) else {
                failed[i] = true;
                if report.shards[ss].error.is_none() {
                    report.shards[ss].error = Some("no reserved edge ids".into());
                }
                continue;
            };
            let w = &mut out_tuples[ss];
            w.u64(sv.raw()).u8(0);
            put_record(w, &EdgeRecord { other: tv, label: e.label, edge: eid });
            put_props(w, &e.props);
            counts[ss].0 += 1;
            let w = &mut in_tuples[ts];
            w.u64(tv.raw()).u8(1);
            put_record(w, &EdgeRecord { other: sv, label: e.label, edge: eid });
            w.u32(0);
            counts[ts].1 += 1;
        }
        let mut pending = Vec::new();
        for (s, (outs, ins)) in out_tuples.into_iter().zip(in_tuples).enumerate() {
            let (no, ni) = counts[s];
            if no + ni == 0 || failed_shard[s] {
                continue;
            }
            let (outs, ins) = (outs.into_vec(), ins.into_vec());
            let mut w = WireWriter::with_capacity(4 + outs.len() + ins.len());
            w.u32(no + ni).raw(&outs).raw(&ins);
            report.shards[s].out_tuples = no as usize;
            report.shards[s].in_tuples = ni as usize;
            report.shards[s].messages += 2;
            let t = Instant::now();
            pending.push((s, t, self.dg.messenger().call_async(s, BULK_EDGES, w.finish())));
        }
        for (s, t, h) in pending {
            let r: std::result::Result<Bytes, RpcError> = h.wait();
            report.shards[s].edge_time = t.elapsed();
            if let Err(e) = r {
                failed_shard[s] = true;
                report.shards[s].error = Some(e.to_string());
            }
        }
        for (i, (ss, ts)) in owners.into_iter().enumerate() {
            if failed[i] || failed_shard[ss] || failed_shard[ts] {
                report.failed_edges += 1;
            }
        }
        report.elapsed = started.elapsed();
        report
    }
}
