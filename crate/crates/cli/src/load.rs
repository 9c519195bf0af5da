//! Loaders and the BFS driver used by the CLI and the benchmarks.
//!
//! The input is split into one contiguous chunk per client thread and each
//! thread inserts its own chunk.

use std::collections::VecDeque;
use std::sync::Arc;
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use shardgraph_cluster::{
    bfs, ClientHandle, DistributedGraph, Firehose, FirehoseConfig, PendingEdge,
};

use crate::csvio::{EdgeRow, VertexRow};
use crate::report::{BenchReport, BlockClock, DEFAULT_BLOCK};

const QUIESCE_TIMEOUT: Duration = Duration::from_secs(600);

#[derive(Clone, Copy, Debug, PartialEq, Eq, clap::ValueEnum)]
pub enum LoadMode {
    Sync,
    Async,
    Firehose,
}

impl LoadMode {
    pub fn name(self) -> &'static str {
        match self {
            LoadMode::Sync => "sync",
            LoadMode::Async => "async",
            LoadMode::Firehose => "firehose",
        }
    }
}

#[derive(Clone, Debug)]
pub struct LoadOptions {
    pub mode: LoadMode,
    pub threads: usize,
    /// Firehose batch size.
    pub batch: usize,
    pub use_cache: bool,
    /// Ask for the final acknowledgement (sync step 5, async message 4).
    pub confirm: bool,
    /// Outstanding async inserts per thread.
    pub window: usize,
    pub block_size: u64,
    /// Reset and report cluster-wide message counters.
    pub count_messages: bool,
}

impl Default for LoadOptions {
    fn default() -> Self {
        Self {
            mode: LoadMode::Firehose,
            threads: 1,
            batch: shardgraph_cluster::DEFAULT_BATCH,
            use_cache: true,
            confirm: true,
            window: 256,
            block_size: DEFAULT_BLOCK,
            count_messages: true,
        }
    }
}

fn chunks<T>(rows: &[T], n: usize) -> impl Iterator<Item = &[T]> {
    let size = rows.len().div_ceil(n.max(1)).max(1);
    rows.chunks(size)
}

fn finish(dg: &DistributedGraph, mut report: BenchReport, clock: &BlockClock, opts: &LoadOptions) -> Result<BenchReport> {
    // One-way traffic may still be in flight; the load is done when the
    // cluster is quiet.
    dg.quiesce(QUIESCE_TIMEOUT)?;
    let end = Instant::now();
    report.wall = end - clock.start();
    report.blocks = clock.blocks(end);
    if opts.count_messages {
        report.counters = Some(dg.cluster_counters()?);
    }
    Ok(report)
}

fn begin(dg: &DistributedGraph, opts: &LoadOptions) -> Result<()> {
    if opts.count_messages {
        dg.quiesce(QUIESCE_TIMEOUT)?;
        dg.reset_counters()?;
    }
    Ok(())
}

pub fn load_edges(dg: &Arc<DistributedGraph>, rows: &[EdgeRow], opts: &LoadOptions) -> Result<BenchReport> {
    if opts.threads == 0 {
        bail!("need at least one thread");
    }
    begin(dg, opts)?;
    let clock = BlockClock::new(opts.block_size);
    let failed = std::sync::atomic::AtomicU64::new(0);
    std::thread::scope(|s| {
        for chunk in chunks(rows, opts.threads) {
            let (clock, failed) = (&clock, &failed);
            s.spawn(move || {
                let n = match opts.mode {
                    LoadMode::Sync => edges_sync(dg, chunk, opts, clock),
                    LoadMode::Async => edges_async(dg, chunk, opts, clock),
                    LoadMode::Firehose => edges_firehose(dg, chunk, opts, clock),
                };
                failed.fetch_add(n, std::sync::atomic::Ordering::Relaxed);
            });
        }
    });
    let mut report = BenchReport::new(format!("load-edges/{}", opts.mode.name()));
    report.failed = failed.into_inner();
    report.items = rows.len() as u64 - report.failed;
    report.extra.push(("threads".into(), opts.threads.to_string()));
    finish(dg, report, &clock, opts)
}

fn edges_sync(dg: &DistributedGraph, rows: &[EdgeRow], opts: &LoadOptions, clock: &BlockClock) -> u64 {
    let mut failed = 0;
    for r in rows {
        match dg.add_edge_sync(r.src.as_bytes(), "", r.tgt.as_bytes(), &r.props(), opts.confirm) {
            Ok(_) => clock.add(1),
            Err(e) => {
                failed += 1;
                log::warn!("{} -> {}: {e}", r.src, r.tgt);
            }
        }
    }
    failed
}

fn edges_async(dg: &DistributedGraph, rows: &[EdgeRow], opts: &LoadOptions, clock: &BlockClock) -> u64 {
    let mut failed = 0;
    let mut window = VecDeque::with_capacity(opts.window);
    let settle = |h: shardgraph_cluster::EdgeHandle, failed: &mut u64| match h.wait() {
        Ok(_) => clock.add(1),
        Err(e) => {
            *failed += 1;
            log::warn!("async add_edge: {e}");
        }
    };
    for r in rows {
        match dg.add_edge_async(r.src.as_bytes(), "", r.tgt.as_bytes(), &r.props(), opts.confirm) {
            Ok(h) => window.push_back(h),
            Err(e) => {
                failed += 1;
                log::warn!("{} -> {}: {e}", r.src, r.tgt);
            }
        }
        if window.len() >= opts.window.max(1) {
            let h = window.pop_front().expect("window is not empty");
            settle(h, &mut failed);
        }
    }
    for h in window {
        settle(h, &mut failed);
    }
    failed
}

fn edges_firehose(dg: &Arc<DistributedGraph>, rows: &[EdgeRow], opts: &LoadOptions, clock: &BlockClock) -> u64 {
    let mut fh = Firehose::open(
        dg.clone(),
        FirehoseConfig {
            batch: opts.batch,
            use_cache: opts.use_cache,
        },
    );
    let mut failed = 0;
    let mut credited = 0usize;
    let credit = |fh: &Firehose, credited: &mut usize| {
        let t = fh.totals();
        let n = clock_credit(credited, (t.edges - t.failed_edges) as u64);
        if n > 0 {
            clock.add(n);
        }
    };
    for (i, r) in rows.iter().enumerate() {
        let e = PendingEdge {
            src: r.src.clone().into_bytes(),
            tgt: r.tgt.clone().into_bytes(),
            label: String::new(),
            props: r.props(),
        };
        if let Err(e) = fh.submit_edge(e) {
            failed += 1;
            log::warn!("{} -> {}: {e}", r.src, r.tgt);
        }
        // progress is credited as flushes complete
        if i % 1024 == 1023 {
            credit(&fh, &mut credited);
        }
    }
    fh.flush();
    credit(&fh, &mut credited);
    failed + fh.close().failed_edges as u64
}

/// Returns how much of `done` has not been credited yet and records it.
fn clock_credit(credited: &mut usize, done: u64) -> u64 {
    let new = done.saturating_sub(*credited as u64);
    *credited = done as usize;
    new
}

pub fn load_vertices(dg: &Arc<DistributedGraph>, rows: &[VertexRow], opts: &LoadOptions) -> Result<BenchReport> {
    begin(dg, opts)?;
    let clock = BlockClock::new(opts.block_size);
    let failed = std::sync::atomic::AtomicU64::new(0);
    std::thread::scope(|s| {
        for chunk in chunks(rows, opts.threads.max(1)) {
            let (clock, failed) = (&clock, &failed);
            s.spawn(move || {
                let mut fh = Firehose::open(
                    dg.clone(),
                    FirehoseConfig {
                        batch: opts.batch,
                        use_cache: opts.use_cache,
                    },
                );
                for r in chunk {
                    if let Err(e) = fh.submit_vertex(r.ext.as_bytes(), "", r.props.clone()) {
                        failed.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
                        log::warn!("{}: {e}", r.ext);
                        continue;
                    }
                }
                let t = fh.close();
                let failed_shards = t.shards.iter().filter(|s| s.error.is_some()).count();
                if failed_shards > 0 {
                    log::warn!("{failed_shards} shards reported errors");
                }
                clock.add(t.vertices as u64);
            });
        }
    });
    let mut report = BenchReport::new("load-vertices/firehose");
    report.failed = failed.into_inner();
    report.items = rows.len() as u64 - report.failed;
    report.extra.push(("threads".into(), opts.threads.max(1).to_string()));
    finish(dg, report, &clock, opts)
}

/// Where BFS queries run.
#[derive(Clone, Debug)]
pub enum BfsTarget {
    /// In this process, straight against the shards.
    Direct(Arc<DistributedGraph>),
    /// On the Query Manager.
    QueryManager(ClientHandle),
}

/// Runs one BFS per start across `threads` client flows. Returns the
/// report and the visited count per start (`None` when the query failed).
pub fn run_bfs(
    target: &BfsTarget,
    starts: &[String],
    depth: u32,
    threads: usize,
) -> Result<(BenchReport, Vec<Option<usize>>)> {
    let clock = BlockClock::new(DEFAULT_BLOCK);
    let mut counts = vec![None; starts.len()];
    let size = starts.len().div_ceil(threads.max(1)).max(1);
    let edges = std::sync::atomic::AtomicU64::new(0);
    std::thread::scope(|s| {
        for (chunk, out) in starts.chunks(size).zip(counts.chunks_mut(size)) {
            let (clock, edges) = (&clock, &edges);
            s.spawn(move || {
                for (start, slot) in chunk.iter().zip(out) {
                    let r = match target {
                        BfsTarget::Direct(dg) => bfs(dg, start.as_bytes(), depth, false),
                        BfsTarget::QueryManager(c) => c.bfs(start.as_bytes(), depth, false),
                    };
                    match r {
                        Ok(r) => {
                            *slot = Some(r.visited.len());
                            edges.fetch_add(r.edges_traversed, std::sync::atomic::Ordering::Relaxed);
                            clock.add(1);
                        }
                        Err(e) => log::warn!("bfs from {start}: {e}"),
                    }
                }
            });
        }
    });
    let end = Instant::now();
    let mut report = BenchReport::new(format!("bfs/depth-{depth}"));
    report.items = clock.done();
    report.failed = starts.len() as u64 - report.items;
    report.wall = end - clock.start();
    report.blocks = clock.blocks(end);
    report.extra.push(("threads".into(), threads.to_string()));
    report.extra.push(("edges_traversed".into(), edges.into_inner().to_string()));
    Ok((report, counts))
}
