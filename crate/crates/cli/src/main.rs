use std::io::Write;
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use shardgraph_cluster::canon::canonical_dump;
use shardgraph_cluster::core::kv::{Env, EnvConfig, SyncMode};
use shardgraph_cluster::core::PropertyLayout;
use shardgraph_cluster::rpc::Hostfile;
use shardgraph_cluster::{
    ClientHandle, DgraphConfig, DistributedGraph, QueryManager, ShardConfig, ShardServer,
    DEFAULT_GRAPH,
};
use shardgraph_cli::csvio;
use shardgraph_cli::gen::{generate_edges, GenSpec};
use shardgraph_cli::load::{self, BfsTarget, LoadMode, LoadOptions};
use shardgraph_cli::report::{BenchReport, DEFAULT_BLOCK};

#[derive(Parser)]
#[command(name = "shardgraph", version, about = "Sharded property graph database")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone)]
struct ClusterArgs {
    /// One `host port` per line: shards first, Query Manager last.
    #[arg(long)]
    hostfile: PathBuf,
}

impl ClusterArgs {
    fn hosts(&self) -> Result<Hostfile> {
        Hostfile::load(&self.hostfile).with_context(|| format!("hostfile {}", self.hostfile.display()))
    }
}

#[derive(Args, Clone)]
struct ReportArgs {
    /// Also write the report as `key value` lines to this file.
    #[arg(long)]
    report: Option<PathBuf>,
    /// Items per reporting block.
    #[arg(long, default_value_t = DEFAULT_BLOCK)]
    block: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum Layout {
    Entity,
    Concat,
}

#[derive(Subcommand)]
enum Cmd {
    /// Run one shard process.
    Shard {
        #[command(flatten)]
        cluster: ClusterArgs,
        /// This shard's line in the hostfile (from 0).
        #[arg(long)]
        id: usize,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, value_enum, default_value_t = Layout::Entity)]
        layout: Layout,
        /// fsync every commit.
        #[arg(long)]
        fsync: bool,
    },
    /// Run the Query Manager.
    Qm {
        #[command(flatten)]
        cluster: ClusterArgs,
        #[arg(long)]
        workers: Option<usize>,
        #[arg(long, default_value_t = shardgraph_cluster::DEFAULT_VERTEX_CACHE)]
        cache: usize,
    },
    /// Bulk-load a vertex CSV through the firehose.
    LoadVertices {
        #[command(flatten)]
        cluster: ClusterArgs,
        file: PathBuf,
        #[arg(long, default_value_t = shardgraph_cluster::DEFAULT_BATCH)]
        batch: usize,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Load an edge CSV.
    LoadEdges {
        #[command(flatten)]
        cluster: ClusterArgs,
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = LoadMode::Firehose)]
        mode: LoadMode,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[arg(long, default_value_t = shardgraph_cluster::DEFAULT_BATCH)]
        batch: usize,
        /// Skip the final acknowledgement of sync/async inserts.
        #[arg(long)]
        no_confirm: bool,
        /// Outstanding async inserts per thread.
        #[arg(long, default_value_t = 256)]
        window: usize,
        /// Disable the client vertex cache.
        #[arg(long)]
        no_cache: bool,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Fixed-depth BFS from every start vertex listed in a file.
    Bfs {
        #[command(flatten)]
        cluster: ClusterArgs,
        #[arg(long)]
        depth: u32,
        /// One external id per line.
        #[arg(long)]
        starts: PathBuf,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        /// Run the traversal here instead of on the Query Manager.
        #[arg(long)]
        direct: bool,
        /// Print visited counts per start.
        #[arg(long)]
        counts: bool,
        #[command(flatten)]
        report: ReportArgs,
    },
    /// Print the whole graph in canonical sorted form.
    Dump {
        #[command(flatten)]
        cluster: ClusterArgs,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Query one vertex through the Query Manager.
    Get {
        #[command(flatten)]
        cluster: ClusterArgs,
        ext: String,
    },
    /// Per-shard statistics and message counters.
    Stats {
        #[command(flatten)]
        cluster: ClusterArgs,
        /// Zero the message counters afterwards.
        #[arg(long)]
        reset: bool,
    },
    /// Ask every node in the hostfile to exit.
    Stop {
        #[command(flatten)]
        cluster: ClusterArgs,
    },
    /// Write a synthetic edge CSV.
    GenEdges {
        #[arg(long, default_value_t = 100_000)]
        vertices: u64,
        #[arg(long, default_value_t = 100_000)]
        edges: u64,
        /// 1 is uniform; larger values skew sources towards few vertices.
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Crash-test workload: numbered write transactions on one store.
    #[command(hide = true)]
    DurabilityWriter {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 1000)]
        txns: u64,
    },
}

fn emit(report: &BenchReport, args: &ReportArgs) -> Result<()> {
    print!("{}", report.render_text());
    if let Some(p) = &args.report {
        report.write_metrics(p).with_context(|| format!("write {}", p.display()))?;
    }
    Ok(())
}

fn proxy(cluster: &ClusterArgs, cache: bool) -> Result<Arc<DistributedGraph>> {
    let config = DgraphConfig {
        vertex_cache: if cache { shardgraph_cluster::DEFAULT_VERTEX_CACHE } else { 0 },
    };
    Ok(Arc::new(DistributedGraph::connect(cluster.hosts()?, config)))
}

fn listener_for(hosts: &Hostfile, node: usize) -> Result<TcpListener> {
    let ep = hosts.endpoints.get(node).with_context(|| format!("node {node} not in hostfile"))?;
    let addr = ep.addr()?;
    // listen on every interface for the configured port
    let any = std::net::SocketAddr::new(
        if addr.ip().is_loopback() { addr.ip() } else { std::net::Ipv4Addr::UNSPECIFIED.into() },
        addr.port(),
    );
    TcpListener::bind(any).with_context(|| format!("bind {any}"))
}

fn serve_shard(cluster: &ClusterArgs, id: usize, data: &Path, workers: Option<usize>, layout: Layout, fsync: bool) -> Result<()> {
    let hosts = cluster.hosts()?;
    let env = Env::open(
        data,
        EnvConfig {
            sync: if fsync { SyncMode::Fsync } else { SyncMode::Os },
            allow_growth: true,
            ..Default::default()
        },
    )
    .with_context(|| format!("open {}", data.display()))?;
    let config = ShardConfig {
        graph: DEFAULT_GRAPH.to_string(),
        layout: match layout {
            Layout::Entity => PropertyLayout::EntityKey,
            Layout::Concat => PropertyLayout::ConcatenatedKey,
        },
        workers: workers.unwrap_or_else(shardgraph_cluster::rpc::runtime::configured_workers),
    };
    let listener = listener_for(&hosts, id)?;
    let server = ShardServer::start(id, hosts, &env, config, listener).map_err(anyhow::Error::msg)?;
    log::info!("shard {id} serving");
    server.wait();
    server.shutdown();
    env.close();
    Ok(())
}

fn main() -> Result<()> {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.cmd {
        Cmd::Shard { cluster, id, data, workers, layout, fsync } => serve_shard(&cluster, id, &data, workers, layout, fsync)?,
        Cmd::Qm { cluster, workers, cache } => {
            let hosts = cluster.hosts()?;
            let l = listener_for(&hosts, hosts.len().saturating_sub(1))?;
            let workers = workers.unwrap_or_else(shardgraph_cluster::rpc::runtime::configured_workers);
            let qm = QueryManager::start(hosts, l, workers, DgraphConfig { vertex_cache: cache })?;
            log::info!("query manager serving");
            qm.wait();
        }
        Cmd::LoadVertices { cluster, file, batch, threads, report } => {
            let parsed = csvio::read_vertices(&file)?;
            let dg = proxy(&cluster, true)?;
            let opts = LoadOptions {
                batch,
                threads,
                block_size: report.block,
                ..Default::default()
            };
            let mut r = load::load_vertices(&dg, &parsed.rows, &opts)?;
            r.skipped = parsed.skipped;
            emit(&r, &report)?;
        }
        Cmd::LoadEdges { cluster, file, mode, threads, batch, no_confirm, window, no_cache, report } => {
            let parsed = csvio::read_edges(&file)?;
            let dg = proxy(&cluster, !no_cache)?;
            let opts = LoadOptions {
                mode,
                threads,
                batch,
                use_cache: !no_cache,
                confirm: !no_confirm,
                window,
                block_size: report.block,
                count_messages: true,
            };
            let mut r = load::load_edges(&dg, &parsed.rows, &opts)?;
            r.skipped = parsed.skipped;
            emit(&r, &report)?;
        }
        Cmd::Bfs { cluster, depth, starts, threads, direct, counts, report } => {
            let starts = csvio::read_lines(&starts)?;
            let target = if direct {
                BfsTarget::Direct(proxy(&cluster, true)?)
            } else {
                BfsTarget::QueryManager(ClientHandle::connect(cluster.hosts()?))
            };
            let (r, visited) = load::run_bfs(&target, &starts, depth, threads)?;
            emit(&r, &report)?;
            if counts {
                let mut out = std::io::stdout().lock();
                for (s, n) in starts.iter().zip(visited) {
                    match n {
                        Some(n) => writeln!(out, "{s}\t{n}")?,
                        None => writeln!(out, "{s}\terror")?,
                    }
                }
            }
        }
        Cmd::Dump { cluster, out } => {
            let dg = proxy(&cluster, false)?;
            let lines = canonical_dump(&dg)?;
            match out {
                Some(p) => csvio::write_lines(&p, &lines)?,
                None => {
                    let mut o = std::io::stdout().lock();
                    for l in lines {
                        writeln!(o, "{l}")?;
                    }
                }
            }
        }
        Cmd::Get { cluster, ext } => {
            let c = ClientHandle::connect(cluster.hosts()?);
            match c.get_vertex(ext.as_bytes())? {
                Some((v, props)) => {
                    println!("{ext}\t{v:?}");
                    for (k, val) in props {
                        println!("  {k} = {val}");
                    }
                    for e in c.out_edges(ext.as_bytes())? {
                        println!("  -> {:?} label {} edge {:?}", e.other, e.label.0, e.edge);
                    }
                }
                None => bail!("vertex {ext:?} not found"),
            }
        }
        Cmd::Stats { cluster, reset } => {
            let dg = proxy(&cluster, false)?;
            for s in 0..dg.shard_count() {
                let st = dg.stats(s)?;
                let c = dg.messenger().remote_counters(s)?;
                println!(
                    "shard {s}: vertices {} out {} in {} commits {} sent {} received {}",
                    st.vertices,
                    st.out_halves,
                    st.in_halves,
                    st.commits,
                    c.total_sent(),
                    c.total_received()
                );
            }
            if reset {
                dg.reset_counters()?;
            }
        }
        Cmd::Stop { cluster } => {
            proxy(&cluster, false)?.shutdown_nodes();
        }
        Cmd::GenEdges { vertices, edges, skew, seed, out } => {
            let rows = generate_edges(&GenSpec {
                vertices,
                edges,
                src_skew: skew,
                tgt_skew: 1.0,
                seed,
            });
            csvio::write_edges(&out, &rows)?;
        }
        Cmd::DurabilityWriter { data, txns } => {
            let mut out = std::io::stdout().lock();
            shardgraph_cli::durability::run_writer(&data, txns, &mut out)?;
        }
    }
    Ok(())
}
