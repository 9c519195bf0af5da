//! In-process cluster: P shard servers and a Query Manager on loopback
//! ports, each shard with its own data directory. Used by tests and the
//! benchmark harness; the nodes still talk over TCP.

use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use shardgraph_core::kv::{Env, EnvConfig};
use shardgraph_rpc::Hostfile;

use crate::dgraph::{DgraphConfig, DistributedGraph};
use crate::error::{ClusterError, Result};
use crate::qm::{ClientHandle, QueryManager};
use crate::server::{ShardConfig, ShardServer};

#[derive(Clone, Debug, Default)]
pub struct LocalConfig {
    pub shard: ShardConfig,
    pub env: EnvConfig,
    pub dgraph: DgraphConfig,
    /// Workers for the QM's pool.
    pub qm_workers: Option<usize>,
}

pub struct LocalCluster {
    hosts: Hostfile,
    shards: Vec<ShardServer>,
    envs: Vec<Env>,
    qm: QueryManager,
    dirs: Vec<PathBuf>,
}

impl std::fmt::Debug for LocalCluster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("LocalCluster").field("hosts", &self.hosts).finish()
    }
}

/// Binds `n` loopback listeners on free ports.
pub fn bind_loopback(n: usize) -> Result<Vec<TcpListener>> {
    (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0").map_err(|e| ClusterError::Invalid(format!("bind: {e}"))))
        .collect()
}

impl LocalCluster {
    /// Starts `shards` shards with data under `root/shard-K`.
    pub fn start(root: &Path, shards: usize, config: LocalConfig) -> Result<Self> {
        let listeners = bind_loopback(shards + 1)?;
        let addrs: Vec<SocketAddr> = listeners
            .iter()
            .map(|l| l.local_addr().map_err(|e| ClusterError::Invalid(e.to_string())))
            .collect::<Result<_>>()?;
        let hosts = Hostfile::from_addrs(&addrs);
        let mut listeners = listeners.into_iter();
        let mut servers = Vec::with_capacity(shards);
        let mut envs = Vec::with_capacity(shards);
        let mut dirs = Vec::with_capacity(shards);
        for k in 0..shards {
            let dir = root.join(format!("shard-{k}"));
            let env = Env::open(&dir, config.env.clone()).map_err(|e| ClusterError::Invalid(e.to_string()))?;
            let l = listeners.next().expect("one listener per node");
            let s = ShardServer::start(k, hosts.clone(), &env, config.shard.clone(), l).map_err(ClusterError::Invalid)?;
            servers.push(s);
            envs.push(env);
            dirs.push(dir);
        }
        let qm = QueryManager::start(
            hosts.clone(),
            listeners.next().expect("qm listener"),
            config.qm_workers.unwrap_or(config.shard.workers),
            config.dgraph.clone(),
        )?;
        Ok(Self {
            hosts,
            shards: servers,
            envs,
            qm,
            dirs,
        })
    }

    pub fn hosts(&self) -> &Hostfile {
        &self.hosts
    }

    pub fn shard_count(&self) -> usize {
        self.shards.len()
    }

    pub fn shard(&self, k: usize) -> &ShardServer {
        &self.shards[k]
    }

    pub fn env(&self, k: usize) -> &Env {
        &self.envs[k]
    }

    pub fn data_dir(&self, k: usize) -> &Path {
        &self.dirs[k]
    }

    pub fn query_manager(&self) -> &QueryManager {
        &self.qm
    }

    /// A fresh client-side facade talking straight to the shards.
    pub fn client(&self, config: DgraphConfig) -> Arc<DistributedGraph> {
        Arc::new(DistributedGraph::connect(self.hosts.clone(), config))
    }

    /// A client of the Query Manager.
    pub fn qm_client(&self) -> ClientHandle {
        ClientHandle::connect(self.hosts.clone())
    }

    /// Total committed write transactions across shards.
    pub fn commits(&self) -> Vec<u64> {
        self.shards.iter().map(ShardServer::commits).collect()
    }

    pub fn shutdown(self) {
        self.qm.shutdown();
        for s in &self.shards {
            s.shutdown();
        }
        for e in self.envs {
            let _ = e.close();
        }
    }
}
