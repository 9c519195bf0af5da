//! Multi-process cluster on loopback: one `shardgraph shard` process per
//! shard and optionally a `shardgraph qm` process.

use std::net::{SocketAddr, TcpListener};
use std::path::{Path, PathBuf};
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use anyhow::{bail, Context, Result};
use shardgraph_cluster::rpc::{Hostfile, Messenger, TaskPool};

pub struct ProcessCluster {
    hosts: Hostfile,
    hostfile: PathBuf,
    children: Vec<Child>,
}

impl std::fmt::Debug for ProcessCluster {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProcessCluster").field("hosts", &self.hosts).finish()
    }
}

fn free_ports(n: usize) -> Result<Vec<SocketAddr>> {
    // Hold every listener until all ports are known so they differ.
    let ls = (0..n)
        .map(|_| TcpListener::bind("127.0.0.1:0"))
        .collect::<std::io::Result<Vec<_>>>()?;
    Ok(ls.iter().map(|l| l.local_addr()).collect::<std::io::Result<_>>()?)
}

impl ProcessCluster {
    /// Starts `shards` shard processes (and a QM when `qm` is set) with data
    /// and logs under `root`, and waits until every node answers a ping.
    pub fn spawn(bin: &Path, root: &Path, shards: usize, qm: bool, workers: usize) -> Result<Self> {
        std::fs::create_dir_all(root)?;
        let addrs = free_ports(shards + 1)?;
        let hosts = Hostfile::from_addrs(&addrs);
        let hostfile = root.join("hosts.txt");
        std::fs::write(&hostfile, hosts.render())?;
        let mut cluster = Self {
            hosts,
            hostfile,
            children: Vec::new(),
        };
        let log = |name: &str| -> Result<Stdio> { Ok(std::fs::File::create(root.join(format!("{name}.log")))?.into()) };
        for k in 0..shards {
            let child = Command::new(bin)
                .arg("shard")
                .arg("--hostfile")
                .arg(&cluster.hostfile)
                .arg("--id")
                .arg(k.to_string())
                .arg("--data")
                .arg(root.join(format!("shard-{k}")))
                .arg("--workers")
                .arg(workers.to_string())
                .stdout(Stdio::null())
                .stderr(log(&format!("shard-{k}"))?)
                .spawn()
                .with_context(|| format!("spawn shard {k}"))?;
            cluster.children.push(child);
        }
        if qm {
            let child = Command::new(bin)
                .arg("qm")
                .arg("--hostfile")
                .arg(&cluster.hostfile)
                .arg("--workers")
                .arg(workers.to_string())
                .stdout(Stdio::null())
                .stderr(log("qm")?)
                .spawn()
                .context("spawn qm")?;
            cluster.children.push(child);
        }
        let nodes = if qm { shards + 1 } else { shards };
        cluster.wait_ready(nodes, Duration::from_secs(30))?;
        Ok(cluster)
    }

    fn wait_ready(&mut self, nodes: usize, timeout: Duration) -> Result<()> {
        let m = Messenger::new(None, self.hosts.clone(), TaskPool::start(1));
        let deadline = Instant::now() + timeout;
        let mut ready = 0;
        while ready < nodes {
            if m.ping(ready).is_ok() {
                ready += 1;
                continue;
            }
            for c in &mut self.children {
                if let Some(status) = c.try_wait()? {
                    m.shutdown();
                    bail!("node exited during startup: {status}");
                }
            }
            if Instant::now() > deadline {
                m.shutdown();
                bail!("node {ready} not reachable after {timeout:?}");
            }
            std::thread::sleep(Duration::from_millis(20));
        }
        m.shutdown();
        m.pool().shutdown();
        Ok(())
    }

    pub fn hosts(&self) -> &Hostfile {
        &self.hosts
    }

    pub fn hostfile(&self) -> &Path {
        &self.hostfile
    }

    /// Asks every node to stop and waits for the processes.
    pub fn stop(mut self) -> Result<()> {
        let m = Messenger::new(None, self.hosts.clone(), TaskPool::start(1));
        for n in 0..self.hosts.len() {
            let _ = m.call_timeout(n, shardgraph_cluster::proto::NODE_SHUTDOWN, Vec::new(), Duration::from_secs(5));
        }
        m.shutdown();
        m.pool().shutdown();
        let deadline = Instant::now() + Duration::from_secs(20);
        for c in &mut self.children {
            loop {
                if c.try_wait()?.is_some() {
                    break;
                }
                if Instant::now() > deadline {
                    let _ = c.kill();
                    let _ = c.wait();
                    break;
                }
                std::thread::sleep(Duration::from_millis(20));
            }
        }
        self.children.clear();
        Ok(())
    }
}

impl Drop for ProcessCluster {
    fn drop(&mut self) {
        for c in &mut self.children {
            let _ = c.kill();
            let _ = c.wait();
        }
    }
}
