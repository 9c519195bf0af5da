use std::fmt::Write as _;
use std::net::{SocketAddr, ToSocketAddrs};
use std::path::Path;

use crate::error::{Result, RpcError};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Endpoint {
    pub node_id: usize,
    pub host: String,
    pub port: u16,
}

impl Endpoint {
    pub fn addr(&self) -> Result<SocketAddr> {
        (self.host.as_str(), self.port)
            .to_socket_addrs()
            .map_err(|e| RpcError::Io(format!("{}:{}: {e}", self.host, self.port)))?
            .next()
            .ok_or_else(|| RpcError::Io(format!("{}:{} did not resolve", self.host, self.port)))
    }
}

/// Node table: one `host port` per line, line index is the node id. Blank
/// lines and lines starting with `#` are ignored. By convention the last
/// entry is the Query Manager.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Hostfile {
    pub endpoints: Vec<Endpoint>,
}

impl Hostfile {
    pub fn parse(text: &str) -> Result<Self> {
        let mut endpoints = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let mut parts = line.split_whitespace();
            let (Some(host), Some(port), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(RpcError::Hostfile(format!("line {}: expected `host port`", lineno + 1)));
            };
            let port = port
                .parse()
                .map_err(|_| RpcError::Hostfile(format!("line {}: bad port {port:?}", lineno + 1)))?;
            endpoints.push(Endpoint {
                node_id: endpoints.len(),
                host: host.to_string(),
                port,
            });
        }
        Ok(Self { endpoints })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| RpcError::Hostfile(format!("{}: {e}", path.as_ref().display())))?;
        Self::parse(&text)
    }

    pub fn from_addrs(addrs: &[SocketAddr]) -> Self {
        Self {
            endpoints: addrs
                .iter()
                .enumerate()
                .map(|(i, a)| Endpoint {
                    node_id: i,
                    host: a.ip().to_string(),
                    port: a.port(),
                })
                .collect(),
        }
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        for e in &self.endpoints {
            let _ = writeln!(s, "{} {}", e.host, e.port);
        }
        s
    }

    pub fn len(&self) -> usize {
        self.endpoints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.endpoints.is_empty()
    }

    /// Number of shard nodes: all entries but the last.
    pub fn shard_count(&self) -> usize {
        self.endpoints.len().saturating_sub(1)
    }

    pub fn query_manager(&self) -> Option<&Endpoint> {
        self.endpoints.last()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_and_render() {
        let h = Hostfile::parse("# cluster\nlocalhost 7000\n\n127.0.0.1   7001\nqm 7100\n").unwrap();
        assert_eq!(h.len(), 3);
        assert_eq!(h.shard_count(), 2);
        assert_eq!(h.endpoints[1].node_id, 1);
        assert_eq!(h.endpoints[1].port, 7001);
        assert_eq!(h.query_manager().unwrap().host, "qm");
        assert_eq!(Hostfile::parse(&h.render()).unwrap(), h);
    }

    #[test]
    fn rejects_bad_lines() {
        assert!(Hostfile::parse("localhost").is_err());
        assert!(Hostfile::parse("localhost x").is_err());
        assert!(Hostfile::parse("a 1 2").is_err());
    }
}
