use thiserror::Error;

pub type Result<T, E = RpcError> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum RpcError {
    #[error("connection refused by {0}")]
    ConnectionRefused(String),

    #[error("peer closed the connection")]
    PeerClosed,

    #[error("decode error: {0}")]
    Decode(String),

    /// The remote handler failed; carries its message.
    #[error("remote error: {0}")]
    Remote(String),

    #[error("unknown node {0}")]
    UnknownNode(usize),

    #[error("handler already registered for opcode {0:#06x}")]
    DuplicateHandler(u16),

    #[error("timed out")]
    Timeout,

    #[error("messenger shut down")]
    Shutdown,

    #[error("i/o: {0}")]
    Io(String),

    #[error("bad hostfile: {0}")]
    Hostfile(String),
}

impl From<std::io::Error> for RpcError {
    fn from(e: std::io::Error) -> Self {
        match e.kind() {
            std::io::ErrorKind::ConnectionRefused => RpcError::ConnectionRefused(e.to_string()),
            std::io::ErrorKind::UnexpectedEof
            | std::io::ErrorKind::ConnectionReset
            | std::io::ErrorKind::BrokenPipe
            | std::io::ErrorKind::ConnectionAborted => RpcError::PeerClosed,
            _ => RpcError::Io(e.to_string()),
        }
    }
}
