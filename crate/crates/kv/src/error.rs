use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("incompatible format: {0}")]
    IncompatibleFormat(String),

    #[error("environment is closed")]
    EnvClosed,

    #[error("environment at {0} is locked by another process")]
    Locked(PathBuf),

    #[error("write attempted in a read-only transaction")]
    ReadOnly,

    #[error("storage full: {used} bytes used, map size is {limit}")]
    StorageFull { used: u64, limit: u64 },

    #[error("database not found: {0}")]
    DbNotFound(String),

    #[error("database {name} exists with duplicate-key flag {existing}")]
    DupFlagMismatch { name: String, existing: bool },

    #[error("maximum number of databases ({0}) reached")]
    TooManyDatabases(u32),

    #[error("corrupt log record: {0}")]
    Corrupt(String),
}
