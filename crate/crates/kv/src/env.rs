use std::fs::{self, File, OpenOptions};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Arc;

use parking_lot::{Condvar, Mutex, RwLock};

use crate::error::{Error, Result};
use crate::log::CommitLog;
use crate::snapshot::Snapshot;
use crate::txn::{Db, Txn};

const LOG_FILE: &str = "data.log";
const LOCK_FILE: &str = "lock";

/// How far a commit is pushed before `commit` returns.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SyncMode {
    /// Written to the OS; survives a process kill but not a power loss.
    #[default]
    Os,
    /// `fdatasync` after every commit.
    Fsync,
}

#[derive(Clone, Debug)]
pub struct EnvConfig {
    pub max_databases: u32,
    /// Upper bound on live key+value bytes.
    pub map_size: u64,
    /// Grow `map_size` instead of failing with `StorageFull`.
    pub allow_growth: bool,
    pub sync: SyncMode,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            max_databases: 256,
            map_size: 16 << 30,
            allow_growth: false,
            sync: SyncMode::Os,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct EnvStat {
    pub version: u64,
    pub bytes_used: u64,
    pub map_size: u64,
    pub databases: usize,
    pub log_bytes: u64,
    pub log_records: u64,
    /// Bytes of incomplete commit data dropped when the log was opened.
    pub recovery_discarded: u64,
}

/// Transaction mode.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mode {
    ReadOnly,
    ReadWrite,
}

pub(crate) struct Inner {
    pub path: PathBuf,
    pub max_databases: u32,
    pub allow_growth: bool,
    pub sync: SyncMode,
    pub map_size: AtomicU64,
    pub current: RwLock<Arc<Snapshot>>,
    pub log: Mutex<Option<CommitLog>>,
    pub closed: AtomicBool,
    recovery_discarded: u64,
    writer_busy: Mutex<bool>,
    writer_cv: Condvar,
    _lock: File,
}

/// A handle on one storage environment (a directory holding the commit log
/// and a lock file). Cheap to clone and share across threads.
#[derive(Clone)]
pub struct Env {
    pub(crate) inner: Arc<Inner>,
}

impl std::fmt::Debug for Env {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Env").field("path", &self.inner.path).finish()
    }
}

impl Env {
    /// Opens (or creates) the environment at `path`, recovering the last
    /// committed state.
    pub fn open(path: impl AsRef<Path>, config: EnvConfig) -> Result<Self> {
        let path = path.as_ref().to_path_buf();
        fs::create_dir_all(&path)?;
        let lock = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path.join(LOCK_FILE))?;
        match lock.try_lock() {
            Ok(()) => {}
            Err(fs::TryLockError::WouldBlock) => return Err(Error::Locked(path)),
            Err(fs::TryLockError::Error(e)) => return Err(Error::Io(e)),
        }

        let recovered = CommitLog::open(&path.join(LOG_FILE))?;
        let mut log = recovered.log;
        let snapshot = recovered.snapshot;
        let recovery_discarded = recovered.truncated_bytes;

        let mut map_size = config.map_size;
        if snapshot.bytes_used > map_size {
            if !config.allow_growth {
                return Err(Error::IncompatibleFormat(format!(
                    "existing data ({} bytes) exceeds map size {}",
                    snapshot.bytes_used, map_size
                )));
            }
            while map_size < snapshot.bytes_used {
                map_size = map_size.saturating_mul(2).max(1);
            }
        }

        if log.records() > 1 && log.len() > 4 * snapshot.bytes_used + (64 << 20) {
            log::info!("{}: compacting commit log", path.display());
            log.rewrite(&snapshot)?;
        }

        Ok(Self {
            inner: Arc::new(Inner {
                path,
                max_databases: config.max_databases,
                allow_growth: config.allow_growth,
                sync: config.sync,
                map_size: AtomicU64::new(map_size),
                current: RwLock::new(Arc::new(snapshot)),
                log: Mutex::new(Some(log)),
                closed: AtomicBool::new(false),
                recovery_discarded,
                writer_busy: Mutex::new(false),
                writer_cv: Condvar::new(),
                _lock: lock,
            }),
        })
    }

    pub fn path(&self) -> &Path {
        &self.inner.path
    }

    /// Starts a transaction. `ReadWrite` blocks until no other writer is
    /// active; `ReadOnly` never blocks and sees the latest commit.
    pub fn begin(&self, mode: Mode) -> Result<Txn> {
        self.check_open()?;
        match mode {
            Mode::ReadOnly => {
                let snap = self.inner.current.read().clone();
                Ok(Txn::read(self.inner.clone(), snap))
            }
            Mode::ReadWrite => {
                let gate = self.acquire_writer()?;
                let snap = (**self.inner.current.read()).clone();
                Ok(Txn::write(self.inner.clone(), snap, gate))
            }
        }
    }

    pub fn begin_read(&self) -> Result<Txn> {
        self.begin(Mode::ReadOnly)
    }

    pub fn begin_write(&self) -> Result<Txn> {
        self.begin(Mode::ReadWrite)
    }

    /// Returns a handle on `name`, creating it in its own transaction if it
    /// does not exist yet.
    pub fn open_db(&self, name: &str, dup: bool) -> Result<Db> {
        if let Some(db) = self.begin_read()?.db(name)? {
            if db.is_dup() != dup {
                return Err(Error::DupFlagMismatch {
                    name: name.to_string(),
                    existing: db.is_dup(),
                });
            }
            return Ok(db);
        }
        let mut txn = self.begin_write()?;
        let db = txn.create_db(name, dup)?;
        txn.commit()?;
        Ok(db)
    }

    pub fn stat(&self) -> EnvStat {
        let snap = self.inner.current.read().clone();
        let (log_bytes, log_records) = self
            .inner
            .log
            .lock()
            .as_ref()
            .map(|l| (l.len(), l.records()))
            .unwrap_or((0, 0));
        EnvStat {
            version: snap.version,
            bytes_used: snap.bytes_used,
            map_size: self.inner.map_size.load(Ordering::Relaxed),
            databases: snap.tables.len(),
            log_bytes,
            log_records,
            recovery_discarded: self.inner.recovery_discarded,
        }
    }

    /// Rewrites the commit log to hold only the live state.
    pub fn compact(&self) -> Result<()> {
        let _gate = self.acquire_writer()?;
        let snap = self.inner.current.read().clone();
        let mut log = self.inner.log.lock();
        match log.as_mut() {
            Some(l) => l.rewrite(&snap),
            None => Err(Error::EnvClosed),
        }
    }

    /// Closes the environment. Later `begin` calls fail with `EnvClosed`;
    /// the directory lock is released once every handle is dropped.
    pub fn close(&self) {
        self.inner.closed.store(true, Ordering::SeqCst);
        {
            let _busy = self.inner.writer_busy.lock();
            self.inner.writer_cv.notify_all();
        }
    }

    pub fn is_closed(&self) -> bool {
        self.inner.closed.load(Ordering::SeqCst)
    }

    fn check_open(&self) -> Result<()> {
        if self.is_closed() {
            Err(Error::EnvClosed)
        } else {
            Ok(())
        }
    }

    fn acquire_writer(&self) -> Result<WriterGate> {
        let mut busy = self.inner.writer_busy.lock();
        while *busy {
            if self.is_closed() {
                return Err(Error::EnvClosed);
            }
            self.inner.writer_cv.wait(&mut busy);
        }
        self.check_open()?;
        *busy = true;
        Ok(WriterGate {
            inner: self.inner.clone(),
        })
    }
}

/// Held by the single active read/write transaction.
pub(crate) struct WriterGate {
    inner: Arc<Inner>,
}

impl Drop for WriterGate {
    fn drop(&mut self) {
        let mut busy = self.inner.writer_busy.lock();
        *busy = false;
        self.inner.writer_cv.notify_one();
    }
}
