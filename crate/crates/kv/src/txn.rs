use std::ops::Bound;
use std::sync::atomic::Ordering;
use std::sync::Arc;

use bytes::Bytes;

use crate::env::{Inner, Mode, SyncMode, WriterGate};
use crate::error::{Error, Result};
use crate::snapshot::{Op, Slot, Snapshot, Table};

/// Handle on a named database inside an environment.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Db {
    id: u32,
    dup: bool,
    name: Arc<str>,
}

impl Db {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn is_dup(&self) -> bool {
        self.dup
    }
}

enum State {
    Read(Arc<Snapshot>),
    Write {
        work: Snapshot,
        ops: Vec<Op>,
        _gate: WriterGate,
    },
}

/// A read-only or read/write transaction.
///
/// Read-only transactions pin the snapshot that was current when they
/// began. A read/write transaction works on a private copy-on-write clone;
/// nothing it does is visible until [`Txn::commit`].
pub struct Txn {
    inner: Arc<Inner>,
    state: State,
}

pub type EntryIter<'a> = Box<dyn Iterator<Item = (Bytes, Bytes)> + 'a>;

impl Txn {
    pub(crate) fn read(inner: Arc<Inner>, snap: Arc<Snapshot>) -> Self {
        Self {
            inner,
            state: State::Read(snap),
        }
    }

    pub(crate) fn write(inner: Arc<Inner>, work: Snapshot, gate: WriterGate) -> Self {
        Self {
            inner,
            state: State::Write {
                work,
                ops: Vec::new(),
                _gate: gate,
            },
        }
    }

    pub fn mode(&self) -> Mode {
        match self.state {
            State::Read(_) => Mode::ReadOnly,
            State::Write { .. } => Mode::ReadWrite,
        }
    }

    /// Version of the commit this transaction started from.
    pub fn snapshot_version(&self) -> u64 {
        self.snap().version
    }

    fn snap(&self) -> &Snapshot {
        match &self.state {
            State::Read(s) => s,
            State::Write { work, .. } => work,
        }
    }

    fn table(&self, db: &Db) -> Result<&Table> {
        self.snap()
            .table(db.id)
            .ok_or_else(|| Error::DbNotFound(db.name.to_string()))
    }

    pub fn db(&self, name: &str) -> Result<Option<Db>> {
        let snap = self.snap();
        Ok(snap.names.get(name).map(|id| {
            let t = snap.table(*id).expect("catalog and tables agree");
            Db {
                id: *id,
                dup: t.dup,
                name: Arc::from(name),
            }
        }))
    }

    pub fn db_names(&self) -> Vec<String> {
        self.snap().names.keys().cloned().collect()
    }

    pub fn create_db(&mut self, name: &str, dup: bool) -> Result<Db> {
        if let Some(db) = self.db(name)? {
            if db.dup != dup {
                return Err(Error::DupFlagMismatch {
                    name: name.to_string(),
                    existing: db.dup,
                });
            }
            return Ok(db);
        }
        let max = self.inner.max_databases;
        let State::Write { work, ops, .. } = &mut self.state else {
            return Err(Error::ReadOnly);
        };
        if work.tables.len() as u32 >= max {
            return Err(Error::TooManyDatabases(max));
        }
        let op = Op::CreateDb {
            id: work.next_db,
            name: name.to_string(),
            dup,
        };
        let id = work.next_db;
        work.apply(&op);
        ops.push(op);
        Ok(Db {
            id,
            dup,
            name: Arc::from(name),
        })
    }

    pub fn drop_db(&mut self, db: &Db) -> Result<bool> {
        let State::Write { work, ops, .. } = &mut self.state else {
            return Err(Error::ReadOnly);
        };
        let op = Op::DropDb { id: db.id };
        let found = work.apply(&op);
        if found {
            ops.push(op);
        }
        Ok(found)
    }

    /// First value under `key` (the smallest one for duplicate-key dbs).
    pub fn get(&self, db: &Db, key: &[u8]) -> Result<Option<Bytes>> {
        Ok(match self.table(db)?.entries.get(key) {
            Some(Slot::One(v)) => Some(v.clone()),
            Some(Slot::Many(set)) => set.first().cloned(),
            None => None,
        })
    }

    /// All values under `key`, in byte order.
    pub fn dup_scan(&self, db: &Db, key: &[u8]) -> Result<Vec<Bytes>> {
        Ok(match self.table(db)?.entries.get(key) {
            Some(Slot::One(v)) => vec![v.clone()],
            Some(Slot::Many(set)) => set.iter().cloned().collect(),
            None => Vec::new(),
        })
    }

    pub fn contains(&self, db: &Db, key: &[u8]) -> Result<bool> {
        Ok(self.table(db)?.entries.contains_key(key))
    }

    /// Number of entries (duplicates counted individually).
    pub fn len(&self, db: &Db) -> Result<u64> {
        Ok(self.table(db)?.len)
    }

    pub fn key_count(&self, db: &Db) -> Result<usize> {
        Ok(self.table(db)?.entries.len())
    }

    pub fn is_empty(&self, db: &Db) -> Result<bool> {
        Ok(self.table(db)?.entries.is_empty())
    }

    /// Every `(key, value)` pair in key order, duplicates in value order.
    pub fn iter(&self, db: &Db) -> Result<EntryIter<'_>> {
        let t = self.table(db)?;
        Ok(Box::new(t.entries.iter().flat_map(|(k, s)| expand(k, s))))
    }

    /// Entries whose key starts with `prefix`.
    pub fn prefix<'a>(&'a self, db: &Db, prefix: &'a [u8]) -> Result<EntryIter<'a>> {
        let t = self.table(db)?;
        let start: Bound<&[u8]> = Bound::Included(prefix);
        Ok(Box::new(
            t.entries
                .range::<_, [u8]>((start, Bound::Unbounded))
                .take_while(move |(k, _)| k.starts_with(prefix))
                .flat_map(|(k, s)| expand(k, s)),
        ))
    }

    pub fn put(&mut self, db: &Db, key: &[u8], value: &[u8]) -> Result<()> {
        let inner = self.inner.clone();
        let State::Write { work, ops, .. } = &mut self.state else {
            return Err(Error::ReadOnly);
        };
        if work.table(db.id).is_none() {
            return Err(Error::DbNotFound(db.name.to_string()));
        }
        let need = work.bytes_used + (key.len() + value.len()) as u64;
        let limit = inner.map_size.load(Ordering::Relaxed);
        if need > limit {
            if !inner.allow_growth {
                return Err(Error::StorageFull {
                    used: work.bytes_used,
                    limit,
                });
            }
            let mut grown = limit.max(1);
            while grown < need {
                grown = grown.saturating_mul(2);
            }
            inner.map_size.fetch_max(grown, Ordering::Relaxed);
        }
        let op = Op::Put {
            db: db.id,
            key: Bytes::copy_from_slice(key),
            value: Bytes::copy_from_slice(value),
        };
        work.apply(&op);
        ops.push(op);
        Ok(())
    }

    /// Deletes `key` (all duplicates) or, with `value`, one key/value pair.
    pub fn del(&mut self, db: &Db, key: &[u8], value: Option<&[u8]>) -> Result<bool> {
        let State::Write { work, ops, .. } = &mut self.state else {
            return Err(Error::ReadOnly);
        };
        if work.table(db.id).is_none() {
            return Err(Error::DbNotFound(db.name.to_string()));
        }
        let op = Op::Del {
            db: db.id,
            key: Bytes::copy_from_slice(key),
            value: value.map(Bytes::copy_from_slice),
        };
        let found = work.apply(&op);
        if found {
            ops.push(op);
        }
        Ok(found)
    }

    /// Makes every write visible atomically. Read-only transactions simply
    /// end. If the log append fails nothing is published.
    pub fn commit(self) -> Result<()> {
        let Txn { inner, state } = self;
        let State::Write {
            mut work,
            ops,
            _gate,
        } = state
        else {
            return Ok(());
        };
        if inner.closed.load(Ordering::SeqCst) {
            return Err(Error::EnvClosed);
        }
        if ops.is_empty() {
            return Ok(());
        }
        work.version += 1;
        {
            let mut log = inner.log.lock();
            let log = log.as_mut().ok_or(Error::EnvClosed)?;
            log.append(work.version, &ops, inner.sync == SyncMode::Fsync)?;
        }
        *inner.current.write() = Arc::new(work);
        Ok(())
    }

    pub fn abort(self) {}
}

fn expand<'a>(k: &'a Bytes, s: &'a Slot) -> Box<dyn Iterator<Item = (Bytes, Bytes)> + 'a> {
    match s {
        Slot::One(v) => Box::new(std::iter::once((k.clone(), v.clone()))),
        Slot::Many(set) => Box::new(set.iter().map(move |v| (k.clone(), v.clone()))),
    }
}
