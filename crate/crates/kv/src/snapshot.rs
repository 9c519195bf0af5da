//! Copy-on-write database state.
//!
//! A [`Snapshot`] is the complete logical content of an environment at one
//! commit point. Cloning is O(1): the tables are persistent ordered maps
//! sharing structure with their ancestors, so a writer mutates its own clone
//! while readers keep iterating the version they opened.

use std::sync::Arc;

use bytes::Bytes;
use im::{OrdMap, OrdSet};

/// Value slot under one key.
#[derive(Clone, Debug)]
pub(crate) enum Slot {
    One(Bytes),
    Many(DupSet),
}

/// Above this many values a duplicate set moves to a persistent tree.
const SMALL_DUPS: usize = 32;

/// Values under one key of a duplicate-key table, in byte order.
///
/// Most keys hold a handful of values, and a one-element `OrdSet` already
/// costs a full 64-slot node (about 2.5 KB), so small sets are a shared
/// sorted vector copied on write instead.
#[derive(Clone, Debug)]
pub(crate) enum DupSet {
    Small(Arc<Vec<Bytes>>),
    Large(OrdSet<Bytes>),
}

impl DupSet {
    pub fn single(v: Bytes) -> Self {
        DupSet::Small(Arc::new(vec![v]))
    }

    pub fn len(&self) -> usize {
        match self {
            DupSet::Small(v) => v.len(),
            DupSet::Large(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn first(&self) -> Option<&Bytes> {
        match self {
            DupSet::Small(v) => v.first(),
            DupSet::Large(s) => s.get_min(),
        }
    }

    pub fn iter(&self) -> Box<dyn Iterator<Item = &Bytes> + '_> {
        match self {
            DupSet::Small(v) => Box::new(v.iter()),
            DupSet::Large(s) => Box::new(s.iter()),
        }
    }

    /// Returns whether `value` was new.
    pub fn insert(&mut self, value: Bytes) -> bool {
        match self {
            DupSet::Small(v) => match v.binary_search(&value) {
                Ok(_) => false,
                Err(i) if v.len() < SMALL_DUPS => {
                    Arc::make_mut(v).insert(i, value);
                    true
                }
                Err(_) => {
                    let mut set: OrdSet<Bytes> = v.iter().cloned().collect();
                    set.insert(value);
                    *self = DupSet::Large(set);
                    true
                }
            },
            DupSet::Large(s) => s.insert(value).is_none(),
        }
    }

    /// Returns whether `value` was present.
    pub fn remove(&mut self, value: &Bytes) -> bool {
        match self {
            DupSet::Small(v) => match v.binary_search(value) {
                Ok(i) => {
                    Arc::make_mut(v).remove(i);
                    true
                }
                Err(_) => false,
            },
            DupSet::Large(s) => s.remove(value).is_some(),
        }
    }
}

#[derive(Clone, Debug)]
pub(crate) struct Table {
    pub name: String,
    pub dup: bool,
    pub entries: OrdMap<Bytes, Slot>,
    pub len: u64,
}

/// One logged mutation. Replaying the ops of every committed record in
/// order on an empty snapshot reproduces the committed state.
#[derive(Clone, Debug, PartialEq, Eq)]
pub(crate) enum Op {
    CreateDb { id: u32, name: String, dup: bool },
    DropDb { id: u32 },
    Put { db: u32, key: Bytes, value: Bytes },
    Del { db: u32, key: Bytes, value: Option<Bytes> },
}

#[derive(Clone, Debug, Default)]
pub(crate) struct Snapshot {
    pub version: u64,
    pub tables: OrdMap<u32, Table>,
    pub names: OrdMap<String, u32>,
    pub next_db: u32,
    pub bytes_used: u64,
}

impl Snapshot {
    pub fn table(&self, id: u32) -> Option<&Table> {
        self.tables.get(&id)
    }

    /// Applies `op`; returns whether a `Del` found something. Callers have
    /// already validated db ids, so unknown ids are ignored here.
    pub fn apply(&mut self, op: &Op) -> bool {
        match op {
            Op::CreateDb { id, name, dup } => {
                self.tables.insert(
                    *id,
                    Table {
                        name: name.clone(),
                        dup: *dup,
                        entries: OrdMap::new(),
                        len: 0,
                    },
                );
                self.names.insert(name.clone(), *id);
                self.next_db = self.next_db.max(id + 1);
                true
            }
            Op::DropDb { id } => match self.tables.remove(id) {
                Some(t) => {
                    self.names.remove(&t.name);
                    let bytes: u64 = t
                        .entries
                        .iter()
                        .map(|(k, s)| slot_bytes(k, s))
                        .sum();
                    self.bytes_used = self.bytes_used.saturating_sub(bytes);
                    true
                }
                None => false,
            },
            Op::Put { db, key, value } => {
                let Some(table) = self.tables.get_mut(db) else {
                    return false;
                };
                let mut delta_add = 0u64;
                let mut delta_sub = 0u64;
                if table.dup {
                    match table.entries.get_mut(key) {
                        Some(Slot::Many(set)) => {
                            if set.insert(value.clone()) {
                                delta_add += value.len() as u64;
                                table.len += 1;
                            }
                        }
                        _ => {
                            table
                                .entries
                                .insert(key.clone(), Slot::Many(DupSet::single(value.clone())));
                            delta_add += (key.len() + value.len()) as u64;
                            table.len += 1;
                        }
                    }
                } else {
                    match table.entries.insert(key.clone(), Slot::One(value.clone())) {
                        Some(Slot::One(old)) => delta_sub += old.len() as u64,
                        Some(Slot::Many(_)) => unreachable!("plain table holds a dup slot"),
                        None => {
                            delta_add += key.len() as u64;
                            table.len += 1;
                        }
                    }
                    delta_add += value.len() as u64;
                }
                self.bytes_used = (self.bytes_used + delta_add).saturating_sub(delta_sub);
                true
            }
            Op::Del { db, key, value } => {
                let Some(table) = self.tables.get_mut(db) else {
                    return false;
                };
                match value {
                    None => match table.entries.remove(key) {
                        Some(slot) => {
                            table.len -= slot_count(&slot);
                            self.bytes_used = self.bytes_used.saturating_sub(slot_bytes(key, &slot));
                            true
                        }
                        None => false,
                    },
                    Some(v) => {
                        let mut emptied = false;
                        let found = match table.entries.get_mut(key) {
                            Some(Slot::Many(set)) => {
                                let hit = set.remove(v);
                                emptied = set.is_empty();
                                if hit {
                                    self.bytes_used = self.bytes_used.saturating_sub(v.len() as u64);
                                }
                                hit
                            }
                            Some(Slot::One(cur)) if cur == v => {
                                emptied = true;
                                self.bytes_used = self.bytes_used.saturating_sub(v.len() as u64);
                                true
                            }
                            _ => false,
                        };
                        if found {
                            table.len -= 1;
                        }
                        if emptied {
                            table.entries.remove(key);
                            self.bytes_used = self.bytes_used.saturating_sub(key.len() as u64);
                        }
                        found
                    }
                }
            }
        }
    }
}

fn slot_count(slot: &Slot) -> u64 {
    match slot {
        Slot::One(_) => 1,
        Slot::Many(s) => s.len() as u64,
    }
}

fn slot_bytes(key: &Bytes, slot: &Slot) -> u64 {
    key.len() as u64
        + match slot {
            Slot::One(v) => v.len() as u64,
            Slot::Many(s) => s.iter().map(|v| v.len() as u64).sum(),
        }
}
