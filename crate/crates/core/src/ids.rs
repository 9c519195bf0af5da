//! Packed 64-bit identifiers.
//!
//! A vertex id is `label (8 bits) | shard (12 bits) | local counter (44 bits)`
//! and an edge id is `shard (12 bits) | local counter (52 bits)`. The shard
//! bits let any node find the owner of an id without a lookup.

use std::fmt;

pub const LABEL_BITS: u32 = 8;
pub const SHARD_BITS: u32 = 12;
pub const VERTEX_LOCAL_BITS: u32 = 64 - LABEL_BITS - SHARD_BITS;
pub const EDGE_LOCAL_BITS: u32 = 64 - SHARD_BITS;

pub const MAX_SHARDS: u32 = 1 << SHARD_BITS;
pub const MAX_VERTEX_LOCAL: u64 = (1 << VERTEX_LOCAL_BITS) - 1;
pub const MAX_EDGE_LOCAL: u64 = (1 << EDGE_LOCAL_BITS) - 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct ShardId(u16);

impl ShardId {
    pub fn new(id: u32) -> Option<Self> {
        (id < MAX_SHARDS).then_some(Self(id as u16))
    }

    pub fn get(self) -> u16 {
        self.0
    }

    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ShardId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Interned label. `LabelId::NONE` (0) marks an unlabeled vertex or edge.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Default)]
pub struct LabelId(pub u8);

impl LabelId {
    pub const NONE: LabelId = LabelId(0);
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct VertexId(u64);

impl VertexId {
    pub fn new(label: LabelId, shard: ShardId, local: u64) -> Self {
        debug_assert!(local <= MAX_VERTEX_LOCAL);
        Self(
            (label.0 as u64) << (SHARD_BITS + VERTEX_LOCAL_BITS)
                | (shard.0 as u64) << VERTEX_LOCAL_BITS
                | (local & MAX_VERTEX_LOCAL),
        )
    }

    pub fn from_raw(raw: u64) -> Self {
        Self(raw)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn label(self) -> LabelId {
        LabelId((self.0 >> (SHARD_BITS + VERTEX_LOCAL_BITS)) as u8)
    }

    pub fn shard(self) -> ShardId {
        ShardId(((self.0 >> VERTEX_LOCAL_BITS) & (MAX_SHARDS as u64 - 1)) as u16)
    }

    pub fn local(self) -> u64 {
        self.0 & MAX_VERTEX_LOCAL
    }

    pub fn to_key(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

impl fmt::Debug for VertexId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "v{}:{}:{}", self.label().0, self.shard(), self.local())
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeId(u64);

impl EdgeId {
    pub fn new(shard: ShardId, local: u64) -> Self {
        debug_assert!(local <= MAX_EDGE_LOCAL);
        Self((shard.0 as u64) << EDGE_LOCAL_BITS | (local & MAX_EDGE_LOCAL))
    }

    pub fn from_raw(raw: u64) -> Self {
        Self(raw)
    }

    pub fn raw(self) -> u64 {
        self.0
    }

    pub fn shard(self) -> ShardId {
        ShardId((self.0 >> EDGE_LOCAL_BITS) as u16)
    }

    pub fn local(self) -> u64 {
        self.0 & MAX_EDGE_LOCAL
    }

    pub fn to_key(self) -> [u8; 8] {
        self.0.to_be_bytes()
    }
}

impl fmt::Debug for EdgeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "e{}:{}", self.shard(), self.local())
    }
}

/// Block of edge ids `[start, end)` reserved on one shard.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EdgeIdRange {
    pub shard: ShardId,
    pub start: u64,
    pub end: u64,
}

impl EdgeIdRange {
    pub fn len(&self) -> u64 {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, eid: EdgeId) -> bool {
        eid.shard() == self.shard && (self.start..self.end).contains(&eid.local())
    }

    pub fn edge_id(&self, offset: u64) -> Option<EdgeId> {
        (self.start + offset < self.end).then(|| EdgeId::new(self.shard, self.start + offset))
    }
}

/// One half of an edge as stored under its owning vertex: the other
/// endpoint, the label and the edge id shared by both halves.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EdgeRecord {
    pub other: VertexId,
    pub label: LabelId,
    pub edge: EdgeId,
}

pub(crate) const EDGE_RECORD_LEN: usize = 17;

impl EdgeRecord {
    pub(crate) fn encode(&self) -> [u8; EDGE_RECORD_LEN] {
        let mut b = [0u8; EDGE_RECORD_LEN];
        b[..8].copy_from_slice(&self.other.to_key());
        b[8] = self.label.0;
        b[9..].copy_from_slice(&self.edge.to_key());
        b
    }

    pub(crate) fn decode(b: &[u8]) -> Option<Self> {
        if b.len() != EDGE_RECORD_LEN {
            return None;
        }
        Some(Self {
            other: VertexId(u64::from_be_bytes(b[..8].try_into().ok()?)),
            label: LabelId(b[8]),
            edge: EdgeId(u64::from_be_bytes(b[9..].try_into().ok()?)),
        })
    }
}
