//! The single-node graph store.
//!
//! A graph named `g` lives in one [`Env`] as a set of databases:
//!
//! | db              | key                 | value                              |
//! |-----------------|---------------------|------------------------------------|
//! | `g/ex2i`        | external id         | internal vertex id                 |
//! | `g/i2ex`        | internal vertex id  | external id                        |
//! | `g/vi2e`        | source vertex id    | dup: `EdgeRecord` (target, label, eid) |
//! | `g/vi2e_in`     | target vertex id    | dup: `EdgeRecord` (source, label, eid) |
//! | `g/vid2pkv`     | vertex id           | dup: property id + value           |
//! | `g/eid2pkv`     | edge id             | dup: property id + value           |
//! | `g/labels`, `g/label_names`    | label interning, both directions     |
//! | `g/props`, `g/prop_names`      | property-name interning              |
//! | `g/meta`        | counter name        | counter value                      |
//!
//! Vertex and edge ids are big-endian so key order is numeric order. With
//! [`PropertyLayout::ConcatenatedKey`] the two property databases use
//! `entity id ++ property id` as a unique key instead of duplicate values.

use std::collections::HashMap;

use shardgraph_kv::{Db, Env, Mode, Txn};

use crate::error::{GraphError, Result};
use crate::ids::{
    EdgeId, EdgeIdRange, EdgeRecord, LabelId, ShardId, VertexId, MAX_EDGE_LOCAL, MAX_VERTEX_LOCAL,
};
use crate::property::PropertyValue;

const CATALOG: &str = "graphs";
const MAX_LABELS: usize = u8::MAX as usize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum PropertyLayout {
    /// Entity id as key, `property id ++ value` as sorted duplicate values.
    #[default]
    EntityKey,
    /// `entity id ++ property id` as a unique key.
    ConcatenatedKey,
}

#[derive(Clone, Debug, Default)]
pub struct GraphConfig {
    pub property_layout: PropertyLayout,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Direction {
    Out,
    In,
}

/// Vertex to create in a bulk request.
#[derive(Clone, Debug, PartialEq)]
pub struct NewVertex {
    pub external: Vec<u8>,
    pub label: LabelId,
    pub props: Vec<(String, PropertyValue)>,
}

/// One edge half for a bulk insert. Properties are only written for
/// outgoing halves.
#[derive(Clone, Debug, PartialEq)]
pub struct BulkEdge {
    pub owner: VertexId,
    pub record: EdgeRecord,
    pub direction: Direction,
    pub props: Vec<(String, PropertyValue)>,
}

/// References a deleted vertex left behind on other vertices.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DeletedVertex {
    /// `(source, eid)` of edges that pointed at the vertex; their outgoing
    /// halves live under `source`.
    pub incoming: Vec<(VertexId, EdgeId)>,
    /// `(target, eid)` of the vertex's own outgoing edges; their incoming
    /// halves live under `target`.
    pub outgoing: Vec<(VertexId, EdgeId)>,
}

#[derive(Clone)]
struct Dbs {
    ex2i: Db,
    i2ex: Db,
    vi2e: Db,
    vi2e_in: Db,
    vid2pkv: Db,
    eid2pkv: Db,
    labels: Db,
    label_names: Db,
    props: Db,
    prop_names: Db,
    meta: Db,
}

const DB_SUFFIXES: [&str; 11] = [
    "ex2i",
    "i2ex",
    "vi2e",
    "vi2e_in",
    "vid2pkv",
    "eid2pkv",
    "labels",
    "label_names",
    "props",
    "prop_names",
    "meta",
];

/// Handle on one named graph inside an environment.
#[derive(Clone)]
pub struct GraphStore {
    env: Env,
    name: String,
    shard: ShardId,
    layout: PropertyLayout,
    dbs: Dbs,
}

impl std::fmt::Debug for GraphStore {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GraphStore")
            .field("name", &self.name)
            .field("shard", &self.shard)
            .finish()
    }
}

fn db_name(graph: &str, suffix: &str) -> String {
    format!("{graph}/{suffix}")
}

impl GraphStore {
    /// Creates graph `name`, owned by `shard`. Fails if it exists.
    pub fn create(env: &Env, name: &str, shard: ShardId, config: GraphConfig) -> Result<Self> {
        let mut txn = env.begin_write()?;
        let catalog = txn.create_db(CATALOG, false)?;
        if txn.get(&catalog, name.as_bytes())?.is_some() {
            return Err(GraphError::AlreadyExists(name.to_string()));
        }
        let concat = config.property_layout == PropertyLayout::ConcatenatedKey;
        let mut entry = shard.get().to_be_bytes().to_vec();
        entry.push(concat as u8);
        txn.put(&catalog, name.as_bytes(), &entry)?;
        let dbs = Self::create_dbs(&mut txn, name, concat)?;
        txn.commit()?;
        Ok(Self {
            env: env.clone(),
            name: name.to_string(),
            shard,
            layout: config.property_layout,
            dbs,
        })
    }

    pub fn open(env: &Env, name: &str) -> Result<Self> {
        let txn = env.begin_read()?;
        let catalog = txn
            .db(CATALOG)?
            .ok_or_else(|| GraphError::NotFound(format!("graph {name:?}")))?;
        let entry = txn
            .get(&catalog, name.as_bytes())?
            .ok_or_else(|| GraphError::NotFound(format!("graph {name:?}")))?;
        if entry.len() != 3 {
            return Err(GraphError::Corrupt(format!("catalog entry for {name:?}")));
        }
        let shard = ShardId::new(u16::from_be_bytes([entry[0], entry[1]]) as u32)
            .ok_or_else(|| GraphError::Corrupt("shard id out of range".into()))?;
        let layout = if entry[2] != 0 {
            PropertyLayout::ConcatenatedKey
        } else {
            PropertyLayout::EntityKey
        };
        let get = |suffix: &str| -> Result<Db> {
            txn.db(&db_name(name, suffix))?
                .ok_or_else(|| GraphError::Corrupt(format!("missing database {suffix}")))
        };
        let dbs = Dbs {
            ex2i: get("ex2i")?,
            i2ex: get("i2ex")?,
            vi2e: get("vi2e")?,
            vi2e_in: get("vi2e_in")?,
            vid2pkv: get("vid2pkv")?,
            eid2pkv: get("eid2pkv")?,
            labels: get("labels")?,
            label_names: get("label_names")?,
            props: get("props")?,
            prop_names: get("prop_names")?,
            meta: get("meta")?,
        };
        Ok(Self {
            env: env.clone(),
            name: name.to_string(),
            shard,
            layout,
            dbs,
        })
    }

    /// Opens `name`, creating it if absent.
    pub fn open_or_create(env: &Env, name: &str, shard: ShardId, config: GraphConfig) -> Result<Self> {
        match Self::open(env, name) {
            Ok(g) => Ok(g),
            Err(GraphError::NotFound(_)) => Self::create(env, name, shard, config),
            Err(e) => Err(e),
        }
    }

    pub fn delete(env: &Env, name: &str) -> Result<()> {
        let mut txn = env.begin_write()?;
        let catalog = txn
            .db(CATALOG)?
            .ok_or_else(|| GraphError::NotFound(format!("graph {name:?}")))?;
        if !txn.del(&catalog, name.as_bytes(), None)? {
            return Err(GraphError::NotFound(format!("graph {name:?}")));
        }
        for suffix in DB_SUFFIXES {
            if let Some(db) = txn.db(&db_name(name, suffix))? {
                txn.drop_db(&db)?;
            }
        }
        txn.commit()?;
        Ok(())
    }

    pub fn list(env: &Env) -> Result<Vec<String>> {
        let txn = env.begin_read()?;
        let Some(catalog) = txn.db(CATALOG)? else {
            return Ok(Vec::new());
        };
        let names = txn
            .iter(&catalog)?
            .map(|(k, _)| String::from_utf8_lossy(&k).into_owned())
            .collect();
        Ok(names)
    }

    fn create_dbs(txn: &mut Txn, name: &str, concat_props: bool) -> Result<Dbs> {
        let mut mk = |suffix: &str, dup: bool| txn.create_db(&db_name(name, suffix), dup);
        Ok(Dbs {
            ex2i: mk("ex2i", false)?,
            i2ex: mk("i2ex", false)?,
            vi2e: mk("vi2e", true)?,
            vi2e_in: mk("vi2e_in", true)?,
            vid2pkv: mk("vid2pkv", !concat_props)?,
            eid2pkv: mk("eid2pkv", !concat_props)?,
            labels: mk("labels", false)?,
            label_names: mk("label_names", false)?,
            props: mk("props", false)?,
            prop_names: mk("prop_names", false)?,
            meta: mk("meta", false)?,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn shard(&self) -> ShardId {
        self.shard
    }

    pub fn env(&self) -> &Env {
        &self.env
    }

    pub fn layout(&self) -> PropertyLayout {
        self.layout
    }

    pub fn begin(&self, mode: Mode) -> Result<GraphTxn<'_>> {
        let txn = self.env.begin(mode)?;
        let max_vid = read_counter(&txn, &self.dbs.meta, b"max_vid")?;
        let max_eid = read_counter(&txn, &self.dbs.meta, b"max_eid")?;
        let max_pid = read_counter(&txn, &self.dbs.meta, b"max_pid")?;
        Ok(GraphTxn {
            g: self,
            txn,
            max_vid,
            max_eid,
            max_pid,
            dirty: false,
            prop_ids: HashMap::new(),
        })
    }

    pub fn read(&self) -> Result<GraphTxn<'_>> {
        self.begin(Mode::ReadOnly)
    }

    pub fn write(&self) -> Result<GraphTxn<'_>> {
        self.begin(Mode::ReadWrite)
    }
}

fn read_counter(txn: &Txn, meta: &Db, key: &[u8]) -> Result<u64> {
    Ok(match txn.get(meta, key)? {
        Some(v) => u64::from_be_bytes(
            v[..]
                .try_into()
                .map_err(|_| GraphError::Corrupt("counter width".into()))?,
        ),
        None => 0,
    })
}

fn decode_vid(b: &[u8]) -> Result<VertexId> {
    Ok(VertexId::from_raw(u64::from_be_bytes(
        b.try_into()
            .map_err(|_| GraphError::Corrupt("vertex id width".into()))?,
    )))
}

fn decode_record(b: &[u8]) -> Result<EdgeRecord> {
    EdgeRecord::decode(b).ok_or_else(|| GraphError::Corrupt("edge record".into()))
}

/// A transaction on one graph. Counters (`max_vid`, `max_eid`) are loaded at
/// begin and persisted at commit, so they roll back with an abort.
pub struct GraphTxn<'g> {
    g: &'g GraphStore,
    txn: Txn,
    max_vid: u64,
    max_eid: u64,
    max_pid: u64,
    dirty: bool,
    prop_ids: HashMap<String, u32>,
}

impl<'g> GraphTxn<'g> {
    pub fn graph(&self) -> &'g GraphStore {
        self.g
    }

    pub fn shard(&self) -> ShardId {
        self.g.shard
    }

    pub fn mode(&self) -> Mode {
        self.txn.mode()
    }

    /// `(max_vid, max_eid)` as seen by this transaction.
    pub fn counters(&self) -> (u64, u64) {
        (self.max_vid, self.max_eid)
    }

    pub fn commit(mut self) -> Result<()> {
        if self.dirty {
            let meta = self.g.dbs.meta.clone();
            self.txn.put(&meta, b"max_vid", &self.max_vid.to_be_bytes())?;
            self.txn.put(&meta, b"max_eid", &self.max_eid.to_be_bytes())?;
            self.txn.put(&meta, b"max_pid", &self.max_pid.to_be_bytes())?;
        }
        self.txn.commit()?;
        Ok(())
    }

    pub fn abort(self) {
        self.txn.abort();
    }

    // ---- vertices ----

    pub fn vertex_id(&self, external: &[u8]) -> Result<Option<VertexId>> {
        self.txn
            .get(&self.g.dbs.ex2i, external)?
            .map(|b| decode_vid(&b))
            .transpose()
    }

    pub fn external_id(&self, v: VertexId) -> Result<Option<Vec<u8>>> {
        Ok(self.txn.get(&self.g.dbs.i2ex, &v.to_key())?.map(|b| b.to_vec()))
    }

    pub fn vertex_exists(&self, v: VertexId) -> Result<bool> {
        Ok(self.txn.contains(&self.g.dbs.i2ex, &v.to_key())?)
    }

    pub fn vertex_count(&self) -> Result<u64> {
        Ok(self.txn.len(&self.g.dbs.i2ex)?)
    }

    /// All `(internal id, external id)` pairs in id order.
    pub fn vertices(&self) -> Result<Vec<(VertexId, Vec<u8>)>> {
        self.txn
            .iter(&self.g.dbs.i2ex)?
            .map(|(k, v)| Ok((decode_vid(&k)?, v.to_vec())))
            .collect()
    }

    /// Returns the id of `external`, creating the vertex with `label` if it
    /// does not exist. The label of an existing vertex is left unchanged.
    pub fn check_or_create_vertex(&mut self, external: &[u8], label: LabelId) -> Result<VertexId> {
        Ok(self.check_or_create_vertex_flag(external, label)?.0)
    }

    /// Like [`check_or_create_vertex`](Self::check_or_create_vertex), also
    /// reporting whether the vertex was created.
    pub fn check_or_create_vertex_flag(
        &mut self,
        external: &[u8],
        label: LabelId,
    ) -> Result<(VertexId, bool)> {
        if external.is_empty() {
            return Err(GraphError::InvalidExternalId);
        }
        if let Some(v) = self.vertex_id(external)? {
            return Ok((v, false));
        }
        if self.max_vid >= MAX_VERTEX_LOCAL {
            return Err(GraphError::IdSpaceExhausted("vertex"));
        }
        self.max_vid += 1;
        self.dirty = true;
        let v = VertexId::new(label, self.g.shard, self.max_vid);
        self.txn.put(&self.g.dbs.ex2i, external, &v.to_key())?;
        self.txn.put(&self.g.dbs.i2ex, &v.to_key(), external)?;
        Ok((v, true))
    }

    fn require_local_vertex(&self, v: VertexId) -> Result<()> {
        if v.shard() != self.g.shard || !self.vertex_exists(v)? {
            return Err(GraphError::VertexNotFound(v));
        }
        Ok(())
    }

    // ---- labels ----

    pub fn label_id(&self, name: &str) -> Result<Option<LabelId>> {
        Ok(self
            .txn
            .get(&self.g.dbs.labels, name.as_bytes())?
            .and_then(|b| b.first().copied())
            .map(LabelId))
    }

    pub fn label_name(&self, id: LabelId) -> Result<Option<String>> {
        if id == LabelId::NONE {
            return Ok(Some(String::new()));
        }
        Ok(self
            .txn
            .get(&self.g.dbs.label_names, &[id.0])?
            .map(|b| String::from_utf8_lossy(&b).into_owned()))
    }

    pub fn labels(&self) -> Result<Vec<(LabelId, String)>> {
        Ok(self
            .txn
            .iter(&self.g.dbs.label_names)?
            .map(|(k, v)| (LabelId(k[0]), String::from_utf8_lossy(&v).into_owned()))
            .collect())
    }

    /// Interns `name`; ids start at 1 and are stable.
    pub fn check_or_create_label(&mut self, name: &str) -> Result<LabelId> {
        if name.is_empty() {
            return Err(GraphError::InvalidLabel(name.to_string()));
        }
        if let Some(id) = self.label_id(name)? {
            return Ok(id);
        }
        let count = self.txn.key_count(&self.g.dbs.label_names)?;
        if count >= MAX_LABELS {
            return Err(GraphError::LabelSpaceExhausted);
        }
        let id = LabelId(count as u8 + 1);
        self.txn.put(&self.g.dbs.labels, name.as_bytes(), &[id.0])?;
        self.txn.put(&self.g.dbs.label_names, &[id.0], name.as_bytes())?;
        Ok(id)
    }

    // ---- edges ----

    fn next_edge_id(&mut self) -> Result<EdgeId> {
        if self.max_eid >= MAX_EDGE_LOCAL {
            return Err(GraphError::IdSpaceExhausted("edge"));
        }
        self.max_eid += 1;
        self.dirty = true;
        Ok(EdgeId::new(self.g.shard, self.max_eid))
    }

    /// Reserves `n` edge ids on this shard.
    pub fn reserve_edge_ids(&mut self, n: u64) -> Result<EdgeIdRange> {
        let start = self.max_eid + 1;
        let end = start
            .checked_add(n)
            .filter(|&e| e - 1 <= MAX_EDGE_LOCAL)
            .ok_or(GraphError::IdSpaceExhausted("edge"))?;
        if n > 0 {
            self.max_eid = end - 1;
            self.dirty = true;
        }
        Ok(EdgeIdRange {
            shard: self.g.shard,
            start,
            end,
        })
    }

    /// Stores the outgoing half of `src -> tgt`. With `eid == None` a new id
    /// is allocated from this shard's counter.
    pub fn add_outgoing_edge(
        &mut self,
        src: VertexId,
        tgt: VertexId,
        label: LabelId,
        eid: Option<EdgeId>,
    ) -> Result<EdgeId> {
        self.require_local_vertex(src)?;
        let eid = match eid {
            Some(e) => e,
            None => self.next_edge_id()?,
        };
        let rec = EdgeRecord {
            other: tgt,
            label,
            edge: eid,
        };
        self.txn.put(&self.g.dbs.vi2e, &src.to_key(), &rec.encode())?;
        Ok(eid)
    }

    /// Stores the incoming half of `src -> tgt` under `tgt`.
    pub fn add_incoming_edge(
        &mut self,
        tgt: VertexId,
        src: VertexId,
        eid: EdgeId,
        label: LabelId,
    ) -> Result<()> {
        self.require_local_vertex(tgt)?;
        let rec = EdgeRecord {
            other: src,
            label,
            edge: eid,
        };
        self.txn.put(&self.g.dbs.vi2e_in, &tgt.to_key(), &rec.encode())?;
        Ok(())
    }

    /// Both halves of a local edge in one call.
    pub fn add_edge(&mut self, src: VertexId, tgt: VertexId, label: LabelId) -> Result<EdgeId> {
        let eid = self.add_outgoing_edge(src, tgt, label, None)?;
        self.add_incoming_edge(tgt, src, eid, label)?;
        Ok(eid)
    }

    fn edges(&self, db: &Db, v: VertexId, label: Option<LabelId>) -> Result<Vec<EdgeRecord>> {
        let mut out = Vec::new();
        for b in self.txn.dup_scan(db, &v.to_key())? {
            let r = decode_record(&b)?;
            if label.is_none_or(|l| l == r.label) {
                out.push(r);
            }
        }
        Ok(out)
    }

    pub fn out_edges(&self, v: VertexId, label: Option<LabelId>) -> Result<Vec<EdgeRecord>> {
        self.edges(&self.g.dbs.vi2e, v, label)
    }

    pub fn in_edges(&self, v: VertexId, label: Option<LabelId>) -> Result<Vec<EdgeRecord>> {
        self.edges(&self.g.dbs.vi2e_in, v, label)
    }

    /// Number of stored edge halves of one direction.
    pub fn edge_half_count(&self, direction: Direction) -> Result<u64> {
        let db = match direction {
            Direction::Out => &self.g.dbs.vi2e,
            Direction::In => &self.g.dbs.vi2e_in,
        };
        Ok(self.txn.len(db)?)
    }

    /// Every stored edge half of one direction as `(owner, record)`.
    pub fn all_edges(&self, direction: Direction) -> Result<Vec<(VertexId, EdgeRecord)>> {
        let db = match direction {
            Direction::Out => &self.g.dbs.vi2e,
            Direction::In => &self.g.dbs.vi2e_in,
        };
        self.txn
            .iter(db)?
            .map(|(k, v)| Ok((decode_vid(&k)?, decode_record(&v)?)))
            .collect()
    }

    fn remove_half(&mut self, db: &Db, owner: VertexId, eid: EdgeId) -> Result<Option<EdgeRecord>> {
        let key = owner.to_key();
        for b in self.txn.dup_scan(db, &key)? {
            let r = decode_record(&b)?;
            if r.edge == eid {
                self.txn.del(db, &key, Some(&b))?;
                return Ok(Some(r));
            }
        }
        Ok(None)
    }

    /// Removes the outgoing half stored under `src` and the edge's
    /// properties.
    pub fn delete_out_edge(&mut self, src: VertexId, eid: EdgeId) -> Result<Option<EdgeRecord>> {
        let db = self.g.dbs.vi2e.clone();
        let removed = self.remove_half(&db, src, eid)?;
        if removed.is_some() {
            self.clear_properties(Entity::Edge(eid))?;
        }
        Ok(removed)
    }

    /// Removes the incoming half stored under `tgt`.
    pub fn delete_in_edge(&mut self, tgt: VertexId, eid: EdgeId) -> Result<Option<EdgeRecord>> {
        let db = self.g.dbs.vi2e_in.clone();
        self.remove_half(&db, tgt, eid)
    }

    /// Removes whichever halves of `src -> tgt` this shard owns.
    pub fn delete_edge(&mut self, eid: EdgeId, src: VertexId, tgt: VertexId) -> Result<bool> {
        let mut found = false;
        if src.shard() == self.g.shard {
            found |= self.delete_out_edge(src, eid)?.is_some();
        }
        if tgt.shard() == self.g.shard {
            found |= self.delete_in_edge(tgt, eid)?.is_some();
        }
        Ok(found)
    }

    /// Removes the vertex, its properties, its outgoing edges with their
    /// properties and its incoming-edge list. Halves stored under other
    /// vertices are not touched; they are returned for the caller to purge.
    pub fn delete_vertex_local(&mut self, v: VertexId) -> Result<DeletedVertex> {
        let ext = self
            .external_id(v)?
            .ok_or(GraphError::VertexNotFound(v))?;
        if v.shard() != self.g.shard {
            return Err(GraphError::VertexNotFound(v));
        }
        let mut refs = DeletedVertex::default();
        for r in self.out_edges(v, None)? {
            self.clear_properties(Entity::Edge(r.edge))?;
            if r.other != v {
                refs.outgoing.push((r.other, r.edge));
            }
        }
        for r in self.in_edges(v, None)? {
            if r.other != v {
                refs.incoming.push((r.other, r.edge));
            }
        }
        let key = v.to_key();
        self.txn.del(&self.g.dbs.vi2e, &key, None)?;
        self.txn.del(&self.g.dbs.vi2e_in, &key, None)?;
        self.clear_properties(Entity::Vertex(v))?;
        self.txn.del(&self.g.dbs.ex2i, &ext, None)?;
        self.txn.del(&self.g.dbs.i2ex, &key, None)?;
        Ok(refs)
    }

    /// Single-node delete: also purges every reference held by vertices of
    /// this shard. Returns the references that live on other shards.
    pub fn delete_vertex(&mut self, v: VertexId) -> Result<DeletedVertex> {
        let refs = self.delete_vertex_local(v)?;
        let mut remote = DeletedVertex::default();
        for (src, eid) in refs.incoming {
            if src.shard() == self.g.shard {
                self.delete_out_edge(src, eid)?;
            } else {
                remote.incoming.push((src, eid));
            }
        }
        for (tgt, eid) in refs.outgoing {
            if tgt.shard() == self.g.shard {
                self.delete_in_edge(tgt, eid)?;
            } else {
                remote.outgoing.push((tgt, eid));
            }
        }
        Ok(remote)
    }

    // ---- bulk ----

    /// Check-or-creates every vertex (setting its properties) and reserves
    /// `edge_ids` edge ids.
    pub fn batch_add_vertices(
        &mut self,
        vertices: &[NewVertex],
        edge_ids: u64,
    ) -> Result<(Vec<VertexId>, EdgeIdRange)> {
        let mut ids = Vec::with_capacity(vertices.len());
        for nv in vertices {
            let v = self.check_or_create_vertex(&nv.external, nv.label)?;
            for (name, value) in &nv.props {
                self.set_vertex_property(v, name, value)?;
            }
            ids.push(v);
        }
        let range = self.reserve_edge_ids(edge_ids)?;
        Ok((ids, range))
    }

    pub fn batch_add_edges(&mut self, edges: &[BulkEdge]) -> Result<usize> {
        for e in edges {
            match e.direction {
                Direction::Out => {
                    self.add_outgoing_edge(e.owner, e.record.other, e.record.label, Some(e.record.edge))?;
                    for (name, value) in &e.props {
                        self.set_edge_property(e.record.edge, name, value)?;
                    }
                }
                Direction::In => {
                    self.add_incoming_edge(e.owner, e.record.other, e.record.edge, e.record.label)?
                }
            }
        }
        Ok(edges.len())
    }

    // ---- properties ----

    fn property_id(&self, name: &str) -> Result<Option<u32>> {
        if let Some(&id) = self.prop_ids.get(name) {
            return Ok(Some(id));
        }
        Ok(self
            .txn
            .get(&self.g.dbs.props, name.as_bytes())?
            .map(|b| u32::from_be_bytes(b[..].try_into().unwrap_or([0; 4]))))
    }

    fn intern_property(&mut self, name: &str) -> Result<u32> {
        if name.is_empty() {
            return Err(GraphError::InvalidPropertyName(name.to_string()));
        }
        if let Some(id) = self.property_id(name)? {
            return Ok(id);
        }
        if self.max_pid >= u32::MAX as u64 {
            return Err(GraphError::IdSpaceExhausted("property"));
        }
        self.max_pid += 1;
        self.dirty = true;
        let id = self.max_pid as u32;
        self.txn.put(&self.g.dbs.props, name.as_bytes(), &id.to_be_bytes())?;
        self.txn.put(&self.g.dbs.prop_names, &id.to_be_bytes(), name.as_bytes())?;
        self.prop_ids.insert(name.to_string(), id);
        Ok(id)
    }

    fn property_name(&self, id: u32) -> Result<String> {
        self.txn
            .get(&self.g.dbs.prop_names, &id.to_be_bytes())?
            .map(|b| String::from_utf8_lossy(&b).into_owned())
            .ok_or_else(|| GraphError::Corrupt(format!("unknown property id {id}")))
    }

    fn prop_db(&self, entity: Entity) -> Db {
        match entity {
            Entity::Vertex(_) => self.g.dbs.vid2pkv.clone(),
            Entity::Edge(_) => self.g.dbs.eid2pkv.clone(),
        }
    }

    fn set_property(&mut self, entity: Entity, name: &str, value: &PropertyValue) -> Result<()> {
        let pid = self.intern_property(name)?.to_be_bytes();
        let db = self.prop_db(entity);
        let key = entity.key();
        match self.g.layout {
            PropertyLayout::EntityKey => {
                for old in self.txn.dup_scan(&db, &key)? {
                    if old.starts_with(&pid) {
                        self.txn.del(&db, &key, Some(&old))?;
                    }
                }
                let mut val = pid.to_vec();
                value.encode_into(&mut val);
                self.txn.put(&db, &key, &val)?;
            }
            PropertyLayout::ConcatenatedKey => {
                let mut k = key.to_vec();
                k.extend_from_slice(&pid);
                self.txn.put(&db, &k, &value.encode())?;
            }
        }
        Ok(())
    }

    fn get_property(&self, entity: Entity, name: &str) -> Result<Option<PropertyValue>> {
        let Some(pid) = self.property_id(name)? else {
            return Ok(None);
        };
        let pid = pid.to_be_bytes();
        let db = self.prop_db(entity);
        let key = entity.key();
        let raw = match self.g.layout {
            PropertyLayout::EntityKey => self
                .txn
                .dup_scan(&db, &key)?
                .into_iter()
                .find(|v| v.starts_with(&pid))
                .map(|v| v.slice(4..)),
            PropertyLayout::ConcatenatedKey => {
                let mut k = key.to_vec();
                k.extend_from_slice(&pid);
                self.txn.get(&db, &k)?
            }
        };
        raw.map(|b| {
            PropertyValue::decode_exact(&b)
                .ok_or_else(|| GraphError::Corrupt(format!("property {name:?}")))
        })
        .transpose()
    }

    fn remove_property(&mut self, entity: Entity, name: &str) -> Result<bool> {
        let Some(pid) = self.property_id(name)? else {
            return Ok(false);
        };
        let pid = pid.to_be_bytes();
        let db = self.prop_db(entity);
        let key = entity.key();
        match self.g.layout {
            PropertyLayout::EntityKey => {
                let mut found = false;
                for old in self.txn.dup_scan(&db, &key)? {
                    if old.starts_with(&pid) {
                        found |= self.txn.del(&db, &key, Some(&old))?;
                    }
                }
                Ok(found)
            }
            PropertyLayout::ConcatenatedKey => {
                let mut k = key.to_vec();
                k.extend_from_slice(&pid);
                Ok(self.txn.del(&db, &k, None)?)
            }
        }
    }

    fn properties(&self, entity: Entity) -> Result<Vec<(String, PropertyValue)>> {
        let db = self.prop_db(entity);
        let key = entity.key();
        let raw: Vec<(u32, shardgraph_kv::Bytes)> = match self.g.layout {
            PropertyLayout::EntityKey => self
                .txn
                .dup_scan(&db, &key)?
                .into_iter()
                .filter(|v| v.len() >= 4)
                .map(|v| (u32::from_be_bytes(v[..4].try_into().unwrap()), v.slice(4..)))
                .collect(),
            PropertyLayout::ConcatenatedKey => self
                .txn
                .prefix(&db, &key)?
                .filter(|(k, _)| k.len() == 12)
                .map(|(k, v)| (u32::from_be_bytes(k[8..].try_into().unwrap()), v))
                .collect(),
        };
        let mut out = Vec::with_capacity(raw.len());
        for (pid, b) in raw {
            let name = self.property_name(pid)?;
            let value = PropertyValue::decode_exact(&b)
                .ok_or_else(|| GraphError::Corrupt(format!("property {name:?}")))?;
            out.push((name, value));
        }
        out.sort_by(|a, b| a.0.cmp(&b.0));
        Ok(out)
    }

    fn clear_properties(&mut self, entity: Entity) -> Result<()> {
        let db = self.prop_db(entity);
        let key = entity.key();
        match self.g.layout {
            PropertyLayout::EntityKey => {
                self.txn.del(&db, &key, None)?;
            }
            PropertyLayout::ConcatenatedKey => {
                let keys: Vec<_> = self.txn.prefix(&db, &key)?.map(|(k, _)| k).collect();
                for k in keys {
                    self.txn.del(&db, &k, None)?;
                }
            }
        }
        Ok(())
    }

    fn require_edge(&self, eid: EdgeId) -> Result<()> {
        if eid.shard() != self.g.shard || eid.local() == 0 || eid.local() > self.max_eid {
            return Err(GraphError::NotFound(format!("edge {eid:?}")));
        }
        Ok(())
    }

    pub fn set_vertex_property(&mut self, v: VertexId, name: &str, value: &PropertyValue) -> Result<()> {
        self.require_local_vertex(v)?;
        self.set_property(Entity::Vertex(v), name, value)
    }

    pub fn get_vertex_property(&self, v: VertexId, name: &str) -> Result<Option<PropertyValue>> {
        self.require_local_vertex(v)?;
        self.get_property(Entity::Vertex(v), name)
    }

    pub fn remove_vertex_property(&mut self, v: VertexId, name: &str) -> Result<bool> {
        self.require_local_vertex(v)?;
        self.remove_property(Entity::Vertex(v), name)
    }

    /// All properties of `v`, sorted by name.
    pub fn vertex_properties(&self, v: VertexId) -> Result<Vec<(String, PropertyValue)>> {
        self.require_local_vertex(v)?;
        self.properties(Entity::Vertex(v))
    }

    /// Edge properties live on the shard that allocated the edge id (the
    /// source shard). Ids never allocated here are `NotFound`.
    pub fn set_edge_property(&mut self, eid: EdgeId, name: &str, value: &PropertyValue) -> Result<()> {
        self.require_edge(eid)?;
        self.set_property(Entity::Edge(eid), name, value)
    }

    pub fn get_edge_property(&self, eid: EdgeId, name: &str) -> Result<Option<PropertyValue>> {
        self.require_edge(eid)?;
        self.get_property(Entity::Edge(eid), name)
    }

    pub fn remove_edge_property(&mut self, eid: EdgeId, name: &str) -> Result<bool> {
        self.require_edge(eid)?;
        self.remove_property(Entity::Edge(eid), name)
    }

    pub fn edge_properties(&self, eid: EdgeId) -> Result<Vec<(String, PropertyValue)>> {
        self.require_edge(eid)?;
        self.properties(Entity::Edge(eid))
    }
}

#[derive(Clone, Copy)]
enum Entity {
    Vertex(VertexId),
    Edge(EdgeId),
}

impl Entity {
    fn key(self) -> [u8; 8] {
        match self {
            Entity::Vertex(v) => v.to_key(),
            Entity::Edge(e) => e.to_key(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use shardgraph_kv::EnvConfig;

    fn setup(layout: PropertyLayout) -> (tempfile::TempDir, Env, GraphStore) {
        let dir = tempfile::tempdir().unwrap();
        let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
        let g = GraphStore::create(
            &env,
            "g",
            ShardId::new(0).unwrap(),
            GraphConfig {
                property_layout: layout,
            },
        )
        .unwrap();
        (dir, env, g)
    }

    #[test]
    fn first_vertex_gets_local_one() {
        let (_d, _env, g) = setup(PropertyLayout::EntityKey);
        let mut t = g.write().unwrap();
        let a = t.check_or_create_vertex(b"a", LabelId(1)).unwrap();
        assert_eq!(a.raw(), (1u64 << 56) | 1);
        assert_eq!(t.check_or_create_vertex(b"a", LabelId(2)).unwrap(), a);
        assert_eq!(t.external_id(a).unwrap().as_deref(), Some(&b"a"[..]));
        assert!(matches!(
            t.check_or_create_vertex(b"", LabelId::NONE),
            Err(GraphError::InvalidExternalId)
        ));
        t.commit().unwrap();
    }

    #[test]
    fn counters_survive_reopen_and_roll_back_on_abort() {
        let dir = tempfile::tempdir().unwrap();
        {
            let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
            let g = GraphStore::create(&env, "g", ShardId::new(3).unwrap(), GraphConfig::default())
                .unwrap();
            let mut t = g.write().unwrap();
            for i in 0..5 {
                t.check_or_create_vertex(format!("v{i}").as_bytes(), LabelId::NONE)
                    .unwrap();
            }
            t.commit().unwrap();
            let mut t = g.write().unwrap();
            t.check_or_create_vertex(b"lost", LabelId::NONE).unwrap();
            t.abort();
        }
        let env = Env::open(dir.path(), EnvConfig::default()).unwrap();
        let g = GraphStore::open(&env, "g").unwrap();
        assert_eq!(g.shard().get(), 3);
        let mut t = g.write().unwrap();
        let v = t.check_or_create_vertex(b"next", LabelId::NONE).unwrap();
        assert_eq!(v.local(), 6);
        assert_eq!(v.shard().get(), 3);
    }

    #[test]
    fn labels_are_interned_up_to_255() {
        let (_d, _env, g) = setup(PropertyLayout::EntityKey);
        let mut t = g.write().unwrap();
        assert!(matches!(
            t.check_or_create_label(""),
            Err(GraphError::InvalidLabel(_))
        ));
        for i in 1..=255u32 {
            let l = t.check_or_create_label(&format!("l{i}")).unwrap();
            assert_eq!(l.0 as u32, i);
        }
        assert_eq!(t.check_or_create_label("l7").unwrap(), LabelId(7));
        assert!(matches!(
            t.check_or_create_label("one-too-many"),
            Err(GraphError::LabelSpaceExhausted)
        ));
        assert_eq!(t.label_name(LabelId(9)).unwrap().as_deref(), Some("l9"));
        assert_eq!(t.labels().unwrap().len(), 255);
    }

    #[test]
    fn edges_and_label_filter() {
        let (_d, _env, g) = setup(PropertyLayout::EntityKey);
        let mut t = g.write().unwrap();
        let knows = t.check_or_create_label("knows").unwrap();
        let likes = t.check_or_create_label("likes").unwrap();
        let a = t.check_or_create_vertex(b"a", LabelId::NONE).unwrap();
        let b = t.check_or_create_vertex(b"b", LabelId::NONE).unwrap();
        let c = t.check_or_create_vertex(b"c", LabelId::NONE).unwrap();
        let e1 = t.add_edge(a, b, knows).unwrap();
        let e2 = t.add_edge(a, c, likes).unwrap();
        assert_ne!(e1, e2);
        assert_eq!(t.out_edges(a, None).unwrap().len(), 2);
        let k = t.out_edges(a, Some(knows)).unwrap();
        assert_eq!(k, vec![EdgeRecord { other: b, label: knows, edge: e1 }]);
        assert_eq!(
            t.in_edges(c, None).unwrap(),
            vec![EdgeRecord { other: a, label: likes, edge: e2 }]
        );
        let ghost = VertexId::new(LabelId::NONE, ShardId::new(0).unwrap(), 99);
        assert!(matches!(
            t.add_outgoing_edge(ghost, a, LabelId::NONE, None),
            Err(GraphError::VertexNotFound(_))
        ));
    }

    fn property_roundtrip(layout: PropertyLayout) {
        let (_d, _env, g) = setup(layout);
        let mut t = g.write().unwrap();
        let a = t.check_or_create_vertex(b"a", LabelId::NONE).unwrap();
        let b = t.check_or_create_vertex(b"b", LabelId::NONE).unwrap();
        t.set_vertex_property(a, "age", &PropertyValue::Int(30)).unwrap();
        t.set_vertex_property(a, "age", &PropertyValue::Int(31)).unwrap();
        t.set_vertex_property(a, "name", &"alice".into()).unwrap();
        t.set_vertex_property(b, "age", &PropertyValue::Int(5)).unwrap();
        let e = t.add_edge(a, b, LabelId::NONE).unwrap();
        t.set_edge_property(e, "weight", &PropertyValue::Float(0.5)).unwrap();
        t.commit().unwrap();

        let t = g.read().unwrap();
        assert_eq!(t.get_vertex_property(a, "age").unwrap(), Some(PropertyValue::Int(31)));
        assert_eq!(t.get_vertex_property(a, "missing").unwrap(), None);
        assert_eq!(
            t.vertex_properties(a).unwrap(),
            vec![
                ("age".to_string(), PropertyValue::Int(31)),
                ("name".to_string(), "alice".into())
            ]
        );
        assert_eq!(t.get_edge_property(e, "weight").unwrap(), Some(PropertyValue::Float(0.5)));
        let never = EdgeId::new(ShardId::new(0).unwrap(), 1000);
        assert!(matches!(t.get_edge_property(never, "weight"), Err(GraphError::NotFound(_))));
        drop(t);

        let mut t = g.write().unwrap();
        assert!(t.remove_vertex_property(a, "age").unwrap());
        assert!(!t.remove_vertex_property(a, "age").unwrap());
        assert_eq!(t.vertex_properties(a).unwrap().len(), 1);
        t.delete_out_edge(a, e).unwrap();
        assert_eq!(t.get_edge_property(e, "weight").unwrap(), None);
    }

    #[test]
    fn properties_entity_key_layout() {
        property_roundtrip(PropertyLayout::EntityKey);
    }

    #[test]
    fn properties_concatenated_key_layout() {
        property_roundtrip(PropertyLayout::ConcatenatedKey);
    }

    #[test]
    fn delete_vertex_removes_every_reference() {
        let (_d, _env, g) = setup(PropertyLayout::EntityKey);
        let mut t = g.write().unwrap();
        let a = t.check_or_create_vertex(b"a", LabelId::NONE).unwrap();
        let b = t.check_or_create_vertex(b"b", LabelId::NONE).unwrap();
        let c = t.check_or_create_vertex(b"c", LabelId::NONE).unwrap();
        t.add_edge(a, b, LabelId::NONE).unwrap();
        t.add_edge(b, c, LabelId::NONE).unwrap();
        t.add_edge(c, b, LabelId::NONE).unwrap();
        t.add_edge(b, b, LabelId::NONE).unwrap();
        t.set_vertex_property(b, "x", &PropertyValue::Int(1)).unwrap();
        let remote = t.delete_vertex(b).unwrap();
        assert_eq!(remote, DeletedVertex::default());
        assert!(!t.vertex_exists(b).unwrap());
        assert_eq!(t.vertex_id(b"b").unwrap(), None);
        assert!(t.out_edges(a, None).unwrap().is_empty());
        assert!(t.in_edges(c, None).unwrap().is_empty());
        assert!(t.out_edges(c, None).unwrap().is_empty());
        assert!(t.all_edges(Direction::Out).unwrap().is_empty());
        assert!(t.all_edges(Direction::In).unwrap().is_empty());
        // a new vertex with the same external id gets a fresh id
        let b2 = t.check_or_create_vertex(b"b", LabelId::NONE).unwrap();
        assert_ne!(b2, b);
        assert!(t.vertex_properties(b2).unwrap().is_empty());
    }

    #[test]
    fn delete_local_reports_remote_halves() {
        let (_d, _env, g) = setup(PropertyLayout::EntityKey);
        let mut t = g.write().unwrap();
        let a = t.check_or_create_vertex(b"a", LabelId::NONE).unwrap();
        let far = VertexId::new(LabelId::NONE, ShardId::new(5).unwrap(), 1);
        let out = t.add_outgoing_edge(a, far, LabelId::NONE, None).unwrap();
        let inc = EdgeId::new(ShardId::new(5).unwrap(), 7);
        t.add_incoming_edge(a, far, inc, LabelId::NONE).unwrap();
        let refs = t.delete_vertex_local(a).unwrap();
        assert_eq!(refs.incoming, vec![(far, inc)]);
        assert_eq!(refs.outgoing, vec![(far, out)]);
        assert!(matches!(t.delete_vertex_local(a), Err(GraphError::VertexNotFound(_))));
    }

    #[test]
    fn bulk_insert_uses_reserved_range() {
        let (_d, _env, g) = setup(PropertyLayout::EntityKey);
        let mut t = g.write().unwrap();
        let (ids, range) = t
            .batch_add_vertices(
                &[
                    NewVertex { external: b"x".to_vec(), label: LabelId::NONE, props: vec![("k".into(), 1i64.into())] },
                    NewVertex { external: b"y".to_vec(), label: LabelId::NONE, props: vec![] },
                    NewVertex { external: b"x".to_vec(), label: LabelId::NONE, props: vec![] },
                ],
                2,
            )
            .unwrap();
        assert_eq!(ids[0], ids[2]);
        assert_eq!(range.len(), 2);
        let eid = range.edge_id(0).unwrap();
        let rec = EdgeRecord { other: ids[1], label: LabelId::NONE, edge: eid };
        let back = EdgeRecord { other: ids[0], label: LabelId::NONE, edge: eid };
        let n = t
            .batch_add_edges(&[
                BulkEdge { owner: ids[0], record: rec, direction: Direction::Out, props: vec![("w".into(), 2.0.into())] },
                BulkEdge { owner: ids[1], record: back, direction: Direction::In, props: vec![] },
            ])
            .unwrap();
        assert_eq!(n, 2);
        assert_eq!(t.get_edge_property(eid, "w").unwrap(), Some(PropertyValue::Float(2.0)));
        let next = t.add_edge(ids[0], ids[1], LabelId::NONE).unwrap();
        assert_eq!(next.local(), range.end);
    }

    #[test]
    fn graphs_are_isolated_and_deletable() {
        let (_d, env, g) = setup(PropertyLayout::EntityKey);
        let h = GraphStore::create(&env, "h", ShardId::new(0).unwrap(), GraphConfig::default()).unwrap();
        assert!(matches!(
            GraphStore::create(&env, "g", ShardId::new(0).unwrap(), GraphConfig::default()),
            Err(GraphError::AlreadyExists(_))
        ));
        let mut t = g.write().unwrap();
        t.check_or_create_vertex(b"a", LabelId::NONE).unwrap();
        t.commit().unwrap();
        assert_eq!(h.read().unwrap().vertex_count().unwrap(), 0);
        assert_eq!(GraphStore::list(&env).unwrap(), vec!["g", "h"]);
        GraphStore::delete(&env, "g").unwrap();
        assert!(matches!(GraphStore::open(&env, "g"), Err(GraphError::NotFound(_))));
        assert_eq!(GraphStore::list(&env).unwrap(), vec!["h"]);
    }
}
