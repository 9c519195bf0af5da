//! Opcodes and payload layouts.
//!
//! Every payload is a flat little-endian record built with
//! [`WireWriter`]. `bytes` below means a `u32` length followed by the bytes,
//! `props` means `u32 count` then `count × (bytes name, bytes encoded value)`,
//! and `record` means `other u64 | label u8 | eid u64`.
//!
//! Shard opcodes:
//!
//! | opcode | name | request | reply |
//! |---|---|---|---|
//! | 0x10 | VERTEX_CHECK_OR_CREATE | ext bytes, label u8, props | vid u64, created u8 |
//! | 0x11 | VERTEX_LOOKUP | ext bytes | found u8, vid u64 |
//! | 0x12 | VERTEX_GET | ext bytes | found u8, vid u64, props |
//! | 0x13 | VERTEX_PROP_SET | vid u64, name bytes, value bytes | empty |
//! | 0x14 | VERTEX_PROP_GET | vid u64, name bytes | found u8, value bytes |
//! | 0x15 | VERTEX_DELETE | vid u64 | n u32, n × (src u64, eid u64), m u32, m × (tgt u64, eid u64) |
//! | 0x16 | EDGE_PURGE_OUT (one-way) | src u64, eid u64 | |
//! | 0x17 | EDGE_PURGE_IN (one-way) | tgt u64, eid u64 | |
//! | 0x18 | VERTEX_EXTERNALS | n u32, n × vid u64 | n × (found u8, ext bytes) |
//! | 0x20 | EDGE_ADD_OUT | src u64, tgt u64, label u8, props | eid u64 |
//! | 0x21 | EDGE_ADD_IN (one-way or request) | tgt u64, src u64, eid u64, label u8 | empty |
//! | 0x22 | ASYNC_HOP_TARGET | src ext, tgt ext, label u8, props | eid u64 (only when sent as a request) |
//! | 0x23 | ASYNC_HOP_SOURCE (one-way) | token u64, src ext, tgt u64, label u8, props | |
//! | 0x24 | ASYNC_HOP_INCOMING (one-way) | token u64, tgt u64, src u64, eid u64, label u8 | |
//! | 0x2F | ASYNC_HOP_FAILED (one-way) | token u64, hop u8, message bytes | |
//! | 0x25 | EDGE_GET_ALL | n u32, n × vid u64 | exec_nanos u64, n u32, n × count u32, records |
//! | 0x26 | EDGE_LIST | vid u64, direction u8, has_label u8, label u8 | n u32, records |
//! | 0x27 | EDGE_PROP_SET | eid u64, name bytes, value bytes | empty |
//! | 0x28 | EDGE_PROP_GET | eid u64, name bytes | found u8, value bytes |
//! | 0x29 | EDGE_DELETE_OUT | src u64, eid u64 | found u8 |
//! | 0x2A | EDGE_DELETE_IN | tgt u64, eid u64 | found u8 |
//! | 0x30 | LABEL_RESOLVE | name bytes | label u8 |
//! | 0x31 | LABEL_NAME | label u8 | found u8, name bytes |
//! | 0x40 | BULK_VERTICES | range_len u64, n u32, n × (ext bytes, label u8, props) | n u32, n × vid u64, range start u64, end u64 |
//! | 0x41 | BULK_EDGES | n u32, n × (owner u64, direction u8, record, props) | count u32 |
//! | 0x50 | DUMP_SHARD | empty | see [`ShardDump`](crate::ShardDump) |
//!
//! Query Manager opcodes (client → QM):
//!
//! | opcode | name | request | reply |
//! |---|---|---|---|
//! | 0x80 | QM_ADD_VERTEX | ext bytes, label bytes, props | vid u64 |
//! | 0x81 | QM_ADD_EDGE | src bytes, label bytes, tgt bytes, props, mode u8 | eid u64 |
//! | 0x82 | QM_GET_VERTEX | ext bytes | found u8, vid u64, props |
//! | 0x83 | QM_OUT_EDGES | ext bytes | n u32, records |
//! | 0x84 | QM_BFS | start bytes, depth u32, externals u8 | see [`BfsResult`](crate::BfsResult) |
//! | 0x85 | QM_DELETE_VERTEX | ext bytes | incoming u32, outgoing u32 |
//! | 0x86 | QM_DELETE_EDGE | eid u64, src bytes, tgt bytes | found u8 |
//! | 0x87 | QM_SET_VERTEX_PROP | ext bytes, name bytes, value bytes | empty |
//! | 0x88 | QM_SET_EDGE_PROP | eid u64, name bytes, value bytes | empty |
//! | 0x89 | QM_GET_EDGE_PROP | eid u64, name bytes | found u8, value bytes |
//!
//! Control opcodes (not counted): 0xFF10 SHARD_STATS, 0xFF11 NODE_SHUTDOWN.

use shardgraph_core::{EdgeId, EdgeRecord, LabelId, PropertyValue, VertexId};
use shardgraph_rpc::{RpcError, WireReader, WireWriter};

pub const VERTEX_CHECK_OR_CREATE: u16 = 0x10;
pub const VERTEX_LOOKUP: u16 = 0x11;
pub const VERTEX_GET: u16 = 0x12;
pub const VERTEX_PROP_SET: u16 = 0x13;
pub const VERTEX_PROP_GET: u16 = 0x14;
pub const VERTEX_DELETE: u16 = 0x15;
pub const EDGE_PURGE_OUT: u16 = 0x16;
pub const EDGE_PURGE_IN: u16 = 0x17;
pub const VERTEX_EXTERNALS: u16 = 0x18;
pub const EDGE_ADD_OUT: u16 = 0x20;
pub const EDGE_ADD_IN: u16 = 0x21;
pub const ASYNC_HOP_TARGET: u16 = 0x22;
pub const ASYNC_HOP_SOURCE: u16 = 0x23;
pub const ASYNC_HOP_INCOMING: u16 = 0x24;
pub const EDGE_GET_ALL: u16 = 0x25;
pub const EDGE_LIST: u16 = 0x26;
pub const EDGE_PROP_SET: u16 = 0x27;
pub const EDGE_PROP_GET: u16 = 0x28;
pub const EDGE_DELETE_OUT: u16 = 0x29;
pub const EDGE_DELETE_IN: u16 = 0x2A;
pub const ASYNC_HOP_FAILED: u16 = 0x2F;
pub const LABEL_RESOLVE: u16 = 0x30;
pub const LABEL_NAME: u16 = 0x31;
pub const BULK_VERTICES: u16 = 0x40;
pub const BULK_EDGES: u16 = 0x41;
pub const DUMP_SHARD: u16 = 0x50;

pub const QM_ADD_VERTEX: u16 = 0x80;
pub const QM_ADD_EDGE: u16 = 0x81;
pub const QM_GET_VERTEX: u16 = 0x82;
pub const QM_OUT_EDGES: u16 = 0x83;
pub const QM_BFS: u16 = 0x84;
pub const QM_DELETE_VERTEX: u16 = 0x85;
pub const QM_DELETE_EDGE: u16 = 0x86;
pub const QM_SET_VERTEX_PROP: u16 = 0x87;
pub const QM_SET_EDGE_PROP: u16 = 0x88;
pub const QM_GET_EDGE_PROP: u16 = 0x89;

pub const SHARD_STATS: u16 = 0xFF10;
pub const NODE_SHUTDOWN: u16 = 0xFF11;

pub type Props = Vec<(String, PropertyValue)>;

pub fn put_props(w: &mut WireWriter, props: &[(String, PropertyValue)]) {
    w.u32(props.len() as u32);
    for (name, value) in props {
        w.str(name).bytes(&value.encode());
    }
}

pub fn get_props(r: &mut WireReader<'_>) -> Result<Props, RpcError> {
    let n = r.u32()? as usize;
    let mut out = Vec::with_capacity(n.min(1024));
    for _ in 0..n {
        let name = r.str()?.to_string();
        out.push((name, get_value_bytes(r)?));
    }
    Ok(out)
}

pub fn put_value(w: &mut WireWriter, v: &PropertyValue) {
    w.bytes(&v.encode());
}

pub fn get_value_bytes(r: &mut WireReader<'_>) -> Result<PropertyValue, RpcError> {
    PropertyValue::decode_exact(r.bytes()?)
        .ok_or_else(|| RpcError::Decode("property value".into()))
}

pub fn put_record(w: &mut WireWriter, rec: &EdgeRecord) {
    w.u64(rec.other.raw()).u8(rec.label.0).u64(rec.edge.raw());
}

pub fn get_record(r: &mut WireReader<'_>) -> Result<EdgeRecord, RpcError> {
    Ok(EdgeRecord {
        other: VertexId::from_raw(r.u64()?),
        label: LabelId(r.u8()?),
        edge: EdgeId::from_raw(r.u64()?),
    })
}

pub fn put_records(w: &mut WireWriter, recs: &[EdgeRecord]) {
    w.u32(recs.len() as u32);
    for rec in recs {
        put_record(w, rec);
    }
}

pub fn get_records(r: &mut WireReader<'_>) -> Result<Vec<EdgeRecord>, RpcError> {
    let n = r.u32()? as usize;
    (0..n).map(|_| get_record(r)).collect()
}

pub fn get_vid(r: &mut WireReader<'_>) -> Result<VertexId, RpcError> {
    Ok(VertexId::from_raw(r.u64()?))
}

pub fn get_eid(r: &mut WireReader<'_>) -> Result<EdgeId, RpcError> {
    Ok(EdgeId::from_raw(r.u64()?))
}

pub fn get_opt_value(r: &mut WireReader<'_>) -> Result<Option<PropertyValue>, RpcError> {
    if r.bool()? {
        Ok(Some(get_value_bytes(r)?))
    } else {
        Ok(None)
    }
}

pub fn put_opt_value(w: &mut WireWriter, v: Option<&PropertyValue>) {
    match v {
        Some(v) => {
            w.u8(1);
            put_value(w, v);
        }
        None => {
            w.u8(0);
        }
    }
}

/// Out-edge lists for a bucket of vertices, as returned by `EDGE_GET_ALL`.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct EdgeLists {
    /// Time the shard spent serving the request.
    pub exec_nanos: u64,
    /// One list per requested vertex, in request order.
    pub lists: Vec<Vec<EdgeRecord>>,
}

impl EdgeLists {
    pub fn encode(&self) -> WireWriter {
        let total: usize = self.lists.iter().map(Vec::len).sum();
        let mut w = WireWriter::with_capacity(12 + 4 * self.lists.len() + 17 * total);
        w.u64(self.exec_nanos).u32(self.lists.len() as u32);
        for l in &self.lists {
            w.u32(l.len() as u32);
        }
        for l in &self.lists {
            for rec in l {
                put_record(&mut w, rec);
            }
        }
        w
    }

    pub fn decode(buf: &[u8]) -> Result<Self, RpcError> {
        let mut r = WireReader::new(buf);
        let exec_nanos = r.u64()?;
        let n = r.u32()? as usize;
        let counts: Vec<u32> = (0..n).map(|_| r.u32()).collect::<Result<_, _>>()?;
        let mut lists = Vec::with_capacity(n);
        for c in counts {
            lists.push((0..c).map(|_| get_record(&mut r)).collect::<Result<Vec<_>, _>>()?);
        }
        r.finish()?;
        Ok(Self { exec_nanos, lists })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use shardgraph_core::ShardId;

    #[test]
    fn props_roundtrip() {
        let props = vec![
            ("w".to_string(), PropertyValue::Float(1.5)),
            ("n".to_string(), PropertyValue::from("x")),
        ];
        let mut w = WireWriter::new();
        put_props(&mut w, &props);
        let b = w.finish();
        let mut r = WireReader::new(&b);
        assert_eq!(get_props(&mut r).unwrap(), props);
        r.finish().unwrap();
    }

    #[test]
    fn edge_lists_roundtrip() {
        let s = ShardId::new(1).unwrap();
        let rec = EdgeRecord {
            other: VertexId::new(LabelId(2), s, 3),
            label: LabelId(4),
            edge: EdgeId::new(s, 5),
        };
        let e = EdgeLists {
            exec_nanos: 99,
            lists: vec![vec![rec, rec], vec![], vec![rec]],
        };
        assert_eq!(EdgeLists::decode(&e.encode().finish()).unwrap(), e);
    }
}
