//! Shard-count independent text dump of a whole graph.
//!
//! Vertex ids and edge ids depend on placement and allocation order, so the
//! dump speaks in external ids and label names only. Each edge gets an
//! index local to its (source, label, target) group instead of its id; the
//! group is ordered by the rendered properties. Halves are matched by edge
//! id before the ids are dropped, so a broken pairing still shows up as an
//! `UNPAIRED` line.

use std::collections::{BTreeMap, HashMap};

use shardgraph_core::{EdgeId, LabelId, VertexId};

use crate::dgraph::DistributedGraph;
use crate::error::Result;
use crate::proto::Props;
use crate::server::ShardDump;

fn render_props(props: &Props) -> String {
    let mut sorted: Vec<_> = props.iter().collect();
    sorted.sort_by(|a, b| a.0.cmp(&b.0));
    sorted
        .iter()
        .map(|(k, v)| format!("{k}={v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn escape(b: &[u8]) -> String {
    String::from_utf8_lossy(b).replace(['\t', '\n'], " ")
}

/// Sorted dump lines for a set of shard dumps.
pub fn canonical_lines(dumps: &[ShardDump]) -> Vec<String> {
    let mut labels: HashMap<LabelId, String> = HashMap::new();
    labels.insert(LabelId::NONE, String::new());
    let mut ext: HashMap<VertexId, String> = HashMap::new();
    for d in dumps {
        for (l, n) in &d.labels {
            labels.insert(*l, n.clone());
        }
        for (v, e, _) in &d.vertices {
            ext.insert(*v, escape(e));
        }
    }
    let label = |l: LabelId| labels.get(&l).cloned().unwrap_or_else(|| format!("#{}", l.0));
    let name = |v: VertexId| ext.get(&v).cloned().unwrap_or_else(|| format!("?{v:?}"));

    let mut lines = Vec::new();
    for d in dumps {
        for (v, e, props) in &d.vertices {
            lines.push(format!("V\t{}\t{}\t{}", escape(e), label(v.label()), render_props(props)));
        }
    }

    let mut ins: HashMap<EdgeId, (VertexId, VertexId, LabelId)> = HashMap::new();
    for d in dumps {
        for (owner, rec) in &d.in_edges {
            ins.insert(rec.edge, (rec.other, *owner, rec.label));
        }
    }
    let mut groups: BTreeMap<(String, String, String), Vec<String>> = BTreeMap::new();
    for d in dumps {
        for (owner, rec, props) in &d.out_edges {
            match ins.remove(&rec.edge) {
                Some(half) if half == (*owner, rec.other, rec.label) => {
                    groups
                        .entry((name(*owner), label(rec.label), name(rec.other)))
                        .or_default()
                        .push(render_props(props));
                }
                _ => lines.push(format!(
                    "UNPAIRED\tout\t{}\t{}\t{}",
                    name(*owner),
                    label(rec.label),
                    name(rec.other)
                )),
            }
        }
    }
    for (_, (src, tgt, l)) in ins {
        lines.push(format!("UNPAIRED\tin\t{}\t{}\t{}", name(src), label(l), name(tgt)));
    }
    for ((s, l, t), mut props) in groups {
        props.sort();
        for (i, p) in props.into_iter().enumerate() {
            lines.push(format!("E\t{s}\t{l}\t{t}\t{i}\t{p}"));
        }
    }
    lines.sort();
    lines
}

/// Fetches every shard and renders the canonical dump.
pub fn canonical_dump(dg: &DistributedGraph) -> Result<Vec<String>> {
    let dumps = (0..dg.shard_count())
        .map(|s| dg.dump_shard(s))
        .collect::<Result<Vec<_>>>()?;
    Ok(canonical_lines(&dumps))
}

#[cfg(test)]
mod tests {
    use super::*;
    use shardgraph_core::{EdgeRecord, PropertyValue, ShardId};

    fn v(shard: u32, local: u64) -> VertexId {
        VertexId::new(LabelId::NONE, ShardId::new(shard).unwrap(), local)
    }

    fn dump_with(eid_out: u64, eid_in: u64) -> Vec<ShardDump> {
        let s0 = ShardId::new(0).unwrap();
        let (a, b) = (v(0, 1), v(1, 1));
        vec![
            ShardDump {
                labels: vec![(LabelId(1), "knows".into())],
                vertices: vec![(a, b"a".to_vec(), vec![])],
                out_edges: vec![(
                    a,
                    EdgeRecord { other: b, label: LabelId(1), edge: EdgeId::new(s0, eid_out) },
                    vec![("w".into(), PropertyValue::Float(2.0))],
                )],
                in_edges: vec![],
            },
            ShardDump {
                labels: vec![],
                vertices: vec![(b, b"b".to_vec(), vec![("n".into(), PropertyValue::Int(3))])],
                out_edges: vec![],
                in_edges: vec![(b, EdgeRecord { other: a, label: LabelId(1), edge: EdgeId::new(s0, eid_in) })],
            },
        ]
    }

    #[test]
    fn eid_values_do_not_matter() {
        let x = canonical_lines(&dump_with(5, 5));
        let y = canonical_lines(&dump_with(9, 9));
        assert_eq!(x, y);
        assert_eq!(
            x,
            vec!["E\ta\tknows\tb\t0\tw=2.0", "V\ta\t\t", "V\tb\t\tn=3"]
        );
    }

    #[test]
    fn broken_pairing_is_visible() {
        let lines = canonical_lines(&dump_with(5, 6));
        assert_eq!(lines.iter().filter(|l| l.starts_with("UNPAIRED")).count(), 2);
    }
}
