//! CSV input formats.
//!
//! Edge files have three columns `source,target,weight` with an optional
//! header row. Vertex files start with a header `external_id,name1,name2,...`
//! and every later row gives the external id and one value per named
//! property. Malformed rows are skipped and counted.

use std::io::{Read, Write};
use std::path::Path;

use anyhow::{Context, Result};
use shardgraph_cluster::core::PropertyValue;

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeRow {
    pub src: String,
    pub tgt: String,
    pub weight: f64,
}

impl EdgeRow {
    pub fn props(&self) -> Vec<(String, PropertyValue)> {
        vec![("weight".to_string(), PropertyValue::Float(self.weight))]
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct VertexRow {
    pub ext: String,
    pub props: Vec<(String, PropertyValue)>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Parsed<T> {
    pub rows: Vec<T>,
    pub skipped: u64,
}

impl<T> Default for Parsed<T> {
    fn default() -> Self {
        Self {
            rows: Vec::new(),
            skipped: 0,
        }
    }
}

fn reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(r)
}

pub fn parse_edges<R: Read>(r: R) -> Parsed<EdgeRow> {
    let mut out = Parsed::default();
    for (i, rec) in reader(r).records().enumerate() {
        let Ok(rec) = rec else {
            out.skipped += 1;
            continue;
        };
        let row = (rec.len() == 3).then(|| (&rec[0], &rec[1], rec[2].parse::<f64>()));
        match row {
            Some((s, t, Ok(w))) if !s.is_empty() && !t.is_empty() => out.rows.push(EdgeRow {
                src: s.to_string(),
                tgt: t.to_string(),
                weight: w,
            }),
            // a first line whose weight is not a number is the header
            Some((_, _, Err(_))) if i == 0 => {}
            _ => out.skipped += 1,
        }
    }
    out
}

pub fn parse_vertices<R: Read>(r: R) -> Result<Parsed<VertexRow>> {
    let mut out = Parsed::default();
    let mut records = reader(r).into_records();
    let header = records
        .next()
        .context("vertex file is empty")?
        .context("vertex file header")?;
    let names: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
    for rec in records {
        let rec = match rec {
            Ok(r) if r.len() == names.len() + 1 && !r[0].is_empty() => r,
            _ => {
                out.skipped += 1;
                continue;
            }
        };
        let props = names
            .iter()
            .zip(rec.iter().skip(1))
            .filter(|(_, v)| !v.is_empty())
            .map(|(n, v)| (n.clone(), PropertyValue::parse_loose(v)))
            .collect();
        out.rows.push(VertexRow {
            ext: rec[0].to_string(),
            props,
        });
    }
    Ok(out)
}

pub fn read_edges(path: &Path) -> Result<Parsed<EdgeRow>> {
    let f = std::fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    Ok(parse_edges(std::io::BufReader::new(f)))
}

pub fn read_vertices(path: &Path) -> Result<Parsed<VertexRow>> {
    let f = std::fs::File::open(path).with_context(|| format!("open {}", path.display()))?;
    parse_vertices(std::io::BufReader::new(f))
}

pub fn write_edges(path: &Path, rows: &[EdgeRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["source", "target", "weight"])?;
    for r in rows {
        w.write_record([&r.src, &r.tgt, &r.weight.to_string()])?;
    }
    w.flush()?;
    Ok(())
}

/// One external id per line; blank lines are ignored.
pub fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("read {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty())
        .map(str::to_string)
        .collect())
}

pub fn write_lines(path: &Path, lines: &[String]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for l in lines {
        writeln!(f, "{l}")?;
    }
    f.flush()?;
    Ok(())
}
