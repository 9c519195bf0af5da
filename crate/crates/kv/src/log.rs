//! On-disk commit log.
//!
//! File layout: a 16-byte header (`MAGIC`, format version, reserved) followed
//! by commit records. Each record is `len: u32 LE | crc32(body): u32 LE | body`
//! where the body is `version: u64 LE | op count: u32 LE | ops`. Recovery reads
//! records until the first short or checksum-failing one and truncates there,
//! so a torn append never survives a reopen.

use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, Read, Seek, SeekFrom, Write};
use std::path::{Path, PathBuf};

use bytes::Bytes;

use crate::error::{Error, Result};
use crate::snapshot::{Op, Snapshot};

pub(crate) const MAGIC: &[u8; 8] = b"SGKVLOG\0";
pub(crate) const FORMAT_VERSION: u32 = 1;
const HEADER_LEN: u64 = 16;
const MAX_RECORD: u32 = 1 << 30;

const OP_CREATE_DB: u8 = 1;
const OP_DROP_DB: u8 = 2;
const OP_PUT: u8 = 3;
const OP_DEL: u8 = 4;

pub(crate) struct CommitLog {
    file: File,
    path: PathBuf,
    len: u64,
    records: u64,
}

pub(crate) struct Recovered {
    pub log: CommitLog,
    pub snapshot: Snapshot,
    pub truncated_bytes: u64,
}

impl CommitLog {
    pub fn open(path: &Path) -> Result<Recovered> {
        let exists = path.exists();
        let mut file = OpenOptions::new()
            .read(true)
            .write(true)
            .create(true)
            .truncate(false)
            .open(path)?;
        let file_len = file.metadata()?.len();
        if !exists || file_len == 0 {
            write_header(&mut file)?;
            file.sync_all()?;
            return Ok(Recovered {
                log: CommitLog {
                    file,
                    path: path.to_path_buf(),
                    len: HEADER_LEN,
                    records: 0,
                },
                snapshot: Snapshot::default(),
                truncated_bytes: 0,
            });
        }
        check_header(&mut file, file_len)?;

        let mut snapshot = Snapshot::default();
        let mut reader = BufReader::with_capacity(1 << 20, &mut file);
        reader.seek(SeekFrom::Start(HEADER_LEN))?;
        let mut good = HEADER_LEN;
        let mut records = 0u64;
        let mut body = Vec::new();
        loop {
            let mut head = [0u8; 8];
            if read_full(&mut reader, &mut head)? < head.len() {
                break;
            }
            let len = u32::from_le_bytes(head[0..4].try_into().unwrap());
            let crc = u32::from_le_bytes(head[4..8].try_into().unwrap());
            if len > MAX_RECORD || good + 8 + len as u64 > file_len {
                break;
            }
            body.resize(len as usize, 0);
            if read_full(&mut reader, &mut body)? < body.len() {
                break;
            }
            if crc32fast::hash(&body) != crc {
                break;
            }
            let Ok((version, ops)) = decode_body(&body) else {
                break;
            };
            for op in &ops {
                snapshot.apply(op);
            }
            snapshot.version = version;
            good += 8 + len as u64;
            records += 1;
        }
        drop(reader);
        let truncated_bytes = file_len - good;
        if truncated_bytes > 0 {
            log::warn!(
                "{}: discarding {} bytes of incomplete commit data",
                path.display(),
                truncated_bytes
            );
            file.set_len(good)?;
            file.sync_all()?;
        }
        file.seek(SeekFrom::Start(good))?;
        Ok(Recovered {
            log: CommitLog {
                file,
                path: path.to_path_buf(),
                len: good,
                records,
            },
            snapshot,
            truncated_bytes,
        })
    }

    pub fn len(&self) -> u64 {
        self.len
    }

    pub fn records(&self) -> u64 {
        self.records
    }

    /// Appends one commit record. On failure the file is cut back to its
    /// previous length so the commit is all-or-nothing.
    pub fn append(&mut self, version: u64, ops: &[Op], sync: bool) -> Result<()> {
        let record = encode_record(version, ops);
        let res = self.file.write_all(&record).and_then(|_| {
            if sync {
                self.file.sync_data()
            } else {
                Ok(())
            }
        });
        if let Err(e) = res {
            let _ = self.file.set_len(self.len);
            let _ = self.file.seek(SeekFrom::Start(self.len));
            return Err(Error::Io(e));
        }
        self.len += record.len() as u64;
        self.records += 1;
        Ok(())
    }

    /// Rewrites the log as a single record holding `snapshot`, atomically
    /// replacing the old file.
    pub fn rewrite(&mut self, snapshot: &Snapshot) -> Result<()> {
        let tmp = self.path.with_extension("compact");
        let mut out = File::create(&tmp)?;
        write_header(&mut out)?;
        let ops = snapshot_ops(snapshot);
        let record = encode_record(snapshot.version, &ops);
        out.write_all(&record)?;
        out.sync_all()?;
        drop(out);
        fs::rename(&tmp, &self.path)?;
        if let Some(dir) = self.path.parent() {
            if let Ok(d) = File::open(dir) {
                let _ = d.sync_all();
            }
        }
        let mut file = OpenOptions::new().read(true).write(true).open(&self.path)?;
        file.seek(SeekFrom::End(0))?;
        self.file = file;
        self.len = HEADER_LEN + record.len() as u64;
        self.records = 1;
        Ok(())
    }
}

fn read_full<R: Read>(r: &mut R, buf: &mut [u8]) -> io::Result<usize> {
    let mut n = 0;
    while n < buf.len() {
        match r.read(&mut buf[n..]) {
            Ok(0) => break,
            Ok(k) => n += k,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e),
        }
    }
    Ok(n)
}

fn write_header(file: &mut File) -> io::Result<()> {
    let mut header = [0u8; HEADER_LEN as usize];
    header[..8].copy_from_slice(MAGIC);
    header[8..12].copy_from_slice(&FORMAT_VERSION.to_le_bytes());
    file.seek(SeekFrom::Start(0))?;
    file.write_all(&header)
}

fn check_header(file: &mut File, file_len: u64) -> Result<()> {
    if file_len < HEADER_LEN {
        return Err(Error::IncompatibleFormat("log header truncated".into()));
    }
    let mut header = [0u8; HEADER_LEN as usize];
    file.seek(SeekFrom::Start(0))?;
    file.read_exact(&mut header)?;
    if &header[..8] != MAGIC {
        return Err(Error::IncompatibleFormat("bad magic number".into()));
    }
    let version = u32::from_le_bytes(header[8..12].try_into().unwrap());
    if version != FORMAT_VERSION {
        return Err(Error::IncompatibleFormat(format!(
            "format version {version}, expected {FORMAT_VERSION}"
        )));
    }
    Ok(())
}

fn snapshot_ops(snapshot: &Snapshot) -> Vec<Op> {
    let mut ops = Vec::new();
    for (id, table) in snapshot.tables.iter() {
        ops.push(Op::CreateDb {
            id: *id,
            name: table.name.clone(),
            dup: table.dup,
        });
    }
    for (id, table) in snapshot.tables.iter() {
        for (key, slot) in table.entries.iter() {
            match slot {
                crate::snapshot::Slot::One(v) => ops.push(Op::Put {
                    db: *id,
                    key: key.clone(),
                    value: v.clone(),
                }),
                crate::snapshot::Slot::Many(set) => {
                    for v in set.iter() {
                        ops.push(Op::Put {
                            db: *id,
                            key: key.clone(),
                            value: v.clone(),
                        });
                    }
                }
            }
        }
    }
    ops
}

pub(crate) fn encode_record(version: u64, ops: &[Op]) -> Vec<u8> {
    let mut body = Vec::with_capacity(64);
    body.extend_from_slice(&version.to_le_bytes());
    body.extend_from_slice(&(ops.len() as u32).to_le_bytes());
    for op in ops {
        match op {
            Op::CreateDb { id, name, dup } => {
                body.push(OP_CREATE_DB);
                body.extend_from_slice(&id.to_le_bytes());
                body.push(*dup as u8);
                put_bytes(&mut body, name.as_bytes());
            }
            Op::DropDb { id } => {
                body.push(OP_DROP_DB);
                body.extend_from_slice(&id.to_le_bytes());
            }
            Op::Put { db, key, value } => {
                body.push(OP_PUT);
                body.extend_from_slice(&db.to_le_bytes());
                put_bytes(&mut body, key);
                put_bytes(&mut body, value);
            }
            Op::Del { db, key, value } => {
                body.push(OP_DEL);
                body.extend_from_slice(&db.to_le_bytes());
                put_bytes(&mut body, key);
                match value {
                    Some(v) => {
                        body.push(1);
                        put_bytes(&mut body, v);
                    }
                    None => body.push(0),
                }
            }
        }
    }
    let mut record = Vec::with_capacity(body.len() + 8);
    record.extend_from_slice(&(body.len() as u32).to_le_bytes());
    record.extend_from_slice(&crc32fast::hash(&body).to_le_bytes());
    record.extend_from_slice(&body);
    record
}

fn put_bytes(out: &mut Vec<u8>, b: &[u8]) {
    out.extend_from_slice(&(b.len() as u32).to_le_bytes());
    out.extend_from_slice(b);
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.buf.len() {
            return Err(Error::Corrupt("record body truncated".into()));
        }
        let s = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
    fn bytes(&mut self) -> Result<Bytes> {
        let n = self.u32()? as usize;
        Ok(Bytes::copy_from_slice(self.take(n)?))
    }
}

pub(crate) fn decode_body(body: &[u8]) -> Result<(u64, Vec<Op>)> {
    let mut c = Cursor { buf: body, pos: 0 };
    let version = c.u64()?;
    let n = c.u32()? as usize;
    let mut ops = Vec::with_capacity(n.min(1 << 16));
    for _ in 0..n {
        let op = match c.u8()? {
            OP_CREATE_DB => {
                let id = c.u32()?;
                let dup = c.u8()? != 0;
                let name = String::from_utf8(c.bytes()?.to_vec())
                    .map_err(|_| Error::Corrupt("database name is not utf-8".into()))?;
                Op::CreateDb { id, name, dup }
            }
            OP_DROP_DB => Op::DropDb { id: c.u32()? },
            OP_PUT => Op::Put {
                db: c.u32()?,
                key: c.bytes()?,
                value: c.bytes()?,
            },
            OP_DEL => {
                let db = c.u32()?;
                let key = c.bytes()?;
                let value = match c.u8()? {
                    0 => None,
                    _ => Some(c.bytes()?),
                };
                Op::Del { db, key, value }
            }
            t => return Err(Error::Corrupt(format!("unknown op tag {t}"))),
        };
        ops.push(op);
    }
    if c.pos != body.len() {
        return Err(Error::Corrupt("trailing bytes in record".into()));
    }
    Ok((version, ops))
}
