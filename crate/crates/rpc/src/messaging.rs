//! Framed request/response messaging over TCP.
//!
//! Frame layout (all little-endian):
//!
//! ```text
//! length u32 | opcode u16 | request_id u64 | flags u8 | payload
//! ```
//!
//! `length` counts every byte after itself. Flags: 0 request, 1 response,
//! 2 one-way, 3 error response (payload is a UTF-8 message). One connection
//! is kept per (caller, callee) pair and multiplexed by request id; each
//! connection has a reader thread that completes pending calls and turns
//! incoming requests into pool tasks.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufReader, Read, Write};
use std::net::{Shutdown, SocketAddr, TcpListener, TcpStream, ToSocketAddrs};
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::mpsc;
use std::sync::{Arc, Weak};
use std::time::{Duration, Instant};

use bytes::Bytes;
use parking_lot::{Condvar, Mutex, RwLock};

use crate::codec::{WireReader, WireWriter};
use crate::error::{Result, RpcError};
use crate::hostfile::Hostfile;
use crate::runtime::TaskPool;

pub const HEADER_LEN: usize = 2 + 8 + 1;
pub const MAX_FRAME: usize = 256 << 20;

/// Opcodes at or above this value are control traffic and are not counted.
pub const CONTROL_BASE: u16 = 0xFF00;
pub const OP_PING: u16 = 0xFF00;
pub const OP_COUNTERS: u16 = 0xFF01;
pub const OP_COUNTERS_RESET: u16 = 0xFF02;

const CONNECT_TIMEOUT: Duration = Duration::from_secs(5);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u8)]
pub enum FrameKind {
    Request = 0,
    Response = 1,
    OneWay = 2,
    Error = 3,
}

impl FrameKind {
    fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            0 => FrameKind::Request,
            1 => FrameKind::Response,
            2 => FrameKind::OneWay,
            3 => FrameKind::Error,
            _ => return None,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Frame {
    pub opcode: u16,
    pub request_id: u64,
    pub kind: FrameKind,
    pub payload: Bytes,
}

impl Frame {
    pub fn encode(&self) -> Vec<u8> {
        let len = HEADER_LEN + self.payload.len();
        let mut out = Vec::with_capacity(4 + len);
        out.extend_from_slice(&(len as u32).to_le_bytes());
        out.extend_from_slice(&self.opcode.to_le_bytes());
        out.extend_from_slice(&self.request_id.to_le_bytes());
        out.push(self.kind as u8);
        out.extend_from_slice(&self.payload);
        out
    }

    /// Reads one frame. `Ok(None)` means the stream ended cleanly between
    /// frames.
    pub fn read_from(r: &mut impl Read) -> Result<Option<Frame>> {
        let mut len = [0u8; 4];
        match r.read_exact(&mut len[..1]) {
            Ok(()) => {}
            Err(e) if e.kind() == std::io::ErrorKind::UnexpectedEof => return Ok(None),
            Err(e) => return Err(e.into()),
        }
        r.read_exact(&mut len[1..])?;
        let len = u32::from_le_bytes(len) as usize;
        if !(HEADER_LEN..=MAX_FRAME).contains(&len) {
            return Err(RpcError::Decode(format!("frame length {len}")));
        }
        let mut body = vec![0u8; len];
        r.read_exact(&mut body)?;
        let opcode = u16::from_le_bytes([body[0], body[1]]);
        let request_id = u64::from_le_bytes(body[2..10].try_into().expect("sized"));
        let kind = FrameKind::from_u8(body[10])
            .ok_or_else(|| RpcError::Decode(format!("frame flags {}", body[10])))?;
        let payload = Bytes::from(body).slice(HEADER_LEN..);
        Ok(Some(Frame {
            opcode,
            request_id,
            kind,
            payload,
        }))
    }
}

/// Frames sent and received per opcode since the last reset.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct MessageCounters {
    pub sent: BTreeMap<u16, u64>,
    pub received: BTreeMap<u16, u64>,
}

impl MessageCounters {
    pub fn sent(&self, opcode: u16) -> u64 {
        self.sent.get(&opcode).copied().unwrap_or(0)
    }

    pub fn received(&self, opcode: u16) -> u64 {
        self.received.get(&opcode).copied().unwrap_or(0)
    }

    pub fn total_sent(&self) -> u64 {
        self.sent.values().sum()
    }

    pub fn total_received(&self) -> u64 {
        self.received.values().sum()
    }

    /// Adds `other` into `self`.
    pub fn merge(&mut self, other: &MessageCounters) {
        for (op, n) in &other.sent {
            *self.sent.entry(*op).or_default() += n;
        }
        for (op, n) in &other.received {
            *self.received.entry(*op).or_default() += n;
        }
    }

    pub fn encode(&self) -> Bytes {
        let mut w = WireWriter::new();
        for map in [&self.sent, &self.received] {
            w.u32(map.len() as u32);
            for (op, n) in map {
                w.u16(*op).u64(*n);
            }
        }
        w.finish()
    }

    pub fn decode(buf: &[u8]) -> Result<Self> {
        let mut r = WireReader::new(buf);
        let mut maps = [BTreeMap::new(), BTreeMap::new()];
        for map in &mut maps {
            for _ in 0..r.u32()? {
                let op = r.u16()?;
                map.insert(op, r.u64()?);
            }
        }
        r.finish()?;
        let [sent, received] = maps;
        Ok(Self { sent, received })
    }
}

enum HandleState {
    Pending(Option<(mpsc::Sender<u64>, u64)>),
    Done(Result<Bytes>),
}

struct HandleInner {
    request_id: u64,
    state: Mutex<HandleState>,
    cv: Condvar,
}

/// Completion of an outstanding call. Moves from pending to ready or failed
/// exactly once.
#[derive(Clone)]
pub struct CompletionHandle {
    inner: Arc<HandleInner>,
}

impl std::fmt::Debug for CompletionHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CompletionHandle")
            .field("request_id", &self.inner.request_id)
            .field("ready", &self.is_ready())
            .finish()
    }
}

impl CompletionHandle {
    fn pending(request_id: u64) -> Self {
        Self {
            inner: Arc::new(HandleInner {
                request_id,
                state: Mutex::new(HandleState::Pending(None)),
                cv: Condvar::new(),
            }),
        }
    }

    /// A handle that is already complete.
    pub fn completed(result: Result<Bytes>) -> Self {
        let h = Self::pending(0);
        h.complete(result);
        h
    }

    pub fn request_id(&self) -> u64 {
        self.inner.request_id
    }

    /// Completes the handle; returns false if it was already complete.
    pub fn complete(&self, result: Result<Bytes>) -> bool {
        let mut st = self.inner.state.lock();
        let HandleState::Pending(notify) = &mut *st else {
            return false;
        };
        let notify = notify.take();
        *st = HandleState::Done(result);
        drop(st);
        self.inner.cv.notify_all();
        if let Some((tx, tag)) = notify {
            let _ = tx.send(tag);
        }
        true
    }

    /// True once ready or failed.
    pub fn is_ready(&self) -> bool {
        matches!(*self.inner.state.lock(), HandleState::Done(_))
    }

    pub fn try_result(&self) -> Option<Result<Bytes>> {
        match &*self.inner.state.lock() {
            HandleState::Done(r) => Some(r.clone()),
            HandleState::Pending(_) => None,
        }
    }

    pub fn wait(&self) -> Result<Bytes> {
        let mut st = self.inner.state.lock();
        loop {
            if let HandleState::Done(r) = &*st {
                return r.clone();
            }
            self.inner.cv.wait(&mut st);
        }
    }

    pub fn wait_timeout(&self, timeout: Duration) -> Result<Bytes> {
        let deadline = Instant::now() + timeout;
        let mut st = self.inner.state.lock();
        loop {
            if let HandleState::Done(r) = &*st {
                return r.clone();
            }
            if self.inner.cv.wait_until(&mut st, deadline).timed_out() {
                if let HandleState::Done(r) = &*st {
                    return r.clone();
                }
                return Err(RpcError::Timeout);
            }
        }
    }

    fn set_notify(&self, tx: mpsc::Sender<u64>, tag: u64) {
        let mut st = self.inner.state.lock();
        match &mut *st {
            HandleState::Pending(n) => *n = Some((tx, tag)),
            HandleState::Done(_) => {
                let _ = tx.send(tag);
            }
        }
    }
}

/// Collects handles and returns them as they complete, in completion order.
pub struct Poller<T> {
    tx: mpsc::Sender<u64>,
    rx: mpsc::Receiver<u64>,
    entries: HashMap<u64, (T, CompletionHandle)>,
    next: u64,
}

impl<T> Default for Poller<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T> Poller<T> {
    pub fn new() -> Self {
        let (tx, rx) = mpsc::channel();
        Self {
            tx,
            rx,
            entries: HashMap::new(),
            next: 0,
        }
    }

    pub fn add(&mut self, tag: T, handle: CompletionHandle) {
        let key = self.next;
        self.next += 1;
        handle.set_notify(self.tx.clone(), key);
        self.entries.insert(key, (tag, handle));
    }

    pub fn outstanding(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    fn take(&mut self, key: u64, out: &mut Vec<(T, Result<Bytes>)>) {
        if let Some((tag, h)) = self.entries.remove(&key) {
            let r = h.try_result().expect("notified handles are complete");
            out.push((tag, r));
        }
    }

    /// Waits until at least one handle completes (or `timeout` passes) and
    /// returns every completed handle. Returns immediately with nothing if
    /// no handles are outstanding.
    pub fn poll(&mut self, timeout: Option<Duration>) -> Vec<(T, Result<Bytes>)> {
        let mut out = Vec::new();
        if self.entries.is_empty() {
            return out;
        }
        let first = match timeout {
            Some(t) => self.rx.recv_timeout(t).ok(),
            None => self.rx.recv().ok(),
        };
        if let Some(k) = first {
            self.take(k, &mut out);
        }
        while let Ok(k) = self.rx.try_recv() {
            self.take(k, &mut out);
        }
        out
    }

    /// Polls until every handle has completed.
    pub fn drain(&mut self) -> Vec<(T, Result<Bytes>)> {
        let mut out = Vec::new();
        while !self.entries.is_empty() {
            out.extend(self.poll(None));
        }
        out
    }
}

pub type Handler = Arc<dyn Fn(Incoming) + Send + Sync>;

/// A request or one-way message delivered to a handler.
pub struct Incoming {
    pub opcode: u16,
    pub payload: Bytes,
    pub responder: Responder,
}

/// Sends the reply for one request. Replying may be deferred and done from
/// any thread. Dropping a responder of a request without replying sends an
/// error so the caller never hangs. For one-way messages replies are no-ops.
pub struct Responder {
    conn: Option<Arc<Conn>>,
    opcode: u16,
    request_id: u64,
    counters: Weak<Mutex<MessageCounters>>,
    done: bool,
}

impl Responder {
    pub fn is_oneway(&self) -> bool {
        self.conn.is_none()
    }

    pub fn reply(mut self, payload: impl Into<Bytes>) {
        self.send(FrameKind::Response, payload.into());
    }

    pub fn fail(mut self, message: impl std::fmt::Display) {
        self.send(FrameKind::Error, Bytes::from(message.to_string()));
    }

    pub fn reply_result(self, result: std::result::Result<Bytes, impl std::fmt::Display>) {
        match result {
            Ok(b) => self.reply(b),
            Err(e) => self.fail(e),
        }
    }

    fn send(&mut self, kind: FrameKind, payload: Bytes) {
        self.done = true;
        let Some(conn) = self.conn.take() else {
            return;
        };
        let frame = Frame {
            opcode: self.opcode,
            request_id: self.request_id,
            kind,
            payload,
        };
        let counters = self.counters.upgrade();
        if let Some(c) = &counters {
            count(c, self.opcode, true, 1);
        }
        if let Err(e) = conn.write(&frame) {
            if let Some(c) = &counters {
                count(c, self.opcode, true, -1);
            }
            log::debug!("reply to request {} lost: {e}", self.request_id);
        }
    }
}

impl Drop for Responder {
    fn drop(&mut self) {
        if !self.done && self.conn.is_some() {
            self.send(FrameKind::Error, Bytes::from_static(b"request dropped without reply"));
        }
    }
}

/// Sends are counted before the write so a peer's reaction can never be
/// observed ahead of the count; a failed write takes the count back.
fn count(c: &Mutex<MessageCounters>, opcode: u16, sent: bool, delta: i64) {
    if opcode >= CONTROL_BASE {
        return;
    }
    let mut c = c.lock();
    let map = if sent { &mut c.sent } else { &mut c.received };
    let n = map.entry(opcode).or_default();
    *n = n.saturating_add_signed(delta);
}

struct Conn {
    writer: Mutex<TcpStream>,
    pending: Mutex<HashMap<u64, CompletionHandle>>,
    closed: AtomicBool,
    node: Option<usize>,
}

impl Conn {
    fn write(&self, frame: &Frame) -> Result<()> {
        if self.closed.load(Ordering::SeqCst) {
            return Err(RpcError::PeerClosed);
        }
        let buf = frame.encode();
        let mut w = self.writer.lock();
        w.write_all(&buf).map_err(RpcError::from)
    }

    fn close(&self, reason: RpcError) {
        self.closed.store(true, Ordering::SeqCst);
        let _ = self.writer.lock().shutdown(Shutdown::Both);
        let pending: Vec<_> = self.pending.lock().drain().map(|(_, h)| h).collect();
        for h in pending {
            h.complete(Err(reason.clone()));
        }
    }
}

struct Inner {
    node_id: Option<usize>,
    hosts: Hostfile,
    pool: TaskPool,
    handlers: RwLock<HashMap<u16, Handler>>,
    conns: Mutex<HashMap<usize, Arc<Conn>>>,
    accepted: Mutex<Vec<Weak<Conn>>>,
    counters: Arc<Mutex<MessageCounters>>,
    next_id: AtomicU64,
    shutdown: AtomicBool,
    listen_addr: Mutex<Option<SocketAddr>>,
}

/// One process's messaging endpoint. Cheap to clone.
#[derive(Clone)]
pub struct Messenger {
    inner: Arc<Inner>,
}

impl std::fmt::Debug for Messenger {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Messenger")
            .field("node_id", &self.inner.node_id)
            .finish()
    }
}

impl Messenger {
    /// `node_id` is this process's line in the hostfile, or `None` for a
    /// pure client.
    pub fn new(node_id: Option<usize>, hosts: Hostfile, pool: TaskPool) -> Self {
        Self {
            inner: Arc::new(Inner {
                node_id,
                hosts,
                pool,
                handlers: RwLock::new(HashMap::new()),
                conns: Mutex::new(HashMap::new()),
                accepted: Mutex::new(Vec::new()),
                counters: Arc::new(Mutex::new(MessageCounters::default())),
                next_id: AtomicU64::new(1),
                shutdown: AtomicBool::new(false),
                listen_addr: Mutex::new(None),
            }),
        }
    }

    pub fn node_id(&self) -> Option<usize> {
        self.inner.node_id
    }

    pub fn hosts(&self) -> &Hostfile {
        &self.inner.hosts
    }

    pub fn pool(&self) -> &TaskPool {
        &self.inner.pool
    }

    pub fn local_addr(&self) -> Option<SocketAddr> {
        *self.inner.listen_addr.lock()
    }

    pub fn register_handler(
        &self,
        opcode: u16,
        handler: impl Fn(Incoming) + Send + Sync + 'static,
    ) -> Result<()> {
        let mut h = self.inner.handlers.write();
        if h.contains_key(&opcode) || matches!(opcode, OP_PING | OP_COUNTERS | OP_COUNTERS_RESET) {
            return Err(RpcError::DuplicateHandler(opcode));
        }
        h.insert(opcode, Arc::new(handler));
        Ok(())
    }

    /// Binds `addr` and starts accepting connections.
    pub fn listen(&self, addr: impl ToSocketAddrs) -> Result<SocketAddr> {
        let listener = TcpListener::bind(addr)?;
        self.serve(listener)
    }

    /// Starts accepting on an already bound listener.
    pub fn serve(&self, listener: TcpListener) -> Result<SocketAddr> {
        let addr = listener.local_addr()?;
        *self.inner.listen_addr.lock() = Some(addr);
        let weak = Arc::downgrade(&self.inner);
        std::thread::Builder::new()
            .name(format!("accept-{addr}"))
            .spawn(move || {
                for stream in listener.incoming() {
                    let Some(inner) = weak.upgrade() else { break };
                    if inner.shutdown.load(Ordering::SeqCst) {
                        break;
                    }
                    match stream {
                        Ok(s) => {
                            let m = Messenger { inner };
                            match m.attach(s, None) {
                                Ok(conn) => m.inner.accepted.lock().push(Arc::downgrade(&conn)),
                                Err(e) => log::warn!("accept failed: {e}"),
                            }
                        }
                        Err(e) => log::warn!("accept error: {e}"),
                    }
                }
            })
            .map_err(|e| RpcError::Io(e.to_string()))?;
        Ok(addr)
    }

    fn attach(&self, stream: TcpStream, node: Option<usize>) -> Result<Arc<Conn>> {
        stream.set_nodelay(true)?;
        let read_half = stream.try_clone()?;
        let conn = Arc::new(Conn {
            writer: Mutex::new(stream),
            pending: Mutex::new(HashMap::new()),
            closed: AtomicBool::new(false),
            node,
        });
        let weak = Arc::downgrade(&self.inner);
        let c = conn.clone();
        std::thread::Builder::new()
            .name("conn-reader".into())
            .spawn(move || reader_loop(weak, c, read_half))
            .map_err(|e| RpcError::Io(e.to_string()))?;
        Ok(conn)
    }

    fn conn(&self, node: usize) -> Result<Arc<Conn>> {
        if self.inner.shutdown.load(Ordering::SeqCst) {
            return Err(RpcError::Shutdown);
        }
        let mut conns = self.inner.conns.lock();
        if let Some(c) = conns.get(&node) {
            if !c.closed.load(Ordering::SeqCst) {
                return Ok(c.clone());
            }
        }
        let ep = self
            .inner
            .hosts
            .endpoints
            .get(node)
            .ok_or(RpcError::UnknownNode(node))?;
        let addr = ep.addr()?;
        let stream = TcpStream::connect_timeout(&addr, CONNECT_TIMEOUT).map_err(|e| match e.kind() {
            std::io::ErrorKind::ConnectionRefused => RpcError::ConnectionRefused(addr.to_string()),
            _ => RpcError::from(e),
        })?;
        let conn = self.attach(stream, Some(node))?;
        conns.insert(node, conn.clone());
        Ok(conn)
    }

    /// Sends a request; the handle completes with the reply.
    pub fn call_async(&self, node: usize, opcode: u16, payload: impl Into<Bytes>) -> CompletionHandle {
        let id = self.inner.next_id.fetch_add(1, Ordering::Relaxed);
        let handle = CompletionHandle::pending(id);
        let conn = match self.conn(node) {
            Ok(c) => c,
            Err(e) => {
                handle.complete(Err(e));
                return handle;
            }
        };
        conn.pending.lock().insert(id, handle.clone());
        let frame = Frame {
            opcode,
            request_id: id,
            kind: FrameKind::Request,
            payload: payload.into(),
        };
        count(&self.inner.counters, opcode, true, 1);
        if let Err(e) = conn.write(&frame) {
            count(&self.inner.counters, opcode, true, -1);
            conn.pending.lock().remove(&id);
            handle.complete(Err(e));
        }
        // The reader may have failed everything between insert and write.
        if conn.closed.load(Ordering::SeqCst) && conn.pending.lock().remove(&id).is_some() {
            handle.complete(Err(RpcError::PeerClosed));
        }
        handle
    }

    /// Blocking request/response.
    pub fn call(&self, node: usize, opcode: u16, payload: impl Into<Bytes>) -> Result<Bytes> {
        self.call_async(node, opcode, payload).wait()
    }

    pub fn call_timeout(
        &self,
        node: usize,
        opcode: u16,
        payload: impl Into<Bytes>,
        timeout: Duration,
    ) -> Result<Bytes> {
        self.call_async(node, opcode, payload).wait_timeout(timeout)
    }

    /// Sends a message that gets no response. Returns once the frame is
    /// handed to the transport.
    pub fn send_oneway(&self, node: usize, opcode: u16, payload: impl Into<Bytes>) -> Result<()> {
        let conn = self.conn(node)?;
        let frame = Frame {
            opcode,
            request_id: 0,
            kind: FrameKind::OneWay,
            payload: payload.into(),
        };
        count(&self.inner.counters, opcode, true, 1);
        conn.write(&frame).inspect_err(|_| count(&self.inner.counters, opcode, true, -1))
    }

    pub fn counters_snapshot(&self) -> MessageCounters {
        self.inner.counters.lock().clone()
    }

    pub fn counters_reset(&self) {
        *self.inner.counters.lock() = MessageCounters::default();
    }

    pub fn ping(&self, node: usize) -> Result<()> {
        self.call(node, OP_PING, Bytes::new()).map(|_| ())
    }

    pub fn remote_counters(&self, node: usize) -> Result<MessageCounters> {
        MessageCounters::decode(&self.call(node, OP_COUNTERS, Bytes::new())?)
    }

    pub fn remote_counters_reset(&self, node: usize) -> Result<()> {
        self.call(node, OP_COUNTERS_RESET, Bytes::new()).map(|_| ())
    }

    /// Closes the listener and every connection; pending calls fail with
    /// `Shutdown`. The task pool is left running.
    pub fn shutdown(&self) {
        if self.inner.shutdown.swap(true, Ordering::SeqCst) {
            return;
        }
        if let Some(addr) = *self.inner.listen_addr.lock() {
            // wake the accept loop so it sees the flag
            let _ = TcpStream::connect_timeout(&addr, Duration::from_millis(200));
        }
        let conns: Vec<_> = self.inner.conns.lock().drain().map(|(_, c)| c).collect();
        for c in conns {
            c.close(RpcError::Shutdown);
        }
        let accepted: Vec<_> = self.inner.accepted.lock().drain(..).collect();
        for c in accepted.iter().filter_map(Weak::upgrade) {
            c.close(RpcError::Shutdown);
        }
    }

    pub fn is_shutdown(&self) -> bool {
        self.inner.shutdown.load(Ordering::SeqCst)
    }
}

fn reader_loop(weak: Weak<Inner>, conn: Arc<Conn>, stream: TcpStream) {
    let mut r = BufReader::with_capacity(64 << 10, stream);
    let reason = loop {
        let frame = match Frame::read_from(&mut r) {
            Ok(Some(f)) => f,
            Ok(None) => break RpcError::PeerClosed,
            Err(e) => {
                if let RpcError::Decode(msg) = &e {
                    log::error!("decode_error: {msg}; closing connection");
                }
                break e;
            }
        };
        let Some(inner) = weak.upgrade() else {
            break RpcError::Shutdown;
        };
        count(&inner.counters, frame.opcode, false, 1);
        match frame.kind {
            FrameKind::Response | FrameKind::Error => {
                let h = conn.pending.lock().remove(&frame.request_id);
                match h {
                    Some(h) => {
                        let result = if frame.kind == FrameKind::Response {
                            Ok(frame.payload)
                        } else {
                            Err(RpcError::Remote(String::from_utf8_lossy(&frame.payload).into_owned()))
                        };
                        h.complete(result);
                    }
                    None => log::warn!("response for unknown request {}", frame.request_id),
                }
            }
            FrameKind::Request | FrameKind::OneWay => dispatch(&inner, &conn, frame),
        }
    };
    if let Some(inner) = weak.upgrade() {
        if let Some(node) = conn.node {
            let mut conns = inner.conns.lock();
            if conns.get(&node).is_some_and(|c| Arc::ptr_eq(c, &conn)) {
                conns.remove(&node);
            }
        }
    }
    conn.close(reason);
}

fn dispatch(inner: &Arc<Inner>, conn: &Arc<Conn>, frame: Frame) {
    let responder = Responder {
        conn: (frame.kind == FrameKind::Request).then(|| conn.clone()),
        opcode: frame.opcode,
        request_id: frame.request_id,
        counters: Arc::downgrade(&inner.counters),
        done: false,
    };
    match frame.opcode {
        OP_PING => return responder.reply(frame.payload),
        OP_COUNTERS => return responder.reply(inner.counters.lock().encode()),
        OP_COUNTERS_RESET => {
            *inner.counters.lock() = MessageCounters::default();
            return responder.reply(Bytes::new());
        }
        _ => {}
    }
    let handler = inner.handlers.read().get(&frame.opcode).cloned();
    match handler {
        Some(h) => {
            let incoming = Incoming {
                opcode: frame.opcode,
                payload: frame.payload,
                responder,
            };
            inner.pool.submit(move || h(incoming));
        }
        None => {
            log::warn!("no handler for opcode {:#06x}", frame.opcode);
            responder.fail(format!("no handler for opcode {:#06x}", frame.opcode));
        }
    }
}
