//! Process-level plumbing: a work-stealing [`TaskPool`] that runs incoming
//! requests, and a [`Messenger`] that exchanges length-prefixed frames with
//! the other nodes listed in a [`Hostfile`].

pub mod codec;
mod error;
mod hostfile;
mod messaging;
pub mod runtime;

pub use bytes::Bytes;
pub use codec::{WireReader, WireWriter};
pub use error::{Result, RpcError};
pub use hostfile::{Endpoint, Hostfile};
pub use messaging::{
    CompletionHandle, Frame, FrameKind, Handler, Incoming, MessageCounters, Messenger, Poller,
    Responder, CONTROL_BASE, HEADER_LEN, MAX_FRAME, OP_COUNTERS, OP_COUNTERS_RESET, OP_PING,
};
pub use runtime::TaskPool;
