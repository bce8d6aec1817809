//! Outbound side of a connection as seen by the trial rooms.

use std::collections::VecDeque;
use std::sync::Arc;

use parking_lot::Mutex;

use crate::protocol::{Envelope, ErrorCode};

pub const DEFAULT_QUEUE_CAPACITY: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PushResult {
    Queued,
    /// The bounded queue is full; the caller drops the connection.
    Full,
    Closed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CloseReason {
    /// Handshake or protocol failure; the code is sent before closing.
    Error(ErrorCode),
    SlowConsumer,
    Superseded,
    TrialClosed,
    Shutdown,
}

impl CloseReason {
    /// Error code announced to the peer, if any.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            CloseReason::Error(c) => Some(*c),
            CloseReason::SlowConsumer => Some(ErrorCode::SlowConsumer),
            CloseReason::Superseded => Some(ErrorCode::Superseded),
            CloseReason::TrialClosed | CloseReason::Shutdown => None,
        }
    }
}

/// Must never block: rooms push while holding their lock.
pub trait Outlet: Send + Sync {
    fn push(&self, envelope: &Envelope) -> PushResult;
    fn close(&self, reason: CloseReason);
}

#[derive(Debug)]
struct Inner {
    queue: VecDeque<Envelope>,
    closed: Option<CloseReason>,
}

/// Queue-backed outlet for in-process clients and tests.
#[derive(Debug, Clone)]
pub struct MemoryOutlet {
    inner: Arc<Mutex<Inner>>,
    capacity: usize,
}

impl Default for MemoryOutlet {
    fn default() -> Self {
        Self::new(DEFAULT_QUEUE_CAPACITY)
    }
}

impl MemoryOutlet {
    pub fn new(capacity: usize) -> Self {
        Self {
            inner: Arc::new(Mutex::new(Inner {
                queue: VecDeque::new(),
                closed: None,
            })),
            capacity,
        }
    }

    pub fn drain(&self) -> Vec<Envelope> {
        self.inner.lock().queue.drain(..).collect()
    }

    pub fn len(&self) -> usize {
        self.inner.lock().queue.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn closed(&self) -> Option<CloseReason> {
        self.inner.lock().closed
    }
}

impl Outlet for MemoryOutlet {
    fn push(&self, envelope: &Envelope) -> PushResult {
        let mut inner = self.inner.lock();
        if inner.closed.is_some() {
            return PushResult::Closed;
        }
        if inner.queue.len() >= self.capacity {
            return PushResult::Full;
        }
        inner.queue.push_back(envelope.clone());
        PushResult::Queued
    }

    fn close(&self, reason: CloseReason) {
        let mut inner = self.inner.lock();
        inner.closed.get_or_insert(reason);
    }
}
