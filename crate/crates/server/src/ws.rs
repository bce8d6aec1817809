//! `/ws`: one websocket per client, one frame per websocket message.

use std::sync::Arc;

use axum::extract::ws::{CloseFrame, Message as WsMessage, WebSocket};
use futures::{SinkExt, StreamExt};
use parking_lot::Mutex;
use tokio::sync::{mpsc, Notify};
use wizundry_core::hub::Hub;
use wizundry_core::outlet::{CloseReason, Outlet, PushResult, DEFAULT_QUEUE_CAPACITY};
use wizundry_core::protocol::{encode_string, Envelope};

// Websocket close codes.
const NORMAL: u16 = 1000;
const GOING_AWAY: u16 = 1001;
const POLICY: u16 = 1008;

/// Bounded outbound queue feeding the socket writer. `push` never blocks.
pub struct WsOutlet {
    tx: mpsc::Sender<String>,
    closed: Mutex<Option<CloseReason>>,
    notify: Notify,
}

impl WsOutlet {
    pub fn new(capacity: usize) -> (Arc<Self>, mpsc::Receiver<String>) {
        let (tx, rx) = mpsc::channel(capacity);
        let outlet = Arc::new(Self {
            tx,
            closed: Mutex::new(None),
            notify: Notify::new(),
        });
        (outlet, rx)
    }

    pub fn close_reason(&self) -> Option<CloseReason> {
        *self.closed.lock()
    }

    async fn closed(&self) -> CloseReason {
        loop {
            let notified = self.notify.notified();
            if let Some(r) = self.close_reason() {
                return r;
            }
            notified.await;
        }
    }
}

impl Outlet for WsOutlet {
    fn push(&self, envelope: &Envelope) -> PushResult {
        if self.closed.lock().is_some() {
            return PushResult::Closed;
        }
        match self.tx.try_send(encode_string(envelope)) {
            Ok(()) => PushResult::Queued,
            Err(mpsc::error::TrySendError::Full(_)) => PushResult::Full,
            Err(mpsc::error::TrySendError::Closed(_)) => PushResult::Closed,
        }
    }

    fn close(&self, reason: CloseReason) {
        let mut closed = self.closed.lock();
        if closed.is_none() {
            *closed = Some(reason);
            self.notify.notify_one();
        }
    }
}

fn close_frame(reason: CloseReason) -> CloseFrame {
    let code = match reason {
        CloseReason::Shutdown => GOING_AWAY,
        CloseReason::TrialClosed => NORMAL,
        _ => POLICY,
    };
    let text = reason.code().map(|c| c.as_str()).unwrap_or(match reason {
        CloseReason::Shutdown => "SHUTDOWN",
        _ => "TRIAL_CLOSED",
    });
    CloseFrame {
        code,
        reason: text.into(),
    }
}

pub async fn run_socket(hub: Arc<Hub>, socket: WebSocket) {
    let (outlet, mut rx) = WsOutlet::new(DEFAULT_QUEUE_CAPACITY);
    let conn = hub.connect(outlet.clone());
    tracing::debug!(conn, "socket connected");
    let (mut sink, mut stream) = socket.split();

    let writer = async {
        loop {
            tokio::select! {
                biased;
                reason = outlet.closed() => {
                    // Whatever was queued before the close (typically the
                    // ERROR explaining it) still goes out, except to a
                    // consumer that was too slow to take it.
                    if reason != CloseReason::SlowConsumer {
                        while let Ok(frame) = rx.try_recv() {
                            if sink.send(WsMessage::Text(frame.into())).await.is_err() {
                                return;
                            }
                        }
                    }
                    let _ = sink.send(WsMessage::Close(Some(close_frame(reason)))).await;
                    return;
                }
                frame = rx.recv() => {
                    let Some(frame) = frame else { return };
                    if sink.send(WsMessage::Text(frame.into())).await.is_err() {
                        return;
                    }
                }
            }
        }
    };

    let reader = async {
        while let Some(msg) = stream.next().await {
            match msg {
                Ok(WsMessage::Text(t)) => hub.receive_frame(conn, t.as_bytes()),
                Ok(WsMessage::Binary(b)) => hub.receive_frame(conn, &b),
                Ok(WsMessage::Close(_)) | Err(_) => break,
                Ok(_) => {}
            }
        }
    };

    tokio::select! {
        _ = writer => {}
        _ = reader => {}
    }
    hub.disconnect(conn);
    tracing::debug!(conn, "socket closed");
}
