use std::io::{BufRead, BufReader, Write};
use std::process::{Child, ChildStdin, Command, Stdio};
use std::sync::mpsc::{self, Receiver};
use std::thread;

use base64::engine::general_purpose::STANDARD;
use base64::Engine;
use serde_json::json;

use super::TranscriptEvent;

/// Speech-to-text engine for one trial. Events may come back directly from
/// `push_chunk`/`flush` or later through `poll`.
pub trait SttProvider: Send {
    fn push_chunk(&mut self, bytes: &[u8]) -> Vec<TranscriptEvent>;

    /// Ends the current segment.
    fn flush(&mut self) -> Vec<TranscriptEvent>;

    fn poll(&mut self) -> Vec<TranscriptEvent> {
        Vec::new()
    }
}

/// Treats chunk bytes as already-recognised UTF-8 text. Each chunk that
/// leaves text pending yields one INTERIM with the segment so far; each
/// newline closes the segment with a FINAL.
#[derive(Debug, Clone)]
pub struct MockStt {
    buffer: String,
    segment_id: u64,
}

impl Default for MockStt {
    fn default() -> Self {
        Self {
            buffer: String::new(),
            segment_id: 1,
        }
    }
}

impl MockStt {
    pub fn new() -> Self {
        Self::default()
    }

    fn close_segment(&mut self, out: &mut Vec<TranscriptEvent>) {
        let text = std::mem::take(&mut self.buffer);
        if !text.trim().is_empty() {
            out.push(TranscriptEvent::final_(self.segment_id, text));
            self.segment_id += 1;
        }
    }
}

impl SttProvider for MockStt {
    fn push_chunk(&mut self, bytes: &[u8]) -> Vec<TranscriptEvent> {
        let text = String::from_utf8_lossy(bytes);
        let mut out = Vec::new();
        let mut pieces = text.split('\n').peekable();
        while let Some(piece) = pieces.next() {
            self.buffer.push_str(piece);
            if pieces.peek().is_some() {
                self.close_segment(&mut out);
            }
        }
        if !text.is_empty() && !self.buffer.is_empty() {
            out.push(TranscriptEvent::interim(self.segment_id, self.buffer.clone()));
        }
        out
    }

    fn flush(&mut self) -> Vec<TranscriptEvent> {
        let mut out = Vec::new();
        self.close_segment(&mut out);
        out
    }
}

/// Runs an external recogniser. Chunks go to the child's stdin as one JSON
/// object per line (`{"seq", "bytes", "final"}`, or `{"flush": true}`); the
/// child answers with transcript events, one JSON object per line, which a
/// reader thread collects for `poll`.
pub struct ExternalCommandStt {
    child: Child,
    stdin: Option<ChildStdin>,
    events: Receiver<TranscriptEvent>,
    seq: u64,
}

impl ExternalCommandStt {
    pub fn spawn(program: &str, args: &[String]) -> std::io::Result<Self> {
        let mut child = Command::new(program)
            .args(args)
            .stdin(Stdio::piped())
            .stdout(Stdio::piped())
            .stderr(Stdio::inherit())
            .spawn()?;
        let stdout = child.stdout.take().expect("stdout is piped");
        let stdin = child.stdin.take();
        let (tx, rx) = mpsc::channel();
        thread::Builder::new()
            .name("stt-reader".into())
            .spawn(move || {
                for line in BufReader::new(stdout).lines() {
                    let Ok(line) = line else { break };
                    if line.trim().is_empty() {
                        continue;
                    }
                    match serde_json::from_str::<TranscriptEvent>(&line) {
                        Ok(ev) => {
                            if tx.send(ev).is_err() {
                                break;
                            }
                        }
                        Err(e) => log::warn!("stt: ignoring unparsable line: {e}"),
                    }
                }
            })?;
        Ok(Self {
            child,
            stdin,
            events: rx,
            seq: 0,
        })
    }

    fn send(&mut self, value: serde_json::Value) {
        let Some(stdin) = self.stdin.as_mut() else {
            return;
        };
        let mut line = value.to_string();
        line.push('\n');
        if let Err(e) = stdin.write_all(line.as_bytes()).and_then(|_| stdin.flush()) {
            log::warn!("stt: child stdin closed: {e}");
            self.stdin = None;
        }
    }
}

impl SttProvider for ExternalCommandStt {
    fn push_chunk(&mut self, bytes: &[u8]) -> Vec<TranscriptEvent> {
        if !bytes.is_empty() {
            self.seq += 1;
            self.send(json!({"seq": self.seq, "bytes": STANDARD.encode(bytes), "final": false}));
        }
        self.poll()
    }

    fn flush(&mut self) -> Vec<TranscriptEvent> {
        self.send(json!({"flush": true}));
        self.poll()
    }

    fn poll(&mut self) -> Vec<TranscriptEvent> {
        self.events.try_iter().collect()
    }
}

impl Drop for ExternalCommandStt {
    fn drop(&mut self) {
        self.stdin = None;
        let _ = self.child.kill();
        let _ = self.child.wait();
    }
}
