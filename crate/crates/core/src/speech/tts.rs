use std::sync::Arc;

use parking_lot::Mutex;

/// Text-to-speech engine. Audio rendering happens on the clients; the
/// server only needs to know how long an utterance lasts.
pub trait TtsProvider: Send + Sync {
    fn synthesize(&self, text: &str) -> u64;
}

/// Deterministic engine: 200 ms plus 50 ms per scalar value. Keeps a log
/// of everything it was asked to say.
#[derive(Debug, Clone, Default)]
pub struct MockTts {
    spoken: Arc<Mutex<Vec<String>>>,
}

impl MockTts {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn duration_ms(text: &str) -> u64 {
        200 + 50 * text.chars().count() as u64
    }

    pub fn spoken(&self) -> Vec<String> {
        self.spoken.lock().clone()
    }
}

impl TtsProvider for MockTts {
    fn synthesize(&self, text: &str) -> u64 {
        self.spoken.lock().push(text.to_owned());
        Self::duration_ms(text)
    }
}
