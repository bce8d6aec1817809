use std::collections::VecDeque;

use super::TtsProvider;
use crate::protocol::SpeakerSource;

/// One sentence or line read out by content playback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaybackUnit {
    /// Character index of the unit's first scalar in the document.
    pub index: usize,
    pub text: String,
}

/// Splits the document from character `from` onwards into sentences and
/// lines. A sentence ends at `.`, `!` or `?` followed by whitespace or the
/// end; a line ends at a newline. Blank units are skipped.
pub fn playback_units(text: &str, from: usize) -> Vec<PlaybackUnit> {
    let chars: Vec<char> = text.chars().collect();
    let mut units = Vec::new();
    let mut start = from.min(chars.len());
    let mut i = start;
    let push = |start: usize, end: usize, units: &mut Vec<PlaybackUnit>| {
        let slice = &chars[start..end];
        let lead = slice.iter().take_while(|c| c.is_whitespace()).count();
        let body: String = slice[lead..].iter().collect();
        let body = body.trim_end();
        if !body.is_empty() {
            units.push(PlaybackUnit {
                index: start + lead,
                text: body.to_owned(),
            });
        }
    };
    while i < chars.len() {
        let c = chars[i];
        if c == '\n' {
            push(start, i, &mut units);
            start = i + 1;
        } else if matches!(c, '.' | '!' | '?')
            && chars.get(i + 1).is_none_or(|n| n.is_whitespace())
        {
            push(start, i + 1, &mut units);
            start = i + 1;
        }
        i += 1;
    }
    push(start, chars.len(), &mut units);
    units
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpeakerEvent {
    Started {
        source: SpeakerSource,
        text: String,
        duration_ms: u64,
        at: u64,
    },
    Finished {
        source: SpeakerSource,
        at: u64,
    },
    Playback {
        active: bool,
        progress_index: usize,
        started_by: String,
    },
}

#[derive(Debug, Clone)]
struct Playing {
    source: SpeakerSource,
    ends_at: u64,
}

#[derive(Debug, Clone)]
struct Session {
    started_by: String,
    units: VecDeque<PlaybackUnit>,
    progress: usize,
    end_index: usize,
}

/// The end-user's single loudspeaker. Box plays queue FIFO; content
/// playback goes ahead of queued boxes but never cuts off a box already
/// speaking. Time only moves through the `now` arguments.
#[derive(Debug, Clone, Default)]
pub struct Speaker {
    current: Option<Playing>,
    queue: VecDeque<(String, String)>,
    playback: Option<Session>,
}

impl Speaker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn is_active(&self) -> bool {
        self.current.is_some()
    }

    pub fn playback_active(&self) -> bool {
        self.playback.is_some()
    }

    /// `(progress_index, started_by)` of the running playback session.
    pub fn playback(&self) -> Option<(usize, &str)> {
        self.playback
            .as_ref()
            .map(|s| (s.progress, s.started_by.as_str()))
    }

    pub fn queued(&self) -> usize {
        self.queue.len()
    }

    /// When the utterance in progress finishes.
    pub fn next_deadline(&self) -> Option<u64> {
        self.current.as_ref().map(|p| p.ends_at)
    }

    pub fn enqueue_box(
        &mut self,
        box_id: &str,
        text: &str,
        now: u64,
        tts: &dyn TtsProvider,
    ) -> Vec<SpeakerEvent> {
        self.queue.push_back((box_id.to_owned(), text.to_owned()));
        let mut out = Vec::new();
        self.pump(now, tts, &mut out);
        out
    }

    pub fn start_playback(
        &mut self,
        started_by: &str,
        units: Vec<PlaybackUnit>,
        from_index: usize,
        end_index: usize,
        now: u64,
        tts: &dyn TtsProvider,
    ) -> Vec<SpeakerEvent> {
        let mut out = Vec::new();
        if self.playback.is_some() {
            return out;
        }
        if units.is_empty() {
            for active in [true, false] {
                out.push(SpeakerEvent::Playback {
                    active,
                    progress_index: from_index,
                    started_by: started_by.to_owned(),
                });
            }
            return out;
        }
        self.playback = Some(Session {
            started_by: started_by.to_owned(),
            units: units.into(),
            progress: from_index,
            end_index,
        });
        if self.current.is_some() {
            out.push(SpeakerEvent::Playback {
                active: true,
                progress_index: from_index,
                started_by: started_by.to_owned(),
            });
        }
        self.pump(now, tts, &mut out);
        out
    }

    /// Stops playback at once, cutting off the unit being read.
    pub fn stop_playback(&mut self, now: u64, tts: &dyn TtsProvider) -> Vec<SpeakerEvent> {
        let mut out = Vec::new();
        let Some(session) = self.playback.take() else {
            return out;
        };
        if let Some(p) = self.current.take_if(|p| p.source == SpeakerSource::Playback) {
            out.push(SpeakerEvent::Finished {
                source: p.source,
                at: now,
            });
        }
        out.push(SpeakerEvent::Playback {
            active: false,
            progress_index: session.progress,
            started_by: session.started_by,
        });
        self.pump(now, tts, &mut out);
        out
    }

    /// Finishes every utterance due by `now` and starts whatever follows,
    /// back to back.
    pub fn tick(&mut self, now: u64, tts: &dyn TtsProvider) -> Vec<SpeakerEvent> {
        let mut out = Vec::new();
        while let Some(p) = self.current.take_if(|p| p.ends_at <= now) {
            out.push(SpeakerEvent::Finished {
                source: p.source,
                at: p.ends_at,
            });
            self.pump(p.ends_at, tts, &mut out);
        }
        out
    }

    fn pump(&mut self, at: u64, tts: &dyn TtsProvider, out: &mut Vec<SpeakerEvent>) {
        if self.current.is_some() {
            return;
        }
        if let Some(session) = self.playback.as_mut() {
            if let Some(unit) = session.units.pop_front() {
                session.progress = unit.index;
                out.push(SpeakerEvent::Playback {
                    active: true,
                    progress_index: unit.index,
                    started_by: session.started_by.clone(),
                });
                self.start(SpeakerSource::Playback, unit.text, at, tts, out);
                return;
            }
            let session = self.playback.take().expect("checked above");
            out.push(SpeakerEvent::Playback {
                active: false,
                progress_index: session.end_index,
                started_by: session.started_by,
            });
        }
        if let Some((box_id, text)) = self.queue.pop_front() {
            self.start(SpeakerSource::Box { box_id }, text, at, tts, out);
        }
    }

    fn start(
        &mut self,
        source: SpeakerSource,
        text: String,
        at: u64,
        tts: &dyn TtsProvider,
        out: &mut Vec<SpeakerEvent>,
    ) {
        let duration_ms = tts.synthesize(&text);
        self.current = Some(Playing {
            source: source.clone(),
            ends_at: at + duration_ms,
        });
        out.push(SpeakerEvent::Started {
            source,
            text,
            duration_ms,
            at,
        });
    }
}
