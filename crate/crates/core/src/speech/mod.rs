//! Microphone state, dictation segmentation, speech boxes and the shared
//! speaker.

mod boxes;
mod segment;
mod speaker;
mod stt;
mod tts;

pub use boxes::BoxStore;
pub use segment::finalize_segment;
pub use speaker::{playback_units, PlaybackUnit, Speaker, SpeakerEvent};
pub use stt::{ExternalCommandStt, MockStt, SttProvider};
pub use tts::{MockTts, TtsProvider};

use serde::{Deserialize, Serialize};

use crate::protocol::ErrorCode;

/// Shared microphone switch of a trial.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct MicState {
    pub on: bool,
    #[serde(default)]
    pub changed_by: String,
    #[serde(default)]
    pub changed_at: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TranscriptKind {
    Interim,
    Final,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TranscriptEvent {
    pub kind: TranscriptKind,
    pub text: String,
    pub segment_id: u64,
}

impl TranscriptEvent {
    pub fn interim(segment_id: u64, text: impl Into<String>) -> Self {
        Self {
            kind: TranscriptKind::Interim,
            text: text.into(),
            segment_id,
        }
    }

    pub fn final_(segment_id: u64, text: impl Into<String>) -> Self {
        Self {
            kind: TranscriptKind::Final,
            text: text.into(),
            segment_id,
        }
    }

    pub fn is_final(&self) -> bool {
        self.kind == TranscriptKind::Final
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum BoxKind {
    /// Typed ad hoc; emptied by every play.
    Editable,
    /// Canned response; keeps its text.
    Preset,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OwnerScope {
    #[default]
    Shared,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeechBox {
    pub box_id: String,
    pub kind: BoxKind,
    pub text: String,
    #[serde(default)]
    pub owner_scope: OwnerScope,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SpeechError {
    #[error("segment is empty")]
    EmptySegment,
    #[error("speech box is empty")]
    EmptyBox,
    #[error("unknown speech box {0}")]
    UnknownBox(String),
    #[error("microphone is off")]
    MicOff,
}

impl SpeechError {
    pub fn code(&self) -> ErrorCode {
        match self {
            SpeechError::EmptySegment => ErrorCode::EmptySegment,
            SpeechError::EmptyBox => ErrorCode::EmptyBox,
            SpeechError::UnknownBox(_) => ErrorCode::UnknownBox,
            SpeechError::MicOff => ErrorCode::MicOff,
        }
    }
}
