//! Append-only per-trial event log, CSV export and replay.

mod csv_format;
mod file;
mod memory;
mod replay;

pub use csv_format::{export_csv, parse_csv, CsvError, CSV_HEADER};
pub use file::FileLog;
pub use memory::MemoryLog;
pub use replay::{replay, ReplayError, ReplayState};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::protocol::ErrorCode;
use crate::trial::Role;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EventType {
    Join,
    Leave,
    DocInsert,
    DocDelete,
    DocMark,
    MicSet,
    SpeechBoxUpsert,
    SpeechPlay,
    PlaybackToggle,
    TranscriptCommit,
    LabelDef,
    AnnotationAdd,
    AnnotationDelete,
    FeatureUpdate,
    TrialOpen,
    TrialClose,
    Error,
}

impl EventType {
    pub const ALL: [EventType; 17] = [
        EventType::Join,
        EventType::Leave,
        EventType::DocInsert,
        EventType::DocDelete,
        EventType::DocMark,
        EventType::MicSet,
        EventType::SpeechBoxUpsert,
        EventType::SpeechPlay,
        EventType::PlaybackToggle,
        EventType::TranscriptCommit,
        EventType::LabelDef,
        EventType::AnnotationAdd,
        EventType::AnnotationDelete,
        EventType::FeatureUpdate,
        EventType::TrialOpen,
        EventType::TrialClose,
        EventType::Error,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EventType::Join => "JOIN",
            EventType::Leave => "LEAVE",
            EventType::DocInsert => "DOC_INSERT",
            EventType::DocDelete => "DOC_DELETE",
            EventType::DocMark => "DOC_MARK",
            EventType::MicSet => "MIC_SET",
            EventType::SpeechBoxUpsert => "SPEECH_BOX_UPSERT",
            EventType::SpeechPlay => "SPEECH_PLAY",
            EventType::PlaybackToggle => "PLAYBACK_TOGGLE",
            EventType::TranscriptCommit => "TRANSCRIPT_COMMIT",
            EventType::LabelDef => "LABEL_DEF",
            EventType::AnnotationAdd => "ANNOTATION_ADD",
            EventType::AnnotationDelete => "ANNOTATION_DELETE",
            EventType::FeatureUpdate => "FEATURE_UPDATE",
            EventType::TrialOpen => "TRIAL_OPEN",
            EventType::TrialClose => "TRIAL_CLOSE",
            EventType::Error => "ERROR",
        }
    }

    /// Wizard-driven feature operations counted by usage reports.
    pub fn is_feature_use(&self) -> bool {
        matches!(
            self,
            EventType::MicSet
                | EventType::SpeechPlay
                | EventType::SpeechBoxUpsert
                | EventType::PlaybackToggle
                | EventType::DocInsert
                | EventType::DocDelete
                | EventType::DocMark
                | EventType::LabelDef
                | EventType::AnnotationAdd
                | EventType::AnnotationDelete
        )
    }
}

impl fmt::Display for EventType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventType {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown event type {s:?}"))
    }
}

/// Who an event is attributed to; server-originated events are SYSTEM.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LogRole {
    Admin,
    Wizard,
    EndUser,
    System,
}

impl LogRole {
    pub fn as_str(&self) -> &'static str {
        match self {
            LogRole::Admin => "ADMIN",
            LogRole::Wizard => "WIZARD",
            LogRole::EndUser => "END_USER",
            LogRole::System => "SYSTEM",
        }
    }
}

impl From<Role> for LogRole {
    fn from(r: Role) -> Self {
        match r {
            Role::Admin => LogRole::Admin,
            Role::Wizard => LogRole::Wizard,
            Role::EndUser => LogRole::EndUser,
        }
    }
}

impl FromStr for LogRole {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [LogRole::Admin, LogRole::Wizard, LogRole::EndUser, LogRole::System]
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

pub const SYSTEM_ACTOR: &str = "system";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct LogEvent {
    pub seq: u64,
    pub timestamp_ms: u64,
    pub trial_id: String,
    pub actor_id: String,
    pub role: LogRole,
    pub event_type: EventType,
    pub payload: Value,
}

/// An event before the store has numbered it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NewEvent {
    pub trial_id: String,
    pub timestamp_ms: u64,
    pub actor_id: String,
    pub role: LogRole,
    pub event_type: EventType,
    pub payload: Value,
}

#[derive(Debug, thiserror::Error)]
pub enum LogError {
    #[error("storage is full")]
    StorageFull,
    #[error("unknown trial {0}")]
    UnknownTrial(String),
    #[error("invalid trial id {0:?}")]
    InvalidTrialId(String),
    #[error("corrupt log for trial {trial}: {reason}")]
    Corrupt { trial: String, reason: String },
    #[error(transparent)]
    Io(std::io::Error),
}

impl LogError {
    pub fn code(&self) -> ErrorCode {
        match self {
            LogError::StorageFull => ErrorCode::StorageFull,
            LogError::UnknownTrial(_) => ErrorCode::UnknownTrial,
            _ => ErrorCode::Internal,
        }
    }
}

const ENOSPC: i32 = 28;

impl From<std::io::Error> for LogError {
    fn from(e: std::io::Error) -> Self {
        if e.raw_os_error() == Some(ENOSPC) || e.kind() == std::io::ErrorKind::StorageFull {
            LogError::StorageFull
        } else {
            LogError::Io(e)
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct LogFilter {
    pub actor_id: Option<String>,
    pub event_type: Option<EventType>,
    /// Inclusive `[from, to]` in milliseconds.
    pub time_range: Option<(u64, u64)>,
}

impl LogFilter {
    pub fn matches(&self, e: &LogEvent) -> bool {
        self.actor_id.as_ref().is_none_or(|a| *a == e.actor_id)
            && self.event_type.is_none_or(|t| t == e.event_type)
            && self
                .time_range
                .is_none_or(|(from, to)| (from..=to).contains(&e.timestamp_ms))
    }
}

pub fn query(events: &[LogEvent], filter: &LogFilter) -> Vec<LogEvent> {
    events.iter().filter(|e| filter.matches(e)).cloned().collect()
}

/// Durable, per-trial numbered storage. `append` assigns the next dense seq
/// and clamps the timestamp so it never goes backwards; when it returns Ok
/// the event is on stable storage.
pub trait LogStore: Send + Sync {
    /// Makes the trial known (idempotent).
    fn create(&self, trial_id: &str) -> Result<(), LogError>;

    fn append(&self, event: NewEvent) -> Result<LogEvent, LogError>;

    fn events(&self, trial_id: &str) -> Result<Vec<LogEvent>, LogError>;

    fn trial_ids(&self) -> Result<Vec<String>, LogError>;

    fn query(&self, trial_id: &str, filter: &LogFilter) -> Result<Vec<LogEvent>, LogError> {
        Ok(query(&self.events(trial_id)?, filter))
    }
}

/// Numbering state shared by the store implementations.
#[derive(Debug, Clone, Copy, Default)]
struct Head {
    seq: u64,
    timestamp_ms: u64,
}

impl Head {
    fn next(&self, e: NewEvent) -> LogEvent {
        LogEvent {
            seq: self.seq + 1,
            timestamp_ms: e.timestamp_ms.max(self.timestamp_ms),
            trial_id: e.trial_id,
            actor_id: e.actor_id,
            role: e.role,
            event_type: e.event_type,
            payload: e.payload,
        }
    }

    fn advance(&mut self, e: &LogEvent) {
        self.seq = e.seq;
        self.timestamp_ms = e.timestamp_ms;
    }
}
