use std::fmt;

use serde::{Deserialize, Serialize};

use crate::annotations::{Annotation, AnnotationBody, LabelDef};
use crate::crdt::{Anchor, DocOp, VersionVector};
use crate::presence::PresencePayload;
use crate::protocol::ErrorCode;
use crate::speech::{BoxKind, MicState, SpeechBox, TranscriptEvent};
use crate::trial::{FeatureSet, Role};

/// The unit of traffic on a trial socket.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Envelope {
    #[serde(default)]
    pub trial_id: String,
    #[serde(default)]
    pub actor_id: String,
    /// Assigned by the server on broadcast; absent on client traffic.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub server_seq: Option<u64>,
    #[serde(flatten)]
    pub message: Message,
}

impl Envelope {
    pub fn new(trial_id: impl Into<String>, actor_id: impl Into<String>, message: Message) -> Self {
        Self {
            trial_id: trial_id.into(),
            actor_id: actor_id.into(),
            server_seq: None,
            message,
        }
    }

    pub fn kind(&self) -> EnvelopeType {
        self.message.kind()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", content = "payload", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Message {
    Hello(Hello),
    Welcome(Welcome),
    SyncRequest(SyncRequest),
    SyncResponse(SyncResponse),
    DocOp(DocOpBatch),
    Awareness(Awareness),
    MicSet(MicSet),
    MicState(MicState),
    SpeechBoxUpsert(SpeechBoxUpsert),
    SpeechPlay(SpeechPlay),
    SpeakerState(SpeakerState),
    PlaybackToggle(PlaybackToggle),
    PlaybackState(PlaybackState),
    AudioChunk(AudioChunk),
    TranscriptEvent(TranscriptEvent),
    LabelDef(LabelDefMsg),
    AnnotationOp(AnnotationOp),
    FeatureUpdate(FeatureUpdate),
    TrialEvent(TrialEvent),
    Error(ErrorPayload),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum EnvelopeType {
    Hello,
    Welcome,
    SyncRequest,
    SyncResponse,
    DocOp,
    Awareness,
    MicSet,
    MicState,
    SpeechBoxUpsert,
    SpeechPlay,
    SpeakerState,
    PlaybackToggle,
    PlaybackState,
    AudioChunk,
    TranscriptEvent,
    LabelDef,
    AnnotationOp,
    FeatureUpdate,
    TrialEvent,
    Error,
}

impl EnvelopeType {
    pub const ALL: [EnvelopeType; 20] = [
        EnvelopeType::Hello,
        EnvelopeType::Welcome,
        EnvelopeType::SyncRequest,
        EnvelopeType::SyncResponse,
        EnvelopeType::DocOp,
        EnvelopeType::Awareness,
        EnvelopeType::MicSet,
        EnvelopeType::MicState,
        EnvelopeType::SpeechBoxUpsert,
        EnvelopeType::SpeechPlay,
        EnvelopeType::SpeakerState,
        EnvelopeType::PlaybackToggle,
        EnvelopeType::PlaybackState,
        EnvelopeType::AudioChunk,
        EnvelopeType::TranscriptEvent,
        EnvelopeType::LabelDef,
        EnvelopeType::AnnotationOp,
        EnvelopeType::FeatureUpdate,
        EnvelopeType::TrialEvent,
        EnvelopeType::Error,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            EnvelopeType::Hello => "HELLO",
            EnvelopeType::Welcome => "WELCOME",
            EnvelopeType::SyncRequest => "SYNC_REQUEST",
            EnvelopeType::SyncResponse => "SYNC_RESPONSE",
            EnvelopeType::DocOp => "DOC_OP",
            EnvelopeType::Awareness => "AWARENESS",
            EnvelopeType::MicSet => "MIC_SET",
            EnvelopeType::MicState => "MIC_STATE",
            EnvelopeType::SpeechBoxUpsert => "SPEECH_BOX_UPSERT",
            EnvelopeType::SpeechPlay => "SPEECH_PLAY",
            EnvelopeType::SpeakerState => "SPEAKER_STATE",
            EnvelopeType::PlaybackToggle => "PLAYBACK_TOGGLE",
            EnvelopeType::PlaybackState => "PLAYBACK_STATE",
            EnvelopeType::AudioChunk => "AUDIO_CHUNK",
            EnvelopeType::TranscriptEvent => "TRANSCRIPT_EVENT",
            EnvelopeType::LabelDef => "LABEL_DEF",
            EnvelopeType::AnnotationOp => "ANNOTATION_OP",
            EnvelopeType::FeatureUpdate => "FEATURE_UPDATE",
            EnvelopeType::TrialEvent => "TRIAL_EVENT",
            EnvelopeType::Error => "ERROR",
        }
    }

    pub fn parse(name: &str) -> Option<EnvelopeType> {
        Self::ALL.into_iter().find(|t| t.as_str() == name)
    }
}

impl fmt::Display for EnvelopeType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl Message {
    pub fn kind(&self) -> EnvelopeType {
        match self {
            Message::Hello(_) => EnvelopeType::Hello,
            Message::Welcome(_) => EnvelopeType::Welcome,
            Message::SyncRequest(_) => EnvelopeType::SyncRequest,
            Message::SyncResponse(_) => EnvelopeType::SyncResponse,
            Message::DocOp(_) => EnvelopeType::DocOp,
            Message::Awareness(_) => EnvelopeType::Awareness,
            Message::MicSet(_) => EnvelopeType::MicSet,
            Message::MicState(_) => EnvelopeType::MicState,
            Message::SpeechBoxUpsert(_) => EnvelopeType::SpeechBoxUpsert,
            Message::SpeechPlay(_) => EnvelopeType::SpeechPlay,
            Message::SpeakerState(_) => EnvelopeType::SpeakerState,
            Message::PlaybackToggle(_) => EnvelopeType::PlaybackToggle,
            Message::PlaybackState(_) => EnvelopeType::PlaybackState,
            Message::AudioChunk(_) => EnvelopeType::AudioChunk,
            Message::TranscriptEvent(_) => EnvelopeType::TranscriptEvent,
            Message::LabelDef(_) => EnvelopeType::LabelDef,
            Message::AnnotationOp(_) => EnvelopeType::AnnotationOp,
            Message::FeatureUpdate(_) => EnvelopeType::FeatureUpdate,
            Message::TrialEvent(_) => EnvelopeType::TrialEvent,
            Message::Error(_) => EnvelopeType::Error,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Hello {
    pub token: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub last_server_seq: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Welcome {
    pub actor_id: String,
    pub role: Role,
    /// Editing replica assigned to wizards; absent for read-only roles.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replica: Option<u32>,
    pub features: FeatureSet,
    pub doc_vv: VersionVector,
    pub presence: Vec<PresencePayload>,
    pub head_seq: u64,
    pub palette: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncRequest {
    #[serde(default)]
    pub vv: VersionVector,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SyncResponse {
    pub ops: Vec<DocOp>,
    pub label_defs: Vec<LabelDef>,
    pub annotations: Vec<Annotation>,
    pub deleted_annotations: Vec<String>,
    pub mic: MicState,
    pub boxes: Vec<SpeechBox>,
    pub speaker_active: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub playback: Option<PlaybackState>,
    pub head_seq: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DocOpBatch {
    pub ops: Vec<DocOp>,
}

/// Presence update; `state == None` announces that the actor's presence is
/// gone.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Awareness {
    #[serde(default)]
    pub actor_id: String,
    #[serde(default)]
    pub state: Option<PresencePayload>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MicSet {
    pub on: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeechBoxUpsert {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub box_id: Option<String>,
    pub kind: BoxKind,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeechPlay {
    pub box_id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
    /// Box state after the play (editable boxes come back empty).
    #[serde(default, skip_serializing_if = "Option::is_none", rename = "box")]
    pub box_after: Option<SpeechBox>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum SpeakerSource {
    #[serde(rename_all = "camelCase")]
    Box { box_id: String },
    Playback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SpeakerState {
    pub active: bool,
    #[serde(flatten)]
    pub source: SpeakerSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlaybackToggle {
    #[serde(default)]
    pub from: Option<Anchor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct PlaybackState {
    pub active: bool,
    pub progress_index: usize,
    pub started_by: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AudioChunk {
    pub seq: u64,
    #[serde(with = "base64_bytes")]
    pub bytes: Vec<u8>,
    #[serde(default, rename = "final")]
    pub is_final: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum LabelDefMsg {
    /// Client request.
    Define { name: String, color: String },
    /// Server broadcast of an accepted definition.
    Defined { label: LabelDef },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "action", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum AnnotationOp {
    /// Client request to annotate `[start, end]`.
    Add {
        #[serde(flatten)]
        body: AnnotationBody,
        start: Anchor,
        end: Anchor,
    },
    /// Client request to remove a note.
    #[serde(rename_all = "camelCase")]
    Delete { anno_id: String },
    /// Server broadcast. Highlights carry the mark op that renders them.
    Added {
        annotation: Annotation,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        mark: Option<DocOp>,
    },
    #[serde(rename_all = "camelCase")]
    Deleted { anno_id: String },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct FeatureUpdate {
    pub actor_id: String,
    pub features: FeatureSet,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TrialEventKind {
    Open,
    Join,
    Leave,
    Close,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct TrialEvent {
    pub event: TrialEventKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub actor_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub role: Option<Role>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub display_name: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct ErrorPayload {
    pub code: ErrorCode,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ref_type: Option<String>,
}

mod base64_bytes {
    use base64::engine::general_purpose::STANDARD;
    use base64::Engine;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(bytes: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&STANDARD.encode(bytes))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        STANDARD.decode(s).map_err(serde::de::Error::custom)
    }
}
