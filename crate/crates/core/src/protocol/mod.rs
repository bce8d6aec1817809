//! Wire protocol: envelope schema, frame codec and error codes.

mod error;
mod frame;
mod message;

pub use error::ErrorCode;
pub use frame::{decode, decode_prefix, encode, encode_string, DecodeError, DecodeErrorKind};
pub use message::{
    AnnotationOp, AudioChunk, Awareness, DocOpBatch, Envelope, EnvelopeType, ErrorPayload,
    FeatureUpdate, Hello, LabelDefMsg, Message, MicSet, PlaybackState, PlaybackToggle,
    SpeakerSource, SpeakerState, SpeechBoxUpsert, SpeechPlay, SyncRequest, SyncResponse,
    TrialEvent, TrialEventKind, Welcome,
};
