use std::fmt;

use serde::{Deserialize, Serialize};

/// Machine-readable error codes carried by `ERROR` envelopes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ErrorCode {
    AuthFailed,
    BadSignature,
    Expired,
    Malformed,
    UnknownTrial,
    TrialClosed,
    DuplicateEndUser,
    Forbidden,
    FeatureDisabled,
    UnknownType,
    DecodeError,
    NotHandshaken,
    MalformedOp,
    IndexOutOfRange,
    UnknownItem,
    RangeInverted,
    NotAWizard,
    StaleSeq,
    DuplicateLabel,
    EmptyName,
    UnknownLabel,
    UnknownCategory,
    UnknownAnnotation,
    EmptyNote,
    EmptyBox,
    UnknownBox,
    EmptySegment,
    MicOff,
    UnknownActor,
    SlowConsumer,
    Superseded,
    StorageFull,
    Internal,
}

impl ErrorCode {
    pub fn as_str(&self) -> &'static str {
        match self {
            ErrorCode::AuthFailed => "AUTH_FAILED",
            ErrorCode::BadSignature => "BAD_SIGNATURE",
            ErrorCode::Expired => "EXPIRED",
            ErrorCode::Malformed => "MALFORMED",
            ErrorCode::UnknownTrial => "UNKNOWN_TRIAL",
            ErrorCode::TrialClosed => "TRIAL_CLOSED",
            ErrorCode::DuplicateEndUser => "DUPLICATE_END_USER",
            ErrorCode::Forbidden => "FORBIDDEN",
            ErrorCode::FeatureDisabled => "FEATURE_DISABLED",
            ErrorCode::UnknownType => "UNKNOWN_TYPE",
            ErrorCode::DecodeError => "DECODE_ERROR",
            ErrorCode::NotHandshaken => "NOT_HANDSHAKEN",
            ErrorCode::MalformedOp => "MALFORMED_OP",
            ErrorCode::IndexOutOfRange => "INDEX_OUT_OF_RANGE",
            ErrorCode::UnknownItem => "UNKNOWN_ITEM",
            ErrorCode::RangeInverted => "RANGE_INVERTED",
            ErrorCode::NotAWizard => "NOT_A_WIZARD",
            ErrorCode::StaleSeq => "STALE_SEQ",
            ErrorCode::DuplicateLabel => "DUPLICATE_LABEL",
            ErrorCode::EmptyName => "EMPTY_NAME",
            ErrorCode::UnknownLabel => "UNKNOWN_LABEL",
            ErrorCode::UnknownCategory => "UNKNOWN_CATEGORY",
            ErrorCode::UnknownAnnotation => "UNKNOWN_ANNOTATION",
            ErrorCode::EmptyNote => "EMPTY_NOTE",
            ErrorCode::EmptyBox => "EMPTY_BOX",
            ErrorCode::UnknownBox => "UNKNOWN_BOX",
            ErrorCode::EmptySegment => "EMPTY_SEGMENT",
            ErrorCode::MicOff => "MIC_OFF",
            ErrorCode::UnknownActor => "UNKNOWN_ACTOR",
            ErrorCode::SlowConsumer => "SLOW_CONSUMER",
            ErrorCode::Superseded => "SUPERSEDED",
            ErrorCode::StorageFull => "STORAGE_FULL",
            ErrorCode::Internal => "INTERNAL",
        }
    }
}

impl fmt::Display for ErrorCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}
