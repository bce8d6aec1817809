//! Replicated character sequence with tombstones, anchors and marks.

mod doc;
mod types;
mod version;

pub use doc::{Doc, ResolvedMark};
pub use types::{
    Anchor, AppliedReport, Bias, DocOp, Item, ItemId, MarkSpan, OpKind, ReplicaId, Stamp,
};
pub use version::VersionVector;

use crate::protocol::ErrorCode;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DocError {
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("unknown item {0}")]
    UnknownItem(ItemId),
    #[error("range start {start} is after end {end}")]
    RangeInverted { start: usize, end: usize },
    #[error("malformed op {id}: {reason}")]
    MalformedOp { id: ItemId, reason: String },
}

impl DocError {
    pub fn code(&self) -> ErrorCode {
        match self {
            DocError::IndexOutOfRange { .. } => ErrorCode::IndexOutOfRange,
            DocError::UnknownItem(_) => ErrorCode::UnknownItem,
            DocError::RangeInverted { .. } => ErrorCode::RangeInverted,
            DocError::MalformedOp { .. } => ErrorCode::MalformedOp,
        }
    }
}
