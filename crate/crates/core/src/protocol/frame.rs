//! Frame codec: `<decimal byte length>:<JSON object>`, all UTF-8 text.

use serde::Deserialize;

use super::message::{Envelope, EnvelopeType};
use super::ErrorCode;

const MAX_LENGTH_DIGITS: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("decode error at byte {offset}: {kind}")]
pub struct DecodeError {
    pub offset: usize,
    pub kind: DecodeErrorKind,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum DecodeErrorKind {
    #[error("frame truncated, {missing} bytes missing")]
    Truncated { missing: usize },
    #[error("bad length prefix")]
    BadLength,
    #[error("payload is not UTF-8")]
    NotUtf8,
    #[error("invalid JSON: {0}")]
    Json(String),
    #[error("unknown envelope type {0:?}")]
    UnknownType(String),
    #[error("{0} unexpected bytes after frame")]
    TrailingData(usize),
}

impl DecodeError {
    pub fn code(&self) -> ErrorCode {
        match self.kind {
            DecodeErrorKind::UnknownType(_) => ErrorCode::UnknownType,
            _ => ErrorCode::DecodeError,
        }
    }
}

pub fn encode(envelope: &Envelope) -> Vec<u8> {
    encode_string(envelope).into_bytes()
}

pub fn encode_string(envelope: &Envelope) -> String {
    let json = serde_json::to_string(envelope).expect("envelopes always serialize");
    format!("{}:{}", json.len(), json)
}

/// Decodes exactly one frame; trailing bytes are an error.
pub fn decode(bytes: &[u8]) -> Result<Envelope, DecodeError> {
    let (envelope, used) = decode_prefix(bytes)?;
    if used != bytes.len() {
        return Err(DecodeError {
            offset: used,
            kind: DecodeErrorKind::TrailingData(bytes.len() - used),
        });
    }
    Ok(envelope)
}

/// Decodes the first frame in `bytes`, returning it with the number of bytes
/// consumed.
pub fn decode_prefix(bytes: &[u8]) -> Result<(Envelope, usize), DecodeError> {
    let digits = bytes
        .iter()
        .take(MAX_LENGTH_DIGITS + 1)
        .take_while(|b| b.is_ascii_digit())
        .count();
    if digits == 0 || digits > MAX_LENGTH_DIGITS {
        return Err(DecodeError {
            offset: 0,
            kind: if bytes.is_empty() {
                DecodeErrorKind::Truncated { missing: 2 }
            } else {
                DecodeErrorKind::BadLength
            },
        });
    }
    match bytes.get(digits) {
        Some(b':') => {}
        Some(_) => {
            return Err(DecodeError {
                offset: digits,
                kind: DecodeErrorKind::BadLength,
            })
        }
        None => {
            return Err(DecodeError {
                offset: digits,
                kind: DecodeErrorKind::Truncated { missing: 1 },
            })
        }
    }
    let len: usize = std::str::from_utf8(&bytes[..digits])
        .expect("ascii digits")
        .parse()
        .map_err(|_| DecodeError {
            offset: 0,
            kind: DecodeErrorKind::BadLength,
        })?;
    let start = digits + 1;
    let available = bytes.len() - start;
    if available < len {
        return Err(DecodeError {
            offset: bytes.len(),
            kind: DecodeErrorKind::Truncated {
                missing: len - available,
            },
        });
    }
    let body = &bytes[start..start + len];
    let text = std::str::from_utf8(body).map_err(|e| DecodeError {
        offset: start + e.valid_up_to(),
        kind: DecodeErrorKind::NotUtf8,
    })?;
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| DecodeError {
        offset: start + json_offset(text, e.line(), e.column()),
        kind: DecodeErrorKind::Json(e.to_string()),
    })?;
    if let Some(name) = value.get("type").and_then(|t| t.as_str()) {
        if EnvelopeType::parse(name).is_none() {
            return Err(DecodeError {
                offset: start,
                kind: DecodeErrorKind::UnknownType(name.to_owned()),
            });
        }
    }
    let envelope = Envelope::deserialize(value).map_err(|e| DecodeError {
        offset: start,
        kind: DecodeErrorKind::Json(e.to_string()),
    })?;
    Ok((envelope, start + len))
}

/// Byte offset of a 1-based (line, column) position reported by serde_json.
fn json_offset(text: &str, line: usize, column: usize) -> usize {
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line.saturating_sub(1))
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}
