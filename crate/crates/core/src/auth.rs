//! Compact signed tokens: `base64url(claims JSON) "." base64url(HMAC-SHA256)`.

use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;
use hmac::{Hmac, Mac};
use serde::{Deserialize, Serialize};
use sha2::Sha256;

use crate::protocol::ErrorCode;
use crate::trial::Role;

type HmacSha256 = Hmac<Sha256>;

/// Times are milliseconds since the Unix epoch.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct Claims {
    pub user_id: String,
    pub role: Role,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub trial_id: Option<String>,
    pub issued_at: u64,
    pub expires_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum AuthError {
    #[error("token signature does not verify")]
    BadSignature,
    #[error("token expired")]
    Expired,
    #[error("malformed token: {0}")]
    Malformed(&'static str),
    #[error("server secret is not configured")]
    NoSecret,
    #[error("token lifetime must be positive")]
    ZeroTtl,
}

impl AuthError {
    pub fn code(&self) -> ErrorCode {
        match self {
            AuthError::BadSignature => ErrorCode::BadSignature,
            AuthError::Expired => ErrorCode::Expired,
            AuthError::Malformed(_) => ErrorCode::Malformed,
            AuthError::NoSecret | AuthError::ZeroTtl => ErrorCode::Internal,
        }
    }
}

fn mac(secret: &str) -> HmacSha256 {
    HmacSha256::new_from_slice(secret.as_bytes()).expect("HMAC accepts keys of any length")
}

pub fn issue_token(
    user_id: &str,
    role: Role,
    trial_id: Option<&str>,
    secret: &str,
    ttl_ms: u64,
    now_ms: u64,
) -> Result<String, AuthError> {
    if secret.is_empty() {
        return Err(AuthError::NoSecret);
    }
    if ttl_ms == 0 {
        return Err(AuthError::ZeroTtl);
    }
    let claims = Claims {
        user_id: user_id.to_owned(),
        role,
        trial_id: trial_id.map(str::to_owned),
        issued_at: now_ms,
        expires_at: now_ms.saturating_add(ttl_ms),
    };
    let payload = URL_SAFE_NO_PAD.encode(serde_json::to_vec(&claims).expect("claims serialize"));
    let mut m = mac(secret);
    m.update(payload.as_bytes());
    let sig = URL_SAFE_NO_PAD.encode(m.finalize().into_bytes());
    Ok(format!("{payload}.{sig}"))
}

/// Checks the signature first, then decodes and checks expiry.
pub fn verify_token(token: &str, secret: &str, now_ms: u64) -> Result<Claims, AuthError> {
    if secret.is_empty() {
        return Err(AuthError::NoSecret);
    }
    let (payload, sig) = token
        .split_once('.')
        .ok_or(AuthError::Malformed("missing separator"))?;
    let sig = URL_SAFE_NO_PAD
        .decode(sig)
        .map_err(|_| AuthError::Malformed("signature is not base64url"))?;
    let mut m = mac(secret);
    m.update(payload.as_bytes());
    m.verify_slice(&sig).map_err(|_| AuthError::BadSignature)?;
    let raw = URL_SAFE_NO_PAD
        .decode(payload)
        .map_err(|_| AuthError::Malformed("payload is not base64url"))?;
    let claims: Claims =
        serde_json::from_slice(&raw).map_err(|_| AuthError::Malformed("payload is not claims"))?;
    if now_ms >= claims.expires_at {
        return Err(AuthError::Expired);
    }
    Ok(claims)
}
