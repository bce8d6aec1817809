//! Server configuration file (TOML).

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use serde::Deserialize;
use wizundry_core::trial::Role;

pub const SECRET_ENV: &str = "WIZUNDRY_SECRET";
pub const DEFAULT_LISTEN: &str = "127.0.0.1:8080";
pub const DEFAULT_PRESENCE_TTL_SECONDS: u64 = 30;
pub const DEFAULT_TOKEN_TTL_SECONDS: u64 = 12 * 60 * 60;

/// A rejected configuration, with the path of the offending field.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("CONFIG_INVALID: {field}: {message}")]
pub struct ConfigError {
    pub field: String,
    pub message: String,
}

impl ConfigError {
    pub const CODE: &'static str = "CONFIG_INVALID";

    fn new(field: impl Into<String>, message: impl Into<String>) -> Self {
        Self {
            field: field.into(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct UserEntry {
    pub user_id: String,
    pub password: String,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SttProviderKind {
    Mock,
    ExternalCommand,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct SttConfig {
    pub provider: SttProviderKind,
    /// Program for `external-command`.
    #[serde(default)]
    pub command: Option<String>,
    #[serde(default)]
    pub args: Vec<String>,
}

impl Default for SttConfig {
    fn default() -> Self {
        Self {
            provider: SttProviderKind::Mock,
            command: None,
            args: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TtsProviderKind {
    Mock,
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
pub struct TtsConfig {
    pub provider: TtsProviderKind,
}

impl Default for TtsConfig {
    fn default() -> Self {
        Self {
            provider: TtsProviderKind::Mock,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "camelCase")]
struct RawConfig {
    listen_address: Option<String>,
    secret: Option<String>,
    #[serde(default)]
    users: Vec<UserEntry>,
    #[serde(default)]
    stt: SttConfig,
    #[serde(default)]
    tts: TtsConfig,
    data_dir: Option<PathBuf>,
    presence_ttl_seconds: Option<u64>,
    token_ttl_seconds: Option<u64>,
    static_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ServerConfig {
    pub listen_address: SocketAddr,
    pub secret: String,
    pub users: Vec<UserEntry>,
    pub stt: SttConfig,
    pub tts: TtsConfig,
    pub data_dir: PathBuf,
    pub presence_ttl_seconds: u64,
    pub token_ttl_seconds: u64,
    /// Built browser UI, served at `/` when set.
    pub static_dir: Option<PathBuf>,
}

impl ServerConfig {
    /// A config for tests and embedding: mock providers, no users.
    pub fn new(secret: impl Into<String>, data_dir: impl Into<PathBuf>) -> Self {
        Self {
            listen_address: DEFAULT_LISTEN.parse().expect("valid default"),
            secret: secret.into(),
            users: Vec::new(),
            stt: SttConfig::default(),
            tts: TtsConfig::default(),
            data_dir: data_dir.into(),
            presence_ttl_seconds: DEFAULT_PRESENCE_TTL_SECONDS,
            token_ttl_seconds: DEFAULT_TOKEN_TTL_SECONDS,
            static_dir: None,
        }
    }

    pub fn user(&self, user_id: &str) -> Option<&UserEntry> {
        self.users.iter().find(|u| u.user_id == user_id)
    }
}

/// A validated config plus the keys that were present but not understood.
#[derive(Debug, Clone)]
pub struct Loaded {
    pub config: ServerConfig,
    pub unknown_keys: Vec<String>,
}

pub fn load_config(path: &Path, secret_override: Option<String>) -> Result<Loaded, ConfigError> {
    let text = fs::read_to_string(path)
        .map_err(|e| ConfigError::new("", format!("cannot read {}: {e}", path.display())))?;
    let base = path.parent().unwrap_or(Path::new("."));
    parse_config(&text, base, secret_override)
}

/// Parses and validates. Relative paths are taken from `base`.
pub fn parse_config(
    text: &str,
    base: &Path,
    secret_override: Option<String>,
) -> Result<Loaded, ConfigError> {
    let de = toml::Deserializer::parse(text).map_err(|e| ConfigError::new("", e.message().to_owned()))?;
    let mut unknown_keys = Vec::new();
    let raw: RawConfig = serde_ignored::deserialize(de, |p| unknown_keys.push(p.to_string()))
        .map_err(|e: toml::de::Error| {
            let field = field_from_message(e.message());
            ConfigError::new(field, e.message().to_owned())
        })?;

    let listen_address = raw
        .listen_address
        .as_deref()
        .unwrap_or(DEFAULT_LISTEN)
        .parse::<SocketAddr>()
        .map_err(|e| ConfigError::new("listenAddress", e.to_string()))?;

    let secret = secret_override
        .filter(|s| !s.is_empty())
        .or(raw.secret)
        .unwrap_or_default();
    if secret.trim().is_empty() {
        return Err(ConfigError::new(
            "secret",
            format!("missing or empty (set it in the file or via {SECRET_ENV})"),
        ));
    }

    for (i, u) in raw.users.iter().enumerate() {
        if u.user_id.trim().is_empty() {
            return Err(ConfigError::new(format!("users[{i}].userId"), "empty"));
        }
        if u.password.is_empty() {
            return Err(ConfigError::new(format!("users[{i}].password"), "empty"));
        }
        if raw.users[..i].iter().any(|o| o.user_id == u.user_id) {
            return Err(ConfigError::new(
                format!("users[{i}].userId"),
                format!("duplicate user {:?}", u.user_id),
            ));
        }
    }

    if raw.stt.provider == SttProviderKind::ExternalCommand
        && raw.stt.command.as_deref().map_or(true, |c| c.trim().is_empty())
    {
        return Err(ConfigError::new(
            "stt.command",
            "required when stt.provider is external-command",
        ));
    }

    let presence_ttl_seconds = raw.presence_ttl_seconds.unwrap_or(DEFAULT_PRESENCE_TTL_SECONDS);
    if presence_ttl_seconds == 0 {
        return Err(ConfigError::new("presenceTtlSeconds", "must be positive"));
    }
    let token_ttl_seconds = raw.token_ttl_seconds.unwrap_or(DEFAULT_TOKEN_TTL_SECONDS);
    if token_ttl_seconds == 0 {
        return Err(ConfigError::new("tokenTtlSeconds", "must be positive"));
    }

    let data_dir = base.join(raw.data_dir.unwrap_or_else(|| PathBuf::from("data")));
    let static_dir = raw.static_dir.map(|d| base.join(d));

    Ok(Loaded {
        config: ServerConfig {
            listen_address,
            secret,
            users: raw.users,
            stt: raw.stt,
            tts: raw.tts,
            data_dir,
            presence_ttl_seconds,
            token_ttl_seconds,
            static_dir,
        },
        unknown_keys,
    })
}

/// toml/serde messages name the field inline ("missing field `secret`");
/// pull it out so the error carries a path.
fn field_from_message(msg: &str) -> String {
    msg.split('`').nth(1).unwrap_or("").to_owned()
}

/// Creates the data directory if needed and checks that it is writable.
pub fn ensure_data_dir(dir: &Path) -> Result<(), ConfigError> {
    let err = |e: std::io::Error| ConfigError::new("dataDir", format!("{}: {e}", dir.display()));
    fs::create_dir_all(dir).map_err(err)?;
    let probe = dir.join(".write-probe");
    fs::write(&probe, b"").map_err(err)?;
    fs::remove_file(&probe).map_err(err)?;
    Ok(())
}
