//! Chat-completion contract and the deterministic scripted backend.
//!
//! Network and tape-backed implementations live in the `multistrat` crate.

use alloc::boxed::Box;
use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt::Write;
use core::sync::atomic::{AtomicUsize, Ordering};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
}

impl ChatMessage {
    pub fn system(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::System,
            content: content.into(),
        }
    }

    pub fn user(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::User,
            content: content.into(),
        }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        ChatMessage {
            role: Role::Assistant,
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum BackendError {
    #[error("invalid request: {0}")]
    Invalid(String),
    #[error("transport error after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("request timed out after {attempts} attempt(s)")]
    Timeout { attempts: u32 },
    #[error("no fixture response for digest {digest}")]
    Fixture { digest: String },
    #[error("backend configuration: {0}")]
    Config(String),
}

/// Checks the shared preconditions: non-empty messages ending with a user
/// turn, and non-empty user/assistant content.
pub fn check_messages(messages: &[ChatMessage]) -> Result<(), BackendError> {
    match messages.last() {
        None => return Err(BackendError::Invalid("empty message list".into())),
        Some(m) if m.role != Role::User => {
            return Err(BackendError::Invalid("last message must have role user".into()))
        }
        _ => {}
    }
    if let Some(i) = messages
        .iter()
        .position(|m| m.role != Role::System && m.content.trim().is_empty())
    {
        return Err(BackendError::Invalid(alloc::format!("message {i} has empty content")));
    }
    Ok(())
}

/// A blocking chat-completion client. Implementations must be safe to call
/// from many threads and must not depend on anything but their arguments
/// and configuration for scripted or replayed responses.
pub trait ChatBackend: Send + Sync {
    fn complete(&self, messages: &[ChatMessage], sample_index: u32) -> Result<String, BackendError>;
}

impl<B: ChatBackend + ?Sized> ChatBackend for &B {
    fn complete(&self, messages: &[ChatMessage], sample_index: u32) -> Result<String, BackendError> {
        (**self).complete(messages, sample_index)
    }
}

impl<B: ChatBackend + ?Sized> ChatBackend for Box<B> {
    fn complete(&self, messages: &[ChatMessage], sample_index: u32) -> Result<String, BackendError> {
        (**self).complete(messages, sample_index)
    }
}

/// Hex SHA-256 of the canonical JSON `{"messages":[...],"sample_index":n}`.
pub fn request_digest(messages: &[ChatMessage], sample_index: u32) -> String {
    #[derive(Serialize)]
    struct Canonical<'a> {
        messages: &'a [ChatMessage],
        sample_index: u32,
    }
    let bytes = serde_json::to_vec(&Canonical { messages, sample_index }).expect("messages serialize");
    let mut out = String::with_capacity(64);
    for b in Sha256::digest(&bytes) {
        write!(out, "{b:02x}").expect("writing to a String");
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Endpoint,
    Scripted,
    Replay,
}

fn default_temperature() -> f64 {
    0.7
}
fn default_max_tokens() -> u32 {
    1024
}
fn default_timeout() -> u64 {
    60
}
fn default_retries() -> u32 {
    3
}

/// Configuration of one named backend.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendProfile {
    pub kind: BackendKind,
    #[serde(default)]
    pub base_url: Option<String>,
    #[serde(default)]
    pub model_name: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_output_tokens: u32,
    /// Per-request timeout in seconds.
    #[serde(default = "default_timeout")]
    pub timeout: u64,
    #[serde(default = "default_retries")]
    pub retries: u32,
    #[serde(default)]
    pub seed: Option<u64>,
    /// Name of the environment variable holding the API key.
    #[serde(default)]
    pub api_key_env: Option<String>,
    /// Scripted fixture file.
    #[serde(default)]
    pub script: Option<String>,
    /// Replay tape file.
    #[serde(default)]
    pub tape: Option<String>,
    /// Replay: forward misses to the named profile and record them.
    #[serde(default)]
    pub forward: Option<String>,
    /// Generation resampling budget; defaults by kind.
    #[serde(default)]
    pub resample: Option<u32>,
}

impl BackendProfile {
    pub fn validate(&self) -> Result<(), BackendError> {
        if self.temperature.is_nan() || self.temperature < 0.0 {
            return Err(BackendError::Config("temperature must be >= 0".into()));
        }
        match self.kind {
            BackendKind::Endpoint if self.base_url.is_none() => {
                Err(BackendError::Config("endpoint profile requires base_url".into()))
            }
            BackendKind::Scripted if self.script.is_none() => {
                Err(BackendError::Config("scripted profile requires script".into()))
            }
            BackendKind::Replay if self.tape.is_none() => {
                Err(BackendError::Config("replay profile requires tape".into()))
            }
            _ => Ok(()),
        }
    }

    /// Resampling budget for malformed generations: 1 for endpoints, 0 otherwise.
    pub fn resample_budget(&self) -> u32 {
        self.resample.unwrap_or(match self.kind {
            BackendKind::Endpoint => 1,
            BackendKind::Scripted | BackendKind::Replay => 0,
        })
    }
}

/// One scripted response, keyed either by digest or by the request itself.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptEntry {
    #[serde(default)]
    pub digest: Option<String>,
    #[serde(default)]
    pub messages: Option<Vec<ChatMessage>>,
    #[serde(default)]
    pub sample_index: u32,
    pub response: String,
}

/// Fixture file contents for a scripted backend.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Script {
    #[serde(default)]
    pub entries: Vec<ScriptEntry>,
    #[serde(default)]
    pub fallback: Option<String>,
}

type Responder = Box<dyn Fn(&[ChatMessage], u32) -> Option<String> + Send + Sync>;

/// Deterministic backend answering from a digest table, then an optional
/// pure responder function, then an optional fallback.
#[derive(Default)]
pub struct ScriptedBackend {
    table: BTreeMap<String, String>,
    responder: Option<Responder>,
    fallback: Option<String>,
    calls: AtomicUsize,
}

impl core::fmt::Debug for ScriptedBackend {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        f.debug_struct("ScriptedBackend")
            .field("entries", &self.table.len())
            .field("responder", &self.responder.is_some())
            .field("fallback", &self.fallback)
            .finish()
    }
}

impl ScriptedBackend {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_script(script: Script) -> Result<Self, BackendError> {
        let mut backend = ScriptedBackend {
            fallback: script.fallback,
            ..Self::default()
        };
        for (i, entry) in script.entries.into_iter().enumerate() {
            let digest = match (entry.digest, entry.messages) {
                (Some(d), None) => d,
                (None, Some(m)) => request_digest(&m, entry.sample_index),
                _ => {
                    return Err(BackendError::Config(alloc::format!(
                        "script entry {i} needs exactly one of digest or messages"
                    )))
                }
            };
            backend.table.insert(digest, entry.response);
        }
        Ok(backend)
    }

    pub fn with_response(mut self, messages: &[ChatMessage], sample_index: u32, response: impl Into<String>) -> Self {
        self.insert(messages, sample_index, response);
        self
    }

    pub fn insert(&mut self, messages: &[ChatMessage], sample_index: u32, response: impl Into<String>) {
        self.table.insert(request_digest(messages, sample_index), response.into());
    }

    pub fn insert_digest(&mut self, digest: impl Into<String>, response: impl Into<String>) {
        self.table.insert(digest.into(), response.into());
    }

    /// Pure fallback function consulted after the digest table.
    pub fn with_responder(mut self, f: impl Fn(&[ChatMessage], u32) -> Option<String> + Send + Sync + 'static) -> Self {
        self.responder = Some(Box::new(f));
        self
    }

    pub fn with_fallback(mut self, response: impl Into<String>) -> Self {
        self.fallback = Some(response.into());
        self
    }

    /// Number of completions served or attempted.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::Relaxed)
    }
}

impl ChatBackend for ScriptedBackend {
    fn complete(&self, messages: &[ChatMessage], sample_index: u32) -> Result<String, BackendError> {
        check_messages(messages)?;
        self.calls.fetch_add(1, Ordering::Relaxed);
        let digest = request_digest(messages, sample_index);
        if let Some(r) = self.table.get(&digest) {
            return Ok(r.clone());
        }
        if let Some(r) = self.responder.as_ref().and_then(|f| f(messages, sample_index)) {
            return Ok(r);
        }
        self.fallback.clone().ok_or(BackendError::Fixture { digest })
    }
}

/// One line of a record/replay tape.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TapeRecord {
    pub digest: String,
    pub sample_index: u32,
    pub response: String,
    /// Unix seconds at recording time.
    pub timestamp: u64,
}

impl TapeRecord {
    pub fn to_line(&self) -> String {
        let mut line = serde_json::to_string(self).expect("tape record serializes");
        line.push('\n');
        line
    }
}

/// Parses a tape; later records for the same digest win.
pub fn parse_tape(text: &str) -> Result<BTreeMap<String, String>, BackendError> {
    let mut map = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let rec: TapeRecord = serde_json::from_str(line)
            .map_err(|e| BackendError::Config(alloc::format!("tape line {}: {}", i + 1, e)))?;
        map.insert(rec.digest, rec.response);
    }
    Ok(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn msgs() -> Vec<ChatMessage> {
        vec![ChatMessage::system("be kind"), ChatMessage::user("hello")]
    }

    #[test]
    fn digest_depends_on_sample_index_and_content() {
        let d0 = request_digest(&msgs(), 0);
        assert_eq!(d0.len(), 64);
        assert_eq!(d0, request_digest(&msgs(), 0));
        assert_ne!(d0, request_digest(&msgs(), 1));
        assert_ne!(d0, request_digest(&[ChatMessage::user("hello")], 0));
        let all: alloc::collections::BTreeSet<_> = (0..10).map(|i| request_digest(&msgs(), i)).collect();
        assert_eq!(all.len(), 10);
    }

    #[test]
    fn scripted_lookup_order() {
        let b = ScriptedBackend::new()
            .with_response(&msgs(), 0, "Hello")
            .with_responder(|m, i| (i == 1).then(|| m[1].content.to_uppercase()));
        assert_eq!(b.complete(&msgs(), 0).unwrap(), "Hello");
        assert_eq!(b.complete(&msgs(), 1).unwrap(), "HELLO");
        let miss = b.complete(&msgs(), 2).unwrap_err();
        assert_eq!(miss, BackendError::Fixture { digest: request_digest(&msgs(), 2) });
        assert_eq!(b.calls(), 3);
        let b = b.with_fallback("fine");
        assert_eq!(b.complete(&msgs(), 2).unwrap(), "fine");
    }

    #[test]
    fn preconditions_are_checked() {
        let b = ScriptedBackend::new().with_fallback("x");
        assert!(matches!(b.complete(&[], 0), Err(BackendError::Invalid(_))));
        assert!(matches!(b.complete(&[ChatMessage::system("s")], 0), Err(BackendError::Invalid(_))));
        assert!(matches!(b.complete(&[ChatMessage::user(" ")], 0), Err(BackendError::Invalid(_))));
        assert_eq!(b.calls(), 0);
    }

    #[test]
    fn script_file_entries() {
        let script: Script = serde_json::from_str(&alloc::format!(
            r#"{{"entries":[{{"digest":"{}","response":"A"}},{{"messages":[{{"role":"user","content":"q"}}],"sample_index":2,"response":"B"}}]}}"#,
            request_digest(&msgs(), 0)
        ))
        .unwrap();
        let b = ScriptedBackend::from_script(script).unwrap();
        assert_eq!(b.complete(&msgs(), 0).unwrap(), "A");
        assert_eq!(b.complete(&[ChatMessage::user("q")], 2).unwrap(), "B");
        let bad = Script {
            entries: vec![ScriptEntry {
                digest: None,
                messages: None,
                sample_index: 0,
                response: "x".into(),
            }],
            fallback: None,
        };
        assert!(matches!(ScriptedBackend::from_script(bad), Err(BackendError::Config(_))));
    }

    #[test]
    fn profile_validation_and_budget() {
        let p: BackendProfile = serde_json::from_str(r#"{"kind":"endpoint","model_name":"m"}"#).unwrap();
        assert!(matches!(p.validate(), Err(BackendError::Config(_))));
        let p = BackendProfile {
            base_url: Some("http://localhost:8000/v1".into()),
            ..p
        };
        assert!(p.validate().is_ok());
        assert_eq!(p.resample_budget(), 1);
        assert_eq!(p.temperature, 0.7);
        let s: BackendProfile = serde_json::from_str(r#"{"kind":"scripted","script":"s.json"}"#).unwrap();
        assert_eq!(s.resample_budget(), 0);
    }

    #[test]
    fn tape_round_trip() {
        let rec = TapeRecord {
            digest: "ab".into(),
            sample_index: 0,
            response: "hi\nthere".into(),
            timestamp: 1,
        };
        let newer = TapeRecord {
            response: "bye".into(),
            ..rec.clone()
        };
        let text = alloc::format!("{}\n{}", rec.to_line(), newer.to_line());
        let map = parse_tape(&text).unwrap();
        assert_eq!(map.get("ab").map(String::as_str), Some("bye"));
        assert!(parse_tape("{").is_err());
        assert!(parse_tape("").unwrap().is_empty());
    }
}
