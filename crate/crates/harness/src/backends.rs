//! Backend implementations that need std: an OpenAI-compatible endpoint
//! client, a record/replay tape, a process-wide concurrency limit, and
//! construction from named profiles.

use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU32, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use log::{info, warn};
use multistrat_core::backend::{
    check_messages, parse_tape, request_digest, BackendError, BackendKind, BackendProfile, ChatBackend, ChatMessage, Script,
    ScriptedBackend, TapeRecord,
};
use serde::Serialize;
use serde_json::Value;

/// Capped exponential backoff between retries.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Backoff {
    pub base: Duration,
    pub cap: Duration,
}

impl Default for Backoff {
    fn default() -> Self {
        Backoff {
            base: Duration::from_millis(500),
            cap: Duration::from_secs(30),
        }
    }
}

impl Backoff {
    /// Delay before retry number `retry` (1-based).
    pub fn delay(&self, retry: u32) -> Duration {
        let factor = 1u32.checked_shl(retry.saturating_sub(1)).unwrap_or(u32::MAX);
        self.base.saturating_mul(factor).min(self.cap)
    }
}

/// Chat-completions client for OpenAI-compatible servers.
pub struct EndpointBackend {
    client: reqwest::blocking::Client,
    url: String,
    model: String,
    temperature: f64,
    max_tokens: u32,
    seed: Option<u64>,
    api_key: Option<String>,
    retries: u32,
    backoff: Backoff,
    attempts: AtomicU32,
}

impl std::fmt::Debug for EndpointBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EndpointBackend")
            .field("url", &self.url)
            .field("model", &self.model)
            .field("retries", &self.retries)
            .finish_non_exhaustive()
    }
}

#[derive(Serialize)]
struct CompletionRequest<'a> {
    model: &'a str,
    messages: &'a [ChatMessage],
    temperature: f64,
    max_tokens: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    seed: Option<u64>,
}

enum Failure {
    Transient(String),
    Timeout,
    Fatal(String),
}

impl EndpointBackend {
    pub fn from_profile(profile: &BackendProfile) -> Result<Self, BackendError> {
        profile.validate()?;
        let base = profile
            .base_url
            .as_deref()
            .ok_or_else(|| BackendError::Config("endpoint profile requires base_url".into()))?;
        let api_key = match &profile.api_key_env {
            Some(var) => Some(
                std::env::var(var).map_err(|_| BackendError::Config(format!("environment variable {var} is not set")))?,
            ),
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(profile.timeout))
            .build()
            .map_err(|e| BackendError::Config(e.to_string()))?;
        Ok(EndpointBackend {
            client,
            url: format!("{}/chat/completions", base.trim_end_matches('/')),
            model: profile.model_name.clone(),
            temperature: profile.temperature,
            max_tokens: profile.max_output_tokens,
            seed: profile.seed,
            api_key,
            retries: profile.retries,
            backoff: Backoff::default(),
            attempts: AtomicU32::new(0),
        })
    }

    pub fn with_backoff(mut self, backoff: Backoff) -> Self {
        self.backoff = backoff;
        self
    }

    /// Total HTTP attempts made so far.
    pub fn attempts(&self) -> u32 {
        self.attempts.load(Ordering::Relaxed)
    }

    fn attempt(&self, messages: &[ChatMessage]) -> Result<String, Failure> {
        let body = CompletionRequest {
            model: &self.model,
            messages,
            temperature: self.temperature,
            max_tokens: self.max_tokens,
            seed: self.seed,
        };
        let body = serde_json::to_vec(&body).map_err(|e| Failure::Fatal(e.to_string()))?;
        let mut req = self
            .client
            .post(&self.url)
            .header(reqwest::header::CONTENT_TYPE, "application/json")
            .body(body);
        if let Some(key) = &self.api_key {
            req = req.bearer_auth(key);
        }
        let resp = req.send().map_err(|e| {
            if e.is_timeout() {
                Failure::Timeout
            } else {
                Failure::Transient(e.to_string())
            }
        })?;
        let status = resp.status();
        let text = resp.text().map_err(|e| {
            if e.is_timeout() {
                Failure::Timeout
            } else {
                Failure::Transient(e.to_string())
            }
        })?;
        if status.as_u16() == 429 || status.is_server_error() {
            return Err(Failure::Transient(format!("HTTP {status}")));
        }
        if !status.is_success() {
            return Err(Failure::Fatal(format!("HTTP {status}: {}", truncate(&text, 200))));
        }
        let value: Value = serde_json::from_str(&text).map_err(|e| Failure::Fatal(format!("bad response body: {e}")))?;
        value
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .map(str::to_string)
            .ok_or_else(|| Failure::Fatal("response has no choices[0].message.content".into()))
    }
}

fn truncate(s: &str, max: usize) -> &str {
    match s.char_indices().nth(max) {
        Some((i, _)) => &s[..i],
        None => s,
    }
}

impl ChatBackend for EndpointBackend {
    fn complete(&self, messages: &[ChatMessage], _sample_index: u32) -> Result<String, BackendError> {
        check_messages(messages)?;
        let max = self.retries + 1;
        let mut last = Failure::Fatal(String::new());
        for attempt in 1..=max {
            if attempt > 1 {
                std::thread::sleep(self.backoff.delay(attempt - 1));
            }
            self.attempts.fetch_add(1, Ordering::Relaxed);
            info!("chat completion attempt {attempt}/{max} to {}", self.url);
            match self.attempt(messages) {
                Ok(text) => return Ok(text),
                Err(Failure::Fatal(message)) => return Err(BackendError::Transport { attempts: attempt, message }),
                Err(f) => {
                    match &f {
                        Failure::Timeout => warn!("attempt {attempt}/{max} timed out"),
                        Failure::Transient(m) => warn!("attempt {attempt}/{max} failed: {m}"),
                        Failure::Fatal(_) => {}
                    }
                    last = f;
                }
            }
        }
        Err(match last {
            Failure::Timeout => BackendError::Timeout { attempts: max },
            Failure::Transient(message) | Failure::Fatal(message) => BackendError::Transport { attempts: max, message },
        })
    }
}

/// Tape-backed cache. Hits replay stored responses; misses go to `forward`
/// and are appended to the tape, or fail when there is no forward backend.
pub struct ReplayBackend {
    entries: Mutex<BTreeMap<String, String>>,
    tape: Mutex<File>,
    forward: Option<Box<dyn ChatBackend>>,
}

impl ReplayBackend {
    pub fn open(tape: &Path, forward: Option<Box<dyn ChatBackend>>) -> Result<Self, BackendError> {
        let io_err = |e: std::io::Error| BackendError::Config(format!("{}: {e}", tape.display()));
        let entries = match std::fs::read_to_string(tape) {
            Ok(text) => parse_tape(&text)?,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound && forward.is_some() => BTreeMap::new(),
            Err(e) => return Err(io_err(e)),
        };
        let file = OpenOptions::new().create(true).append(true).open(tape).map_err(io_err)?;
        Ok(ReplayBackend {
            entries: Mutex::new(entries),
            tape: Mutex::new(file),
            forward,
        })
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("replay lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Wraps `forward` so that every call is recorded to `tape`.
pub fn record_session(forward: Box<dyn ChatBackend>, tape: &Path) -> Result<ReplayBackend, BackendError> {
    ReplayBackend::open(tape, Some(forward))
}

impl ChatBackend for ReplayBackend {
    fn complete(&self, messages: &[ChatMessage], sample_index: u32) -> Result<String, BackendError> {
        check_messages(messages)?;
        let digest = request_digest(messages, sample_index);
        if let Some(hit) = self.entries.lock().expect("replay lock").get(&digest) {
            return Ok(hit.clone());
        }
        let Some(forward) = &self.forward else {
            return Err(BackendError::Fixture { digest });
        };
        let response = forward.complete(messages, sample_index)?;
        let record = TapeRecord {
            digest: digest.clone(),
            sample_index,
            response: response.clone(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
        };
        {
            let mut tape = self.tape.lock().expect("tape lock");
            tape.write_all(record.to_line().as_bytes())
                .and_then(|_| tape.flush())
                .map_err(|e| BackendError::Config(format!("writing tape: {e}")))?;
        }
        self.entries.lock().expect("replay lock").insert(digest, response.clone());
        Ok(response)
    }
}

/// Counting semaphore shared by every backend of a process.
#[derive(Debug)]
pub struct Limiter {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl Limiter {
    pub fn new(permits: usize) -> Arc<Self> {
        Arc::new(Limiter {
            permits: Mutex::new(permits.max(1)),
            freed: Condvar::new(),
        })
    }

    fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().expect("limiter lock");
        while *n == 0 {
            n = self.freed.wait(n).expect("limiter lock");
        }
        *n -= 1;
        Permit(self)
    }
}

struct Permit<'a>(&'a Limiter);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().expect("limiter lock") += 1;
        self.0.freed.notify_one();
    }
}

/// A backend whose calls count against a shared [`Limiter`].
pub struct Limited {
    inner: Box<dyn ChatBackend>,
    limiter: Arc<Limiter>,
}

impl Limited {
    pub fn new(inner: Box<dyn ChatBackend>, limiter: Arc<Limiter>) -> Self {
        Limited { inner, limiter }
    }
}

impl ChatBackend for Limited {
    fn complete(&self, messages: &[ChatMessage], sample_index: u32) -> Result<String, BackendError> {
        let _permit = self.limiter.acquire();
        self.inner.complete(messages, sample_index)
    }
}

/// Named backend profiles plus the directory relative paths resolve against.
#[derive(Debug, Clone, Default)]
pub struct Profiles {
    pub profiles: BTreeMap<String, BackendProfile>,
    pub base_dir: PathBuf,
}

impl Profiles {
    pub fn get(&self, name: &str) -> Result<&BackendProfile, BackendError> {
        self.profiles
            .get(name)
            .ok_or_else(|| BackendError::Config(format!("unknown backend profile {name:?}")))
    }

    fn resolve(&self, p: &str) -> PathBuf {
        let path = Path::new(p);
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    /// Builds the backend for a profile name, or for the shorthands
    /// `scripted:<file>` and `replay:<tape>`.
    pub fn build(&self, name: &str, limiter: &Arc<Limiter>) -> Result<Box<dyn ChatBackend>, BackendError> {
        self.build_depth(name, limiter, 0)
    }

    fn build_depth(&self, name: &str, limiter: &Arc<Limiter>, depth: usize) -> Result<Box<dyn ChatBackend>, BackendError> {
        if depth > 8 {
            return Err(BackendError::Config(format!("profile {name:?}: forward chain too deep")));
        }
        let shorthand;
        let profile = if let Some(path) = name.strip_prefix("scripted:") {
            shorthand = shorthand_profile(BackendKind::Scripted, path);
            &shorthand
        } else if let Some(path) = name.strip_prefix("replay:") {
            shorthand = shorthand_profile(BackendKind::Replay, path);
            &shorthand
        } else {
            self.get(name)?
        };
        profile.validate()?;
        let backend: Box<dyn ChatBackend> = match profile.kind {
            BackendKind::Endpoint => Box::new(Limited::new(Box::new(EndpointBackend::from_profile(profile)?), limiter.clone())),
            BackendKind::Scripted => {
                let path = self.resolve(profile.script.as_deref().unwrap_or_default());
                let text = std::fs::read_to_string(&path)
                    .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
                let script: Script = serde_json::from_str(&text)
                    .map_err(|e| BackendError::Config(format!("{}: {e}", path.display())))?;
                Box::new(ScriptedBackend::from_script(script)?)
            }
            BackendKind::Replay => {
                let forward = match &profile.forward {
                    Some(f) => Some(self.build_depth(f, limiter, depth + 1)?),
                    None => None,
                };
                Box::new(ReplayBackend::open(&self.resolve(profile.tape.as_deref().unwrap_or_default()), forward)?)
            }
        };
        Ok(backend)
    }

    /// Resampling budget for a profile or shorthand name.
    pub fn resample_budget(&self, name: &str) -> u32 {
        if name.starts_with("scripted:") || name.starts_with("replay:") {
            return 0;
        }
        self.profiles.get(name).map(BackendProfile::resample_budget).unwrap_or(0)
    }
}

fn shorthand_profile(kind: BackendKind, path: &str) -> BackendProfile {
    BackendProfile {
        kind,
        base_url: None,
        model_name: String::new(),
        temperature: 0.0,
        max_output_tokens: 0,
        timeout: 0,
        retries: 0,
        seed: None,
        api_key_env: None,
        script: (kind == BackendKind::Scripted).then(|| path.to_string()),
        tape: (kind == BackendKind::Replay).then(|| path.to_string()),
        forward: None,
        resample: Some(0),
    }
}
