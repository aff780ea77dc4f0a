//! Chat-completion backends: a live HTTP client for the chat-completions
//! wire format, a replay store keyed by request hash, and a recorder that
//! fills the store from another backend.

use std::path::{Path, PathBuf};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::prompt::{PromptBundle, Role};

pub const DEFAULT_MODEL: &str = "gpt-4-1106-preview";
/// Temperature for experiment runs, which need run-to-run spread.
pub const EXPERIMENT_TEMPERATURE: f64 = 0.7;
/// Temperature for the bot, which needs stable answers.
pub const BOT_TEMPERATURE: f64 = 0.2;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 4;

#[derive(Debug, Error)]
pub enum LlmError {
    #[error("backend unavailable: {0}")]
    BackendUnavailable(String),
    #[error("request timed out after {0:?}")]
    Timeout(Duration),
    #[error("no recorded response for request {0}")]
    ReplayMiss(String),
    #[error("rate limited (retry after {retry_after:?})")]
    RateLimited { retry_after: Option<Duration> },
    #[error("replay store: {0}")]
    Store(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WireMessage {
    pub role: String,
    pub content: String,
}

/// A chat-completions request as sent on the wire.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model: String,
    pub temperature: f64,
    /// Sampling seed; experiments pass the run index so repeated runs are
    /// distinct requests.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub messages: Vec<WireMessage>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GenerationParams {
    pub model: String,
    pub temperature: f64,
    pub seed: Option<u64>,
}

impl GenerationParams {
    pub fn experiment(model: &str, run: u64) -> Self {
        GenerationParams {
            model: model.to_string(),
            temperature: EXPERIMENT_TEMPERATURE,
            seed: Some(run),
        }
    }

    pub fn bot(model: &str) -> Self {
        GenerationParams {
            model: model.to_string(),
            temperature: BOT_TEMPERATURE,
            seed: None,
        }
    }
}

impl ChatRequest {
    pub fn from_bundle(bundle: &PromptBundle, params: &GenerationParams) -> Self {
        let mut messages = vec![WireMessage {
            role: "system".into(),
            content: bundle.system.clone(),
        }];
        messages.extend(bundle.turns.iter().map(|t| WireMessage {
            role: match t.role {
                Role::User => "user".into(),
                Role::Assistant => "assistant".into(),
            },
            content: t.content.clone(),
        }));
        ChatRequest {
            model: params.model.clone(),
            temperature: params.temperature,
            seed: params.seed,
            messages,
        }
    }

    /// JSON with keys in sorted order.
    pub fn canonical_json(&self) -> String {
        let messages: Vec<Value> = self
            .messages
            .iter()
            .map(|m| json!({ "content": m.content, "role": m.role }))
            .collect();
        let mut parts = vec![
            format!("\"messages\":{}", Value::Array(messages)),
            format!("\"model\":{}", Value::String(self.model.clone())),
        ];
        if let Some(seed) = self.seed {
            parts.push(format!("\"seed\":{seed}"));
        }
        parts.push(format!("\"temperature\":{}", json!(self.temperature)));
        format!("{{{}}}", parts.join(","))
    }

    /// Hex SHA-256 of the canonical JSON; the replay key.
    pub fn hash(&self) -> String {
        hex::encode(Sha256::digest(self.canonical_json().as_bytes()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BackendReply {
    pub text: String,
    pub latency_ms: u64,
}

pub trait Backend: Send + Sync {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, LlmError>;
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatExchange {
    pub request: ChatRequest,
    pub response: String,
    pub latency_ms: u64,
}

/// Send a prompt and return the assistant's reply.
pub fn complete(bundle: &PromptBundle, params: &GenerationParams, backend: &dyn Backend) -> Result<ChatExchange, LlmError> {
    let request = ChatRequest::from_bundle(bundle, params);
    let reply = backend.send(&request)?;
    if reply.text.trim().is_empty() {
        return Err(LlmError::BackendUnavailable("empty response".into()));
    }
    Ok(ChatExchange {
        request,
        response: reply.text,
        latency_ms: reply.latency_ms,
    })
}

/// Counting semaphore bounding concurrent requests.
#[derive(Debug)]
pub struct InFlightLimit {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a InFlightLimit);

impl InFlightLimit {
    pub fn new(n: usize) -> Self {
        InFlightLimit {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}

/// Live client for `POST <base>/chat/completions`.
pub struct HttpBackend {
    agent: ureq::Agent,
    base: String,
    api_key: Option<String>,
    timeout: Duration,
    backoff_base: Duration,
    max_attempts: u32,
    limit: InFlightLimit,
}

impl HttpBackend {
    pub const API_KEY_ENV: &'static str = "LLM_API_KEY";
    pub const BASE_URL_ENV: &'static str = "LLM_BASE_URL";
    pub const DEFAULT_BASE: &'static str = "https://api.openai.com/v1";

    pub fn new(base: &str, api_key: Option<String>) -> Self {
        let timeout = Duration::from_secs(120);
        HttpBackend {
            agent: Self::agent(timeout),
            base: base.trim_end_matches('/').to_string(),
            api_key,
            timeout,
            backoff_base: Duration::from_secs(2),
            max_attempts: 3,
            limit: InFlightLimit::new(DEFAULT_MAX_IN_FLIGHT),
        }
    }

    /// Base URL from `LLM_BASE_URL`, bearer token from `LLM_API_KEY`.
    pub fn from_env() -> Self {
        let base = std::env::var(Self::BASE_URL_ENV).unwrap_or_else(|_| Self::DEFAULT_BASE.into());
        Self::new(&base, std::env::var(Self::API_KEY_ENV).ok())
    }

    fn agent(timeout: Duration) -> ureq::Agent {
        ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .into()
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self.agent = Self::agent(timeout);
        self
    }

    /// First retry delay after HTTP 429; doubles on each further attempt.
    pub fn with_backoff_base(mut self, base: Duration) -> Self {
        self.backoff_base = base;
        self
    }

    pub fn with_max_in_flight(mut self, n: usize) -> Self {
        self.limit = InFlightLimit::new(n);
        self
    }

    fn attempt(&self, body: &str) -> Result<Result<String, Option<Duration>>, LlmError> {
        let mut req = self
            .agent
            .post(format!("{}/chat/completions", self.base))
            .header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", format!("Bearer {key}"));
        }
        let mut resp = req.send(body).map_err(|e| match e {
            ureq::Error::Timeout(_) => LlmError::Timeout(self.timeout),
            other => LlmError::BackendUnavailable(other.to_string()),
        })?;
        let status = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.parse::<u64>().ok())
            .map(Duration::from_secs);
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
        match status {
            429 => Ok(Err(retry_after)),
            200..=299 => {
                let v: Value = serde_json::from_str(&text).map_err(|e| LlmError::BackendUnavailable(e.to_string()))?;
                v.pointer("/choices/0/message/content")
                    .and_then(Value::as_str)
                    .map(|s| Ok(s.to_string()))
                    .ok_or_else(|| LlmError::BackendUnavailable("response has no message content".into()))
            }
            _ => Err(LlmError::BackendUnavailable(format!("HTTP {status}: {text}"))),
        }
    }
}

impl Backend for HttpBackend {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let _permit = self.limit.acquire();
        let body = serde_json::to_string(request).expect("request serializes");
        let started = Instant::now();
        let mut delay = self.backoff_base;
        for attempt in 1..=self.max_attempts {
            match self.attempt(&body)? {
                Ok(text) => {
                    return Ok(BackendReply {
                        text,
                        latency_ms: started.elapsed().as_millis() as u64,
                    })
                }
                Err(retry_after) if attempt == self.max_attempts => {
                    return Err(LlmError::RateLimited { retry_after });
                }
                Err(_) => {
                    log::warn!("rate limited, retrying in {delay:?}");
                    std::thread::sleep(delay);
                    delay *= 2;
                }
            }
        }
        unreachable!("loop returns on the last attempt")
    }
}

/// One stored exchange, `<hash>.json` in a replay directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplayEntry {
    pub request: ChatRequest,
    pub response: String,
    pub latency_ms: u64,
}

/// Serves recorded responses by request hash.
pub struct ReplayBackend {
    dir: PathBuf,
}

impl ReplayBackend {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        ReplayBackend { dir: dir.into() }
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn entry_path(&self, hash: &str) -> PathBuf {
        self.dir.join(format!("{hash}.json"))
    }

    pub fn lookup(&self, request: &ChatRequest) -> Result<ReplayEntry, LlmError> {
        let hash = request.hash();
        let text = match std::fs::read_to_string(self.entry_path(&hash)) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Err(LlmError::ReplayMiss(hash)),
            Err(e) => return Err(LlmError::Store(e.to_string())),
        };
        serde_json::from_str(&text).map_err(|e| LlmError::Store(format!("{hash}: {e}")))
    }
}

impl Backend for ReplayBackend {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let entry = self.lookup(request)?;
        Ok(BackendReply {
            text: entry.response,
            latency_ms: entry.latency_ms,
        })
    }
}

/// Write one entry into a replay directory.
pub fn store_entry(dir: &Path, entry: &ReplayEntry) -> Result<PathBuf, LlmError> {
    std::fs::create_dir_all(dir).map_err(|e| LlmError::Store(e.to_string()))?;
    let path = dir.join(format!("{}.json", entry.request.hash()));
    let tmp = path.with_extension("json.tmp");
    let mut text = serde_json::to_string_pretty(entry).expect("entry serializes");
    text.push('\n');
    std::fs::write(&tmp, text).map_err(|e| LlmError::Store(e.to_string()))?;
    std::fs::rename(&tmp, &path).map_err(|e| LlmError::Store(e.to_string()))?;
    Ok(path)
}

/// Forwards to another backend and records every successful exchange.
pub struct RecordingBackend<B> {
    inner: B,
    dir: PathBuf,
    writer: Mutex<()>,
}

impl<B: Backend> RecordingBackend<B> {
    pub fn new(inner: B, dir: impl Into<PathBuf>) -> Self {
        RecordingBackend {
            inner,
            dir: dir.into(),
            writer: Mutex::new(()),
        }
    }
}

impl<B: Backend> Backend for RecordingBackend<B> {
    fn send(&self, request: &ChatRequest) -> Result<BackendReply, LlmError> {
        let reply = self.inner.send(request)?;
        let _guard = self.writer.lock().unwrap();
        store_entry(
            &self.dir,
            &ReplayEntry {
                request: request.clone(),
                response: reply.text.clone(),
                latency_ms: reply.latency_ms,
            },
        )?;
        Ok(reply)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::prompt::ChatMessage;

    fn bundle() -> PromptBundle {
        PromptBundle {
            system: "sys".into(),
            turns: vec![ChatMessage::user("hi")],
        }
    }

    #[test]
    fn canonical_json_is_sorted() {
        let req = ChatRequest::from_bundle(&bundle(), &GenerationParams::bot("m"));
        assert_eq!(
            req.canonical_json(),
            r#"{"messages":[{"content":"sys","role":"system"},{"content":"hi","role":"user"}],"model":"m","temperature":0.2}"#
        );
        let seeded = ChatRequest::from_bundle(&bundle(), &GenerationParams::experiment("m", 2));
        assert!(seeded.canonical_json().contains(r#""seed":2,"temperature":0.7"#));
        assert_ne!(req.hash(), seeded.hash());
    }

    #[test]
    fn replay_round_trip_and_miss() {
        let dir = tempfile::tempdir().unwrap();
        let backend = ReplayBackend::new(dir.path());
        let params = GenerationParams::bot("m");
        assert!(matches!(
            complete(&bundle(), &params, &backend),
            Err(LlmError::ReplayMiss(_))
        ));
        let request = ChatRequest::from_bundle(&bundle(), &params);
        store_entry(
            dir.path(),
            &ReplayEntry {
                request,
                response: "```yaml\non: push\n```".into(),
                latency_ms: 42,
            },
        )
        .unwrap();
        let ex = complete(&bundle(), &params, &backend).unwrap();
        assert_eq!(ex.response, "```yaml\non: push\n```");
        assert_eq!(ex.latency_ms, 42);
    }

    #[test]
    fn in_flight_limit_blocks() {
        let limit = std::sync::Arc::new(InFlightLimit::new(2));
        let peak = std::sync::Arc::new(Mutex::new((0usize, 0usize)));
        std::thread::scope(|s| {
            for _ in 0..8 {
                let limit = limit.clone();
                let peak = peak.clone();
                s.spawn(move || {
                    let _p = limit.acquire();
                    {
                        let mut g = peak.lock().unwrap();
                        g.0 += 1;
                        g.1 = g.1.max(g.0);
                    }
                    std::thread::sleep(Duration::from_millis(10));
                    peak.lock().unwrap().0 -= 1;
                });
            }
        });
        assert_eq!(peak.lock().unwrap().1, 2);
    }
}
