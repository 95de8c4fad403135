//! Chat-completion backends: a live HTTP client, cassette record/replay,
//! and a scripted backend for tests.

mod cassette;
mod live;
mod probe;
mod scripted;

use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use cassette::{Cassette, CassetteEntry, RecordingBackend, ReplayBackend, RequestSummary};
pub use live::{ChatProtocol, LiveBackend, OpenAiChat, ENV_API_KEY, ENV_BASE_URL};
pub use probe::{leakage_probe, ProbeOutcome, ProbeResult, PROBE_PREFIX};
pub use scripted::ScriptedBackend;

pub const DEFAULT_TEMPERATURE: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Message {
    pub role: Role,
    pub content: String,
}

impl Message {
    pub fn system(content: impl Into<String>) -> Self {
        Self { role: Role::System, content: content.into() }
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self { role: Role::User, content: content.into() }
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self { role: Role::Assistant, content: content.into() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatRequest {
    pub model_id: String,
    pub messages: Vec<Message>,
    pub temperature: f64,
    pub max_tokens: Option<u32>,
    pub stop_sequences: Vec<String>,
}

impl ChatRequest {
    pub fn new(model_id: impl Into<String>, messages: Vec<Message>) -> Result<Self, LlmError> {
        match messages.first() {
            None => return Err(LlmError::InvalidRequest("no messages".into())),
            Some(m) if m.role == Role::Assistant => {
                return Err(LlmError::InvalidRequest(
                    "first message must be a system or user message".into(),
                ))
            }
            _ => {}
        }
        Ok(Self {
            model_id: model_id.into(),
            messages,
            temperature: DEFAULT_TEMPERATURE,
            max_tokens: None,
            stop_sequences: Vec::new(),
        })
    }

    pub fn temperature(mut self, t: f64) -> Result<Self, LlmError> {
        if !(t.is_finite() && t >= 0.0) {
            return Err(LlmError::InvalidRequest(format!("temperature {t} must be >= 0")));
        }
        self.temperature = t;
        Ok(self)
    }

    pub fn max_tokens(mut self, n: Option<u32>) -> Result<Self, LlmError> {
        if n == Some(0) {
            return Err(LlmError::InvalidRequest("max_tokens must be positive".into()));
        }
        self.max_tokens = n;
        Ok(self)
    }

    pub fn stop(mut self, stops: Vec<String>) -> Self {
        self.stop_sequences = stops;
        self
    }

    /// Stable hash over model id, messages, temperature and stop sequences.
    /// `max_tokens` is deliberately not part of it.
    pub fn fingerprint(&self) -> String {
        #[derive(Serialize)]
        struct Key<'a> {
            model_id: &'a str,
            messages: &'a [Message],
            temperature: f64,
            stop_sequences: &'a [String],
        }
        let key = Key {
            model_id: &self.model_id,
            messages: &self.messages,
            temperature: self.temperature,
            stop_sequences: &self.stop_sequences,
        };
        let bytes = serde_json::to_vec(&key).expect("request key serializes");
        hex::encode(&Sha256::digest(&bytes)[..16])
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FinishReason {
    Stop,
    Length,
    Other,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub token_usage: TokenUsage,
    pub finish_reason: FinishReason,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LlmError {
    #[error("authentication failed (HTTP {status})")]
    Auth { status: u16 },
    #[error("rate limited{}", retry_after.map(|d| format!(" (retry after {:.1}s)", d.as_secs_f64())).unwrap_or_default())]
    RateLimited { retry_after: Option<Duration> },
    #[error("cassette has no recorded response left for fingerprint {fingerprint}")]
    CassetteMiss { fingerprint: String },
    #[error("cassette {path}:{line}: {message}")]
    CassetteLoad { path: String, line: usize, message: String },
    #[error("cassette write failed: {0}")]
    CassettePersist(String),
    #[error("HTTP {status}: {body}")]
    Status { status: u16, body: String },
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed provider response: {0}")]
    Protocol(String),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("environment variable {0} is not set")]
    MissingEnv(&'static str),
}

impl LlmError {
    /// Errors that no retry or later question can recover from.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            LlmError::Auth { .. } | LlmError::MissingEnv(_) | LlmError::CassettePersist(_)
        )
    }
}

pub trait Backend: Send + Sync {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

impl<B: Backend + ?Sized> Backend for Arc<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        (**self).complete(req)
    }
}

/// Counts calls and token usage passing through an inner backend.
pub struct UsageMeter<B> {
    inner: B,
    calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
}

impl<B: Backend> UsageMeter<B> {
    pub fn new(inner: B) -> Self {
        Self {
            inner,
            calls: AtomicU64::new(0),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
        }
    }

    pub fn calls(&self) -> u64 {
        self.calls.load(Ordering::Relaxed)
    }

    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }
}

impl<B: Backend> Backend for UsageMeter<B> {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        self.calls.fetch_add(1, Ordering::Relaxed);
        let resp = self.inner.complete(req)?;
        self.prompt_tokens
            .fetch_add(resp.token_usage.prompt_tokens, Ordering::Relaxed);
        self.completion_tokens
            .fetch_add(resp.token_usage.completion_tokens, Ordering::Relaxed);
        Ok(resp)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn req() -> ChatRequest {
        ChatRequest::new("m", vec![Message::system("s"), Message::user("u")])
            .unwrap()
            .stop(vec!["Observation:".into()])
    }

    #[test]
    fn defaults_and_validation() {
        assert_eq!(req().temperature, 0.5);
        assert!(ChatRequest::new("m", vec![]).is_err());
        assert!(ChatRequest::new("m", vec![Message::assistant("a")]).is_err());
        assert!(req().temperature(-0.1).is_err());
        assert!(req().max_tokens(Some(0)).is_err());
    }

    #[test]
    fn fingerprint_is_stable_and_sensitive() {
        let base = req().fingerprint();
        assert_eq!(base, req().fingerprint());
        assert_eq!(base.len(), 32);
        assert_eq!(base, req().max_tokens(Some(99)).unwrap().fingerprint());
        assert_ne!(base, req().temperature(0.7).unwrap().fingerprint());
        assert_ne!(base, req().stop(vec![]).fingerprint());
        let mut r = req();
        r.model_id = "other".into();
        assert_ne!(base, r.fingerprint());
        let mut r = req();
        r.messages[1].content.push(' ');
        assert_ne!(base, r.fingerprint());
        let mut r = req();
        r.messages[0].role = Role::User;
        assert_ne!(base, r.fingerprint());
    }
}
