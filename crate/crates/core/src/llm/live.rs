use std::sync::Mutex;

use serde_json::{json, Value};

use super::{Backend, ChatRequest, ChatResponse, FinishReason, LlmError, TokenUsage};
use crate::http::{AttemptRecord, HttpClient, HttpFailure, HttpRequest};

pub const ENV_API_KEY: &str = "LLM_API_KEY";
pub const ENV_BASE_URL: &str = "LLM_BASE_URL";

/// Provider-specific request encoding and response decoding.
pub trait ChatProtocol: Send + Sync {
    fn encode(&self, base_url: &str, api_key: &str, req: &ChatRequest) -> HttpRequest;
    fn decode(&self, body: &str) -> Result<ChatResponse, LlmError>;
}

/// The `/chat/completions` shape with role/content message arrays.
pub struct OpenAiChat;

impl ChatProtocol for OpenAiChat {
    fn encode(&self, base_url: &str, api_key: &str, req: &ChatRequest) -> HttpRequest {
        let mut body = json!({
            "model": req.model_id,
            "messages": req.messages,
            "temperature": req.temperature,
        });
        if let Some(n) = req.max_tokens {
            body["max_tokens"] = json!(n);
        }
        if !req.stop_sequences.is_empty() {
            body["stop"] = json!(req.stop_sequences);
        }
        let url = format!("{}/chat/completions", base_url.trim_end_matches('/'));
        HttpRequest::post_json(url, &body).header("Authorization", format!("Bearer {api_key}"))
    }

    fn decode(&self, body: &str) -> Result<ChatResponse, LlmError> {
        let v: Value = serde_json::from_str(body).map_err(|e| LlmError::Protocol(e.to_string()))?;
        let choice = v
            .pointer("/choices/0")
            .ok_or_else(|| LlmError::Protocol("no choices".into()))?;
        let content = choice
            .pointer("/message/content")
            .and_then(Value::as_str)
            .unwrap_or_default()
            .to_string();
        let finish_reason = match choice.get("finish_reason").and_then(Value::as_str) {
            Some("stop") => FinishReason::Stop,
            Some("length") => FinishReason::Length,
            _ => FinishReason::Other,
        };
        let count = |k: &str| v.pointer(&format!("/usage/{k}")).and_then(Value::as_u64).unwrap_or(0);
        Ok(ChatResponse {
            content,
            token_usage: TokenUsage {
                prompt_tokens: count("prompt_tokens"),
                completion_tokens: count("completion_tokens"),
            },
            finish_reason,
        })
    }
}

/// Chat backend over HTTP with retries and optional rate limiting.
pub struct LiveBackend {
    http: HttpClient,
    protocol: Box<dyn ChatProtocol>,
    base_url: String,
    api_key: String,
    attempts: Mutex<Vec<AttemptRecord>>,
}

impl LiveBackend {
    pub fn new(http: HttpClient, base_url: impl Into<String>, api_key: impl Into<String>) -> Self {
        Self {
            http,
            protocol: Box::new(OpenAiChat),
            base_url: base_url.into(),
            api_key: api_key.into(),
            attempts: Mutex::new(Vec::new()),
        }
    }

    /// Reads the credential and endpoint from `LLM_API_KEY` / `LLM_BASE_URL`.
    pub fn from_env(http: HttpClient) -> Result<Self, LlmError> {
        let key = std::env::var(ENV_API_KEY).map_err(|_| LlmError::MissingEnv(ENV_API_KEY))?;
        let url = std::env::var(ENV_BASE_URL).map_err(|_| LlmError::MissingEnv(ENV_BASE_URL))?;
        Ok(Self::new(http, url, key))
    }

    pub fn with_protocol(mut self, protocol: Box<dyn ChatProtocol>) -> Self {
        self.protocol = protocol;
        self
    }

    /// Every HTTP attempt made so far, across calls.
    pub fn attempt_log(&self) -> Vec<AttemptRecord> {
        self.attempts.lock().unwrap().clone()
    }
}

impl Backend for LiveBackend {
    fn complete(&self, req: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let http_req = self.protocol.encode(&self.base_url, &self.api_key, req);
        let mut log = Vec::new();
        let result = self.http.send(&http_req, &mut log);
        self.attempts.lock().unwrap().extend(log);
        match result {
            Ok(resp) => self.protocol.decode(&resp.body),
            Err(HttpFailure::Auth { status, .. }) => Err(LlmError::Auth { status }),
            Err(HttpFailure::RateLimited { retry_after }) => Err(LlmError::RateLimited { retry_after }),
            Err(HttpFailure::Status { status, body }) => Err(LlmError::Status { status, body }),
            Err(HttpFailure::Transport(m)) => Err(LlmError::Transport(m)),
        }
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;
    use std::time::Duration;

    use super::*;
    use crate::http::{HttpResponse, HttpTransport, RecordingSleeper};
    use crate::llm::Message;

    struct Script {
        replies: Mutex<Vec<HttpResponse>>,
        seen: Mutex<Vec<HttpRequest>>,
    }

    impl HttpTransport for Script {
        fn send(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
            self.seen.lock().unwrap().push(req.clone());
            Ok(self.replies.lock().unwrap().remove(0))
        }
    }

    fn completion(text: &str) -> HttpResponse {
        HttpResponse::ok(
            json!({
                "choices": [{"message": {"role": "assistant", "content": text}, "finish_reason": "stop"}],
                "usage": {"prompt_tokens": 12, "completion_tokens": 3}
            })
            .to_string(),
        )
    }

    fn too_many() -> HttpResponse {
        HttpResponse { status: 429, headers: vec![], body: "slow down".into() }
    }

    fn backend(replies: Vec<HttpResponse>) -> (LiveBackend, Arc<Script>, Arc<RecordingSleeper>) {
        let script = Arc::new(Script { replies: Mutex::new(replies), seen: Mutex::new(vec![]) });
        let sleeper = Arc::new(RecordingSleeper::default());
        let mut http = HttpClient::new(script.clone());
        http.sleeper = sleeper.clone();
        (LiveBackend::new(http, "https://llm.test/v1/", "k-123"), script, sleeper)
    }

    fn req() -> ChatRequest {
        ChatRequest::new("gpt-test", vec![Message::system("s"), Message::user("u")])
            .unwrap()
            .stop(vec!["Observation:".into()])
    }

    #[test]
    fn two_rate_limits_then_success() {
        let (b, _, sleeper) = backend(vec![too_many(), too_many(), completion("0.35")]);
        let resp = b.complete(&req()).unwrap();
        assert_eq!(resp.content, "0.35");
        assert_eq!(resp.token_usage, TokenUsage { prompt_tokens: 12, completion_tokens: 3 });
        assert_eq!(b.attempt_log().len(), 3);
        assert_eq!(
            *sleeper.sleeps.lock().unwrap(),
            vec![Duration::from_secs(1), Duration::from_secs(2)]
        );
    }

    #[test]
    fn persistent_rate_limit_is_surfaced() {
        let (b, _, _) = backend((0..5).map(|_| too_many()).collect());
        assert_eq!(b.complete(&req()), Err(LlmError::RateLimited { retry_after: None }));
        assert_eq!(b.attempt_log().len(), 5);
    }

    #[test]
    fn bad_credential_is_auth_error() {
        let (b, _, _) = backend(vec![HttpResponse { status: 401, headers: vec![], body: String::new() }]);
        assert_eq!(b.complete(&req()), Err(LlmError::Auth { status: 401 }));
    }

    #[test]
    fn wire_shape() {
        let (b, script, _) = backend(vec![completion("ok")]);
        b.complete(&req().max_tokens(Some(64)).unwrap()).unwrap();
        let seen = script.seen.lock().unwrap();
        assert_eq!(seen[0].url, "https://llm.test/v1/chat/completions");
        assert!(seen[0].headers.contains(&("Authorization".into(), "Bearer k-123".into())));
        let body: Value = serde_json::from_str(seen[0].body.as_ref().unwrap()).unwrap();
        assert_eq!(body["messages"][0], json!({"role": "system", "content": "s"}));
        assert_eq!(body["temperature"], json!(0.5));
        assert_eq!(body["max_tokens"], json!(64));
        assert_eq!(body["stop"], json!(["Observation:"]));
    }
}
