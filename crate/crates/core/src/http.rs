//! Minimal blocking HTTP seam shared by the model, search and market
//! clients, with retry/backoff and a shared request-rate limiter.

use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::Serialize;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Method {
    Get,
    Post,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HttpRequest {
    pub method: Method,
    pub url: String,
    pub headers: Vec<(String, String)>,
    pub body: Option<String>,
}

impl HttpRequest {
    pub fn get(url: impl Into<String>) -> Self {
        Self {
            method: Method::Get,
            url: url.into(),
            headers: Vec::new(),
            body: None,
        }
    }

    pub fn post_json(url: impl Into<String>, body: &serde_json::Value) -> Self {
        Self {
            method: Method::Post,
            url: url.into(),
            headers: vec![("Content-Type".into(), "application/json".into())],
            body: Some(body.to_string()),
        }
    }

    pub fn header(mut self, name: &str, value: impl Into<String>) -> Self {
        self.headers.push((name.to_string(), value.into()));
        self
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HttpResponse {
    pub status: u16,
    pub headers: Vec<(String, String)>,
    pub body: String,
}

impl HttpResponse {
    pub fn ok(body: impl Into<String>) -> Self {
        Self {
            status: 200,
            headers: Vec::new(),
            body: body.into(),
        }
    }

    pub fn header(&self, name: &str) -> Option<&str> {
        self.headers
            .iter()
            .find(|(k, _)| k.eq_ignore_ascii_case(name))
            .map(|(_, v)| v.as_str())
    }

    /// `Retry-After` in delta-seconds form.
    pub fn retry_after(&self) -> Option<Duration> {
        let v = self.header("retry-after")?.trim();
        v.parse::<f64>()
            .ok()
            .filter(|s| s.is_finite() && *s >= 0.0)
            .map(Duration::from_secs_f64)
    }
}

pub trait HttpTransport: Send + Sync {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, String>;
}

pub struct ReqwestTransport {
    client: reqwest::blocking::Client,
}

impl ReqwestTransport {
    pub fn new(timeout: Duration) -> Result<Self, String> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| e.to_string())?;
        Ok(Self { client })
    }
}

impl HttpTransport for ReqwestTransport {
    fn send(&self, req: &HttpRequest) -> Result<HttpResponse, String> {
        let mut builder = match req.method {
            Method::Get => self.client.get(&req.url),
            Method::Post => self.client.post(&req.url),
        };
        for (k, v) in &req.headers {
            builder = builder.header(k, v);
        }
        if let Some(body) = &req.body {
            builder = builder.body(body.clone());
        }
        let resp = builder.send().map_err(|e| e.to_string())?;
        let status = resp.status().as_u16();
        let headers = resp
            .headers()
            .iter()
            .filter_map(|(k, v)| Some((k.to_string(), v.to_str().ok()?.to_string())))
            .collect();
        let body = resp.text().map_err(|e| e.to_string())?;
        Ok(HttpResponse {
            status,
            headers,
            body,
        })
    }
}

/// Appends `params` as a percent-encoded query string.
pub fn with_query(base: &str, params: &[(&str, &str)]) -> String {
    if params.is_empty() {
        return base.to_string();
    }
    let mut ser = String::new();
    for (i, (k, v)) in params.iter().enumerate() {
        if i > 0 {
            ser.push('&');
        }
        ser.push_str(&encode(k));
        ser.push('=');
        ser.push_str(&encode(v));
    }
    let sep = if base.contains('?') { '&' } else { '?' };
    format!("{base}{sep}{ser}")
}

fn encode(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for b in s.bytes() {
        match b {
            b'A'..=b'Z' | b'a'..=b'z' | b'0'..=b'9' | b'-' | b'_' | b'.' | b'~' => out.push(b as char),
            _ => out.push_str(&format!("%{b:02X}")),
        }
    }
    out
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, d: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, d: Duration) {
        std::thread::sleep(d);
    }
}

/// Records requested sleeps without sleeping.
#[derive(Default)]
pub struct RecordingSleeper {
    pub sleeps: Mutex<Vec<Duration>>,
}

impl Sleeper for RecordingSleeper {
    fn sleep(&self, d: Duration) {
        self.sleeps.lock().unwrap().push(d);
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff: Duration,
    /// Ceiling on the sum of all backoff sleeps for one call.
    pub max_total_backoff: Duration,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 5,
            initial_backoff: Duration::from_secs(1),
            max_total_backoff: Duration::from_secs(60),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttemptRecord {
    pub attempt: u32,
    pub outcome: String,
    /// Sleep taken before the next attempt, if any.
    pub backoff: Option<Duration>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum HttpFailure {
    Auth { status: u16, body: String },
    RateLimited { retry_after: Option<Duration> },
    Status { status: u16, body: String },
    Transport(String),
}

impl std::fmt::Display for HttpFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            HttpFailure::Auth { status, .. } => write!(f, "authentication failed (HTTP {status})"),
            HttpFailure::RateLimited { retry_after } => match retry_after {
                Some(d) => write!(f, "rate limited (retry after {:.1}s)", d.as_secs_f64()),
                None => f.write_str("rate limited"),
            },
            HttpFailure::Status { status, body } => {
                write!(f, "HTTP {status}: {}", body.chars().take(200).collect::<String>())
            }
            HttpFailure::Transport(m) => write!(f, "transport error: {m}"),
        }
    }
}

/// Token bucket gating outbound calls, refilled continuously.
pub struct RateLimiter {
    capacity: f64,
    per_second: f64,
    state: Mutex<(f64, Instant)>,
}

impl RateLimiter {
    pub fn per_minute(requests: u32) -> Self {
        let capacity = f64::from(requests.max(1));
        Self {
            capacity,
            per_second: capacity / 60.0,
            state: Mutex::new((capacity, Instant::now())),
        }
    }

    pub fn acquire(&self) {
        loop {
            let wait = {
                let mut st = self.state.lock().unwrap();
                let now = Instant::now();
                let refill = now.duration_since(st.1).as_secs_f64() * self.per_second;
                st.0 = (st.0 + refill).min(self.capacity);
                st.1 = now;
                if st.0 >= 1.0 {
                    st.0 -= 1.0;
                    return;
                }
                (1.0 - st.0) / self.per_second
            };
            std::thread::sleep(Duration::from_secs_f64(wait));
        }
    }
}

/// Shared retry/limit plumbing for one remote service.
#[derive(Clone)]
pub struct HttpClient {
    pub transport: Arc<dyn HttpTransport>,
    pub retry: RetryPolicy,
    pub sleeper: Arc<dyn Sleeper>,
    pub limiter: Option<Arc<RateLimiter>>,
}

impl HttpClient {
    pub fn new(transport: Arc<dyn HttpTransport>) -> Self {
        Self {
            transport,
            retry: RetryPolicy::default(),
            sleeper: Arc::new(ThreadSleeper),
            limiter: None,
        }
    }

    /// Sends `req`, retrying 429, 408, 5xx and transport failures with
    /// exponential backoff. A server `Retry-After` replaces the computed
    /// delay. Attempts are appended to `log`.
    pub fn send(&self, req: &HttpRequest, log: &mut Vec<AttemptRecord>) -> Result<HttpResponse, HttpFailure> {
        let mut slept = Duration::ZERO;
        let mut attempt = 0;
        loop {
            attempt += 1;
            if let Some(l) = &self.limiter {
                l.acquire();
            }
            let (failure, hint) = match self.transport.send(req) {
                Ok(resp) if (200..300).contains(&resp.status) => {
                    log.push(AttemptRecord {
                        attempt,
                        outcome: format!("HTTP {}", resp.status),
                        backoff: None,
                    });
                    return Ok(resp);
                }
                Ok(resp) => match resp.status {
                    401 | 403 => {
                        log.push(AttemptRecord {
                            attempt,
                            outcome: format!("HTTP {}", resp.status),
                            backoff: None,
                        });
                        return Err(HttpFailure::Auth {
                            status: resp.status,
                            body: resp.body,
                        });
                    }
                    429 => {
                        let hint = resp.retry_after();
                        (HttpFailure::RateLimited { retry_after: hint }, hint)
                    }
                    408 | 500..=599 => {
                        let hint = resp.retry_after();
                        (
                            HttpFailure::Status {
                                status: resp.status,
                                body: resp.body,
                            },
                            hint,
                        )
                    }
                    status => {
                        log.push(AttemptRecord {
                            attempt,
                            outcome: format!("HTTP {status}"),
                            backoff: None,
                        });
                        return Err(HttpFailure::Status {
                            status,
                            body: resp.body,
                        });
                    }
                },
                Err(e) => (HttpFailure::Transport(e), None),
            };
            let exp = self.retry.initial_backoff * 2u32.saturating_pow(attempt - 1);
            let delay = hint.unwrap_or(exp);
            let can_retry =
                attempt < self.retry.max_attempts && slept + delay <= self.retry.max_total_backoff;
            log.push(AttemptRecord {
                attempt,
                outcome: failure.to_string(),
                backoff: can_retry.then_some(delay),
            });
            if !can_retry {
                return Err(failure);
            }
            self.sleeper.sleep(delay);
            slept += delay;
        }
    }
}
