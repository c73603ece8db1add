//! Chat-completion client with retries, a client-side token bucket and a
//! cap on in-flight requests.

use std::sync::{Arc, Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{prompt_digest, Backend, BackendError, BackendErrorKind, PromptRequest, Transcript, TranscriptEntry};

fn default_temperature() -> f64 {
    0.0
}
fn default_max_tokens() -> u32 {
    512
}
fn default_timeout_secs() -> u64 {
    60
}
fn default_max_retries() -> u32 {
    3
}
fn default_concurrency() -> usize {
    4
}
fn default_api_key_env() -> String {
    "PERCEPTOM_API_KEY".to_string()
}
fn default_initial_backoff_ms() -> u64 {
    500
}
fn default_max_backoff_ms() -> u64 {
    30_000
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BackendConfig {
    #[serde(default)]
    pub id: Option<String>,
    pub endpoint: String,
    pub model: String,
    #[serde(default = "default_temperature")]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_timeout_secs")]
    pub timeout_secs: u64,
    #[serde(default = "default_max_retries")]
    pub max_retries: u32,
    #[serde(default = "default_concurrency")]
    pub max_concurrency: usize,
    #[serde(default)]
    pub requests_per_minute: Option<u32>,
    #[serde(default = "default_api_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_initial_backoff_ms")]
    pub initial_backoff_ms: u64,
    #[serde(default = "default_max_backoff_ms")]
    pub max_backoff_ms: u64,
}

impl BackendConfig {
    pub fn new(endpoint: &str, model: &str) -> Self {
        BackendConfig {
            id: None,
            endpoint: endpoint.to_string(),
            model: model.to_string(),
            temperature: default_temperature(),
            max_tokens: default_max_tokens(),
            timeout_secs: default_timeout_secs(),
            max_retries: default_max_retries(),
            max_concurrency: default_concurrency(),
            requests_per_minute: None,
            api_key_env: default_api_key_env(),
            initial_backoff_ms: default_initial_backoff_ms(),
            max_backoff_ms: default_max_backoff_ms(),
        }
    }

    pub fn validate(&self) -> Result<(), BackendError> {
        if self.max_concurrency == 0 {
            return Err(BackendError::new(
                BackendErrorKind::InvalidRequest,
                "max_concurrency must be at least 1",
            ));
        }
        if self.requests_per_minute == Some(0) {
            return Err(BackendError::new(
                BackendErrorKind::InvalidRequest,
                "requests_per_minute must be positive",
            ));
        }
        Ok(())
    }

    /// Delay before retry number `retry` (1-based). Doubles up to the cap.
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = 1u64.checked_shl(retry.saturating_sub(1)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }

    pub fn request_body(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.temperature,
            "max_tokens": self.max_tokens,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

pub trait Transport: Send + Sync {
    /// Sends one JSON POST. `Err` means no HTTP status was received.
    fn post(&self, url: &str, api_key: &str, body: &str, timeout: Duration) -> Result<HttpReply, String>;
}

pub struct UreqTransport {
    agent: ureq::Agent,
}

impl UreqTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .http_status_as_error(false)
            .timeout_global(Some(timeout))
            .build()
            .new_agent();
        UreqTransport { agent }
    }
}

impl Transport for UreqTransport {
    fn post(&self, url: &str, api_key: &str, body: &str, _timeout: Duration) -> Result<HttpReply, String> {
        let mut response = self
            .agent
            .post(url)
            .header("Authorization", &format!("Bearer {api_key}"))
            .header("Content-Type", "application/json")
            .send(body)
            .map_err(|e| e.to_string())?;
        let status = response.status().as_u16();
        let body = response.body_mut().read_to_string().map_err(|e| e.to_string())?;
        Ok(HttpReply { status, body })
    }
}

pub trait Sleeper: Send + Sync {
    fn sleep(&self, duration: Duration);
}

pub struct ThreadSleeper;

impl Sleeper for ThreadSleeper {
    fn sleep(&self, duration: Duration) {
        std::thread::sleep(duration);
    }
}

/// Token bucket refilled continuously at `per_minute / 60` tokens per second.
pub struct TokenBucket {
    capacity: f64,
    refill_per_sec: f64,
    state: Mutex<(f64, Instant)>,
}

impl TokenBucket {
    pub fn per_minute(per_minute: u32, now: Instant) -> Self {
        let capacity = f64::from(per_minute);
        TokenBucket {
            capacity,
            refill_per_sec: capacity / 60.0,
            state: Mutex::new((capacity, now)),
        }
    }

    /// Takes a token, or reports how long until one is available.
    pub fn try_take(&self, now: Instant) -> Result<(), Duration> {
        let mut state = self.state.lock().expect("bucket lock");
        let elapsed = now.saturating_duration_since(state.1).as_secs_f64();
        state.0 = (state.0 + elapsed * self.refill_per_sec).min(self.capacity);
        state.1 = now.max(state.1);
        if state.0 >= 1.0 {
            state.0 -= 1.0;
            Ok(())
        } else {
            Err(Duration::from_secs_f64((1.0 - state.0) / self.refill_per_sec))
        }
    }
}

/// Counting semaphore bounding in-flight requests.
pub struct ConcurrencyGate {
    max: usize,
    in_flight: Mutex<usize>,
    freed: Condvar,
}

pub struct GatePermit<'a> {
    gate: &'a ConcurrencyGate,
}

impl ConcurrencyGate {
    pub fn new(max: usize) -> Self {
        ConcurrencyGate {
            max: max.max(1),
            in_flight: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> GatePermit<'_> {
        let mut n = self.in_flight.lock().expect("gate lock");
        while *n >= self.max {
            n = self.freed.wait(n).expect("gate lock");
        }
        *n += 1;
        GatePermit { gate: self }
    }
}

impl Drop for GatePermit<'_> {
    fn drop(&mut self) {
        let mut n = self.gate.in_flight.lock().expect("gate lock");
        *n -= 1;
        self.gate.freed.notify_one();
    }
}

enum Attempt {
    Done(String),
    Retry(BackendErrorKind, String),
    Fail(BackendErrorKind, String),
}

fn classify(reply: Result<HttpReply, String>) -> Attempt {
    match reply {
        Err(e) => Attempt::Retry(BackendErrorKind::Transport, e),
        Ok(HttpReply { status: 429, body }) => Attempt::Retry(BackendErrorKind::RateLimitedExhausted, body),
        Ok(HttpReply { status: 401 | 403, body }) => Attempt::Fail(BackendErrorKind::Auth, body),
        Ok(HttpReply { status, body }) if status >= 500 => {
            Attempt::Retry(BackendErrorKind::Transport, format!("HTTP {status}: {body}"))
        }
        Ok(HttpReply { status, body }) if !(200..300).contains(&status) => {
            Attempt::Fail(BackendErrorKind::BadResponse, format!("HTTP {status}: {body}"))
        }
        Ok(HttpReply { body, .. }) => match message_text(&body) {
            Some(text) => Attempt::Done(text),
            None => Attempt::Fail(BackendErrorKind::BadResponse, format!("no message text in {body}")),
        },
    }
}

/// First choice's message content of a chat-completion response.
pub fn message_text(body: &str) -> Option<String> {
    let v: Value = serde_json::from_str(body).ok()?;
    v.get("choices")?
        .get(0)?
        .get("message")?
        .get("content")?
        .as_str()
        .map(str::to_string)
}

pub struct ChatClient {
    config: BackendConfig,
    api_key: Option<String>,
    transport: Arc<dyn Transport>,
    sleeper: Arc<dyn Sleeper>,
    gate: ConcurrencyGate,
    bucket: Option<TokenBucket>,
    transcript: Transcript,
}

impl ChatClient {
    /// Reads the API key from the environment variable named in the config.
    pub fn from_env(config: BackendConfig) -> Result<Self, BackendError> {
        let key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        let transport = Arc::new(UreqTransport::new(Duration::from_secs(config.timeout_secs)));
        Self::new(config, key, transport, Arc::new(ThreadSleeper))
    }

    pub fn new(
        config: BackendConfig,
        api_key: Option<String>,
        transport: Arc<dyn Transport>,
        sleeper: Arc<dyn Sleeper>,
    ) -> Result<Self, BackendError> {
        config.validate()?;
        let now = Instant::now();
        Ok(ChatClient {
            gate: ConcurrencyGate::new(config.max_concurrency),
            bucket: config.requests_per_minute.map(|rpm| TokenBucket::per_minute(rpm, now)),
            api_key,
            transport,
            sleeper,
            transcript: Transcript::new(),
            config,
        })
    }

    pub fn transcript(&self) -> &Transcript {
        &self.transcript
    }

    fn wait_for_token(&self) {
        if let Some(bucket) = &self.bucket {
            while let Err(wait) = bucket.try_take(Instant::now()) {
                self.sleeper.sleep(wait);
            }
        }
    }
}

impl Backend for ChatClient {
    fn id(&self) -> &str {
        self.config.id.as_deref().unwrap_or(&self.config.model)
    }

    fn complete(&self, request: &PromptRequest) -> Result<String, BackendError> {
        let api_key = self.api_key.as_deref().ok_or_else(|| {
            BackendError::new(
                BackendErrorKind::Auth,
                format!("environment variable {} is not set", self.config.api_key_env),
            )
        })?;
        if request.text.is_empty() {
            return Err(BackendError::new(BackendErrorKind::InvalidRequest, "empty prompt"));
        }
        let body = self.config.request_body(&request.text).to_string();
        let digest = prompt_digest(&request.text);
        let timeout = Duration::from_secs(self.config.timeout_secs);
        let _permit = self.gate.acquire();

        let max_attempts = self.config.max_retries + 1;
        let mut last = (BackendErrorKind::Transport, String::new());
        for attempt in 1..=max_attempts {
            self.wait_for_token();
            let started = Instant::now();
            let outcome = classify(self.transport.post(&self.config.endpoint, api_key, &body, timeout));
            let latency_ms = started.elapsed().as_millis() as u64;
            let (response, error) = match &outcome {
                Attempt::Done(text) => (Some(text.clone()), None),
                Attempt::Retry(_, e) | Attempt::Fail(_, e) => (None, Some(e.clone())),
            };
            self.transcript.append(TranscriptEntry {
                prompt_digest: digest.clone(),
                prompt: request.text.clone(),
                response,
                error,
                latency_ms,
                attempt,
            });
            match outcome {
                Attempt::Done(text) => return Ok(text),
                Attempt::Fail(kind, message) => {
                    return Err(BackendError {
                        kind,
                        message,
                        attempts: attempt,
                    })
                }
                Attempt::Retry(kind, message) => {
                    last = (kind, message);
                    if attempt < max_attempts {
                        self.sleeper.sleep(self.config.backoff(attempt));
                    }
                }
            }
        }
        Err(BackendError {
            kind: last.0,
            message: last.1,
            attempts: max_attempts,
        })
    }
}
