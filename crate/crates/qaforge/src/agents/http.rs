//! Blocking HTTP backend speaking the common chat-completions wire format.
//!
//! Request body: `{model, messages: [{role, content}], temperature,
//! max_tokens}` posted to `{base_url}/chat/completions`; the reply text is
//! `choices[0].message.content`. A bearer token is read once, at
//! construction, from the environment variable the config names.
//!
//! Throughput control is local to the process: a token bucket paces request
//! starts to `requests_per_minute`, and a counting gate caps concurrent
//! requests at `max_in_flight`. Transport errors, 429s, and 5xx responses
//! are retried up to three attempts with doubling backoff; other failures
//! are returned as-is.

use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::{AgentBackend, AgentError, ChatRequest, ChatRole};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct HttpBackendConfig {
    /// Root of the API, e.g. `https://host/v1`.
    pub base_url: String,
    /// Environment variable holding the bearer token; `None` sends no
    /// Authorization header.
    pub auth_env: Option<String>,
    /// Pacing cap; `None` disables pacing.
    pub requests_per_minute: Option<u32>,
    pub max_in_flight: usize,
    pub timeout_secs: u64,
    /// First retry delay; doubles per attempt.
    pub retry_backoff_ms: u64,
}

impl Default for HttpBackendConfig {
    fn default() -> Self {
        HttpBackendConfig {
            base_url: String::new(),
            auth_env: None,
            requests_per_minute: None,
            max_in_flight: 4,
            timeout_secs: 120,
            retry_backoff_ms: 200,
        }
    }
}

impl HttpBackendConfig {
    pub fn new(base_url: impl Into<String>) -> Self {
        HttpBackendConfig {
            base_url: base_url.into(),
            ..HttpBackendConfig::default()
        }
    }

    fn validate(&self) -> Vec<String> {
        let mut problems = Vec::new();
        if self.base_url.trim().is_empty() {
            problems.push("http backend: base_url must not be empty".into());
        }
        if self.max_in_flight == 0 {
            problems.push("http backend: max_in_flight must be at least 1".into());
        }
        if self.requests_per_minute == Some(0) {
            problems.push("http backend: requests_per_minute must be at least 1".into());
        }
        problems
    }
}

pub struct HttpBackend {
    config: HttpBackendConfig,
    client: reqwest::blocking::Client,
    endpoint: String,
    auth: Option<String>,
    limiter: Option<Mutex<TokenBucket>>,
    gate: Gate,
}

impl std::fmt::Debug for HttpBackend {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("HttpBackend")
            .field("endpoint", &self.endpoint)
            .field("config", &self.config)
            .finish_non_exhaustive()
    }
}

const ATTEMPTS: u32 = 3;

impl HttpBackend {
    pub fn new(config: HttpBackendConfig) -> Result<HttpBackend> {
        let problems = config.validate();
        if !problems.is_empty() {
            return Err(Error::Config(problems));
        }
        let auth = match &config.auth_env {
            Some(var) => match std::env::var(var) {
                Ok(token) if !token.trim().is_empty() => Some(token),
                _ => return Err(AgentError::MissingAuth(var.clone()).into()),
            },
            None => None,
        };
        let client = reqwest::blocking::Client::builder()
            .timeout(Duration::from_secs(config.timeout_secs))
            .build()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let endpoint = format!("{}/chat/completions", config.base_url.trim_end_matches('/'));
        let limiter = config
            .requests_per_minute
            .map(|rpm| Mutex::new(TokenBucket::new(rpm, Instant::now())));
        let gate = Gate::new(config.max_in_flight);
        Ok(HttpBackend {
            config,
            client,
            endpoint,
            auth,
            limiter,
            gate,
        })
    }

    pub fn config(&self) -> &HttpBackendConfig {
        &self.config
    }

    fn pace(&self) {
        let Some(limiter) = &self.limiter else { return };
        loop {
            let wait = limiter.lock().unwrap().poll(Instant::now());
            match wait {
                None => return,
                Some(delay) => std::thread::sleep(delay.min(Duration::from_millis(250))),
            }
        }
    }

    fn try_once(&self, request: &ChatRequest) -> std::result::Result<String, AgentError> {
        let body = WireRequest {
            model: &request.model,
            messages: request
                .messages
                .iter()
                .map(|m| WireMessage {
                    role: match m.role {
                        ChatRole::System => "system",
                        ChatRole::User => "user",
                    },
                    content: &m.content,
                })
                .collect(),
            temperature: request.temperature,
            max_tokens: request.max_output_tokens,
        };
        let mut builder = self.client.post(&self.endpoint).json(&body);
        if let Some(token) = &self.auth {
            builder = builder.bearer_auth(token);
        }
        let response = builder
            .send()
            .map_err(|e| AgentError::Transport(e.to_string()))?;
        let status = response.status();
        if !status.is_success() {
            let detail = match response.text() {
                Ok(text) => {
                    let trimmed = text.trim();
                    let mut end = trimmed.len().min(200);
                    while !trimmed.is_char_boundary(end) {
                        end -= 1;
                    }
                    trimmed[..end].to_string()
                }
                Err(_) => String::new(),
            };
            return Err(AgentError::Status {
                status: status.as_u16(),
                detail,
            });
        }
        let parsed: WireResponse = response
            .json()
            .map_err(|e| AgentError::MalformedResponse(e.to_string()))?;
        match parsed.choices.into_iter().next() {
            Some(choice) => Ok(choice.message.content),
            None => Err(AgentError::MalformedResponse("empty choices array".into())),
        }
    }
}

fn retryable(error: &AgentError) -> bool {
    match error {
        AgentError::Transport(_) => true,
        AgentError::Status { status, .. } => *status == 429 || *status >= 500,
        _ => false,
    }
}

impl AgentBackend for HttpBackend {
    fn name(&self) -> &str {
        "http"
    }

    fn complete(&self, request: &ChatRequest) -> std::result::Result<String, AgentError> {
        let _slot = self.gate.acquire();
        let mut last = None;
        for attempt in 0..ATTEMPTS {
            if attempt > 0 {
                let backoff = self.config.retry_backoff_ms << (attempt - 1);
                std::thread::sleep(Duration::from_millis(backoff));
            }
            self.pace();
            match self.try_once(request) {
                Ok(text) => return Ok(text),
                Err(err) if retryable(&err) => {
                    log::warn!(
                        "{} attempt {}/{ATTEMPTS} failed: {err}",
                        request.agent_role,
                        attempt + 1
                    );
                    last = Some(err);
                }
                Err(err) => return Err(err),
            }
        }
        Err(last.expect("at least one attempt ran"))
    }
}

#[derive(Serialize)]
struct WireRequest<'a> {
    model: &'a str,
    messages: Vec<WireMessage<'a>>,
    temperature: f64,
    max_tokens: u32,
}

#[derive(Serialize)]
struct WireMessage<'a> {
    role: &'a str,
    content: &'a str,
}

#[derive(Deserialize)]
struct WireResponse {
    choices: Vec<WireChoice>,
}

#[derive(Deserialize)]
struct WireChoice {
    message: WireReplyMessage,
}

#[derive(Deserialize)]
struct WireReplyMessage {
    content: String,
}

/// Pacing state: starts full so short runs are unthrottled, refills at
/// `rpm/60` tokens per second up to a burst of `rpm`.
struct TokenBucket {
    capacity: f64,
    tokens: f64,
    per_second: f64,
    last: Instant,
}

impl TokenBucket {
    fn new(rpm: u32, now: Instant) -> TokenBucket {
        TokenBucket {
            capacity: f64::from(rpm),
            tokens: f64::from(rpm),
            per_second: f64::from(rpm) / 60.0,
            last: now,
        }
    }

    /// Take a token if available, else report how long until one is.
    fn poll(&mut self, now: Instant) -> Option<Duration> {
        let elapsed = now.saturating_duration_since(self.last).as_secs_f64();
        self.last = now;
        self.tokens = (self.tokens + elapsed * self.per_second).min(self.capacity);
        if self.tokens >= 1.0 {
            self.tokens -= 1.0;
            None
        } else {
            Some(Duration::from_secs_f64(
                (1.0 - self.tokens) / self.per_second,
            ))
        }
    }
}

struct Gate {
    cap: usize,
    count: Mutex<usize>,
    freed: Condvar,
}

struct GateGuard<'a>(&'a Gate);

impl Gate {
    fn new(cap: usize) -> Gate {
        Gate {
            cap,
            count: Mutex::new(0),
            freed: Condvar::new(),
        }
    }

    fn acquire(&self) -> GateGuard<'_> {
        let mut count = self.count.lock().unwrap();
        while *count >= self.cap {
            count = self.freed.wait(count).unwrap();
        }
        *count += 1;
        GateGuard(self)
    }
}

impl Drop for GateGuard<'_> {
    fn drop(&mut self) {
        *self.0.count.lock().unwrap() -= 1;
        self.0.freed.notify_one();
    }
}
