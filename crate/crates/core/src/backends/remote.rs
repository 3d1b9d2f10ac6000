//! HTTP clients for hosted models: chat completion (questioners), visual
//! question answering (answerer) and text embedding.
//!
//! All share [`JsonClient`]: blocking JSON POST with bearer auth read from an
//! environment variable, a per-endpoint in-flight bound, and exponential
//! backoff on transport errors, 429 and 5xx. Other 4xx fail immediately.
//!
//! The blocking client must not be created or used on an async runtime
//! thread; async callers go through `spawn_blocking`.

use std::collections::HashMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Duration;

use parking_lot::{Condvar, Mutex};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::prompt::{build_fewshot_prompt, build_unanswered_prompt, extract_question, parse_numbered_questions, PromptShot};
use super::{Answerer, BackendError, Embedder, Questioner};
use crate::dialog::{Dialog, SerializedQuery};

/// Default env var holding the chat-completion bearer token.
pub const LLM_TOKEN_ENV: &str = "CHATIR_LLM_TOKEN";
/// Default env var holding the VQA service URL.
pub const VQA_URL_ENV: &str = "CHATIR_VQA_URL";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_retries: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
    pub multiplier: f64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self { max_retries: 3, initial_backoff_ms: 250, max_backoff_ms: 8_000, multiplier: 2.0 }
    }
}

impl RetryPolicy {
    /// Delay before retry number `retry` (1-based).
    pub fn backoff(&self, retry: u32) -> Duration {
        let factor = self.multiplier.max(1.0).powi(retry.saturating_sub(1) as i32);
        let ms = (self.initial_backoff_ms as f64 * factor).min(self.max_backoff_ms as f64);
        Duration::from_millis(ms as u64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EndpointConfig {
    pub base_url: String,
    #[serde(default)]
    pub path: String,
    /// Env var with a bearer token; no auth header when `None`.
    #[serde(default)]
    pub token_env: Option<String>,
    #[serde(default = "default_timeout_ms")]
    pub timeout_ms: u64,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default = "default_in_flight")]
    pub max_in_flight: usize,
}

fn default_timeout_ms() -> u64 {
    30_000
}

fn default_in_flight() -> usize {
    4
}

impl EndpointConfig {
    pub fn new(base_url: impl Into<String>, path: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into(),
            path: path.into(),
            token_env: None,
            timeout_ms: default_timeout_ms(),
            retry: RetryPolicy::default(),
            max_in_flight: default_in_flight(),
        }
    }

    pub fn url(&self) -> String {
        let base = self.base_url.trim_end_matches('/');
        if self.path.is_empty() {
            base.to_owned()
        } else {
            format!("{base}/{}", self.path.trim_start_matches('/'))
        }
    }
}

/// Counting gate bounding concurrent requests.
struct InFlight {
    limit: usize,
    active: Mutex<usize>,
    freed: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(limit: usize) -> Self {
        Self { limit: limit.max(1), active: Mutex::new(0), freed: Condvar::new() }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut active = self.active.lock();
        while *active >= self.limit {
            self.freed.wait(&mut active);
        }
        *active += 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.active.lock() -= 1;
        self.0.freed.notify_one();
    }
}

enum Attempt {
    Retryable(String),
    Fatal(BackendError),
}

/// Blocking JSON POST client with retries.
pub struct JsonClient {
    config: EndpointConfig,
    url: String,
    http: reqwest::blocking::Client,
    gate: InFlight,
    retries: AtomicU64,
}

impl JsonClient {
    pub fn new(config: EndpointConfig) -> Result<Self, BackendError> {
        let http = reqwest::blocking::Client::builder()
            .timeout(Duration::from_millis(config.timeout_ms))
            .build()
            .map_err(|e| BackendError::Config(format!("http client: {e}")))?;
        Ok(Self { url: config.url(), gate: InFlight::new(config.max_in_flight), config, http, retries: AtomicU64::new(0) })
    }

    pub fn url(&self) -> &str {
        &self.url
    }

    /// Retries performed over the client's lifetime.
    pub fn retries(&self) -> u64 {
        self.retries.load(Ordering::Relaxed)
    }

    fn token(&self) -> Result<Option<String>, BackendError> {
        match &self.config.token_env {
            None => Ok(None),
            Some(var) => std::env::var(var).map(Some).map_err(|_| BackendError::MissingToken(var.clone())),
        }
    }

    pub fn post(&self, body: &Value) -> Result<Value, BackendError> {
        let token = self.token()?;
        let _permit = self.gate.acquire();
        let policy = &self.config.retry;
        let mut attempt = 0u32;
        loop {
            attempt += 1;
            match self.try_once(body, token.as_deref()) {
                Ok(v) => return Ok(v),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retryable(message)) => {
                    if attempt > policy.max_retries {
                        return Err(BackendError::Transport { endpoint: self.url.clone(), attempts: attempt, message });
                    }
                    tracing::debug!(url = %self.url, attempt, %message, "retrying request");
                    self.retries.fetch_add(1, Ordering::Relaxed);
                    std::thread::sleep(policy.backoff(attempt));
                }
            }
        }
    }

    fn try_once(&self, body: &Value, token: Option<&str>) -> Result<Value, Attempt> {
        let mut req = self.http.post(&self.url).json(body);
        if let Some(t) = token {
            req = req.bearer_auth(t);
        }
        let resp = req.send().map_err(|e| Attempt::Retryable(e.to_string()))?;
        let status = resp.status();
        if status.is_success() {
            return resp.json::<Value>().map_err(|e| {
                Attempt::Fatal(BackendError::Protocol { endpoint: self.url.clone(), message: format!("invalid JSON: {e}") })
            });
        }
        let text = resp.text().unwrap_or_default();
        if status.as_u16() == 429 || status.is_server_error() {
            Err(Attempt::Retryable(format!("HTTP {}: {}", status.as_u16(), text)))
        } else {
            Err(Attempt::Fatal(BackendError::Status { endpoint: self.url.clone(), status: status.as_u16(), body: text }))
        }
    }

    fn protocol(&self, message: impl Into<String>) -> BackendError {
        BackendError::Protocol { endpoint: self.url.clone(), message: message.into() }
    }
}

/// Maps a prompt onto a vendor request body and extracts the completion text.
pub trait ChatAdapter: Send + Sync {
    fn request(&self, prompt: &str) -> Value;
    fn completion(&self, response: &Value) -> Option<String>;
}

/// `{model, messages: [{role: user, content}], max_tokens}`; reads
/// `choices[0].message.content`, falling back to `choices[0].text`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatMessagesAdapter {
    pub model: String,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
}

fn default_max_tokens() -> u32 {
    64
}

impl ChatAdapter for ChatMessagesAdapter {
    fn request(&self, prompt: &str) -> Value {
        json!({
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "max_tokens": self.max_tokens,
        })
    }

    fn completion(&self, response: &Value) -> Option<String> {
        let choice = response.get("choices")?.get(0)?;
        choice
            .pointer("/message/content")
            .or_else(|| choice.get("text"))
            .and_then(Value::as_str)
            .map(str::to_owned)
    }
}

pub struct ChatClient {
    http: JsonClient,
    adapter: Box<dyn ChatAdapter>,
}

impl ChatClient {
    pub fn new(http: JsonClient, adapter: Box<dyn ChatAdapter>) -> Self {
        Self { http, adapter }
    }

    pub fn complete(&self, prompt: &str) -> Result<String, BackendError> {
        let resp = self.http.post(&self.adapter.request(prompt))?;
        self.adapter.completion(&resp).ok_or_else(|| self.http.protocol("no completion text in response"))
    }

    pub fn retries(&self) -> u64 {
        self.http.retries()
    }
}

/// Few-shot LLM questioner: sends the few-shot prompt and keeps the first line.
pub struct FewShotQuestioner {
    chat: ChatClient,
    shots: Vec<PromptShot>,
}

impl FewShotQuestioner {
    pub fn new(chat: ChatClient, shots: Vec<PromptShot>) -> Self {
        Self { chat, shots }
    }

    pub fn client(&self) -> &ChatClient {
        &self.chat
    }
}

impl Questioner for FewShotQuestioner {
    fn next_question(&self, dialog: &Dialog) -> Result<String, BackendError> {
        let completion = self.chat.complete(&build_fewshot_prompt(dialog, &self.shots))?;
        extract_question(&completion).ok_or_else(|| self.chat.http.protocol("completion contained no question"))
    }
}

/// Asks for all questions once from the caption and serves them by round.
/// Answers never influence later questions.
pub struct UnansweredQuestioner {
    chat: ChatClient,
    lists: Mutex<HashMap<String, Vec<String>>>,
}

impl UnansweredQuestioner {
    pub fn new(chat: ChatClient) -> Self {
        Self { chat, lists: Mutex::new(HashMap::new()) }
    }

    fn questions_for(&self, caption: &str) -> Result<Vec<String>, BackendError> {
        if let Some(list) = self.lists.lock().get(caption) {
            return Ok(list.clone());
        }
        let completion = self.chat.complete(&build_unanswered_prompt(caption)?)?;
        let list = parse_numbered_questions(&completion);
        if list.is_empty() {
            return Err(self.chat.http.protocol("completion contained no questions"));
        }
        self.lists.lock().insert(caption.to_owned(), list.clone());
        Ok(list)
    }
}

impl Questioner for UnansweredQuestioner {
    fn next_question(&self, dialog: &Dialog) -> Result<String, BackendError> {
        let list = self.questions_for(&dialog.caption)?;
        let i = dialog.rounds.len();
        list.get(i).cloned().ok_or(BackendError::Exhausted { round: i + 1, available: list.len() })
    }
}

/// VQA client: POST `{image, question}`, reads `{answer}`. `images` maps ids
/// to a URL or base64 payload; unmapped ids are sent as-is.
pub struct VqaAnswerer {
    http: JsonClient,
    images: HashMap<String, String>,
}

impl VqaAnswerer {
    pub fn new(http: JsonClient, images: HashMap<String, String>) -> Self {
        Self { http, images }
    }
}

impl Answerer for VqaAnswerer {
    fn answer(&self, question: &str, target: &str, _history: &Dialog) -> Result<String, BackendError> {
        let image = self.images.get(target).map(String::as_str).unwrap_or(target);
        let resp = self.http.post(&json!({"image": image, "question": question}))?;
        match resp.get("answer").and_then(Value::as_str).map(str::trim) {
            Some(a) if !a.is_empty() => Ok(a.to_owned()),
            _ => Err(self.http.protocol("missing or empty `answer`")),
        }
    }
}

/// Text embedding service: POST `{text}`, reads `{embedding: [f32]}`.
pub struct RemoteEmbedder {
    http: JsonClient,
    dim: usize,
}

impl RemoteEmbedder {
    pub fn new(http: JsonClient, dim: usize) -> Self {
        Self { http, dim }
    }
}

impl Embedder for RemoteEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, query: &SerializedQuery) -> Result<Vec<f32>, BackendError> {
        if query.text.trim().is_empty() {
            return Err(BackendError::InvalidArgument("cannot embed empty text".into()));
        }
        let resp = self.http.post(&json!({"text": query.text}))?;
        let v: Vec<f32> = resp
            .get("embedding")
            .and_then(|e| serde_json::from_value(e.clone()).ok())
            .ok_or_else(|| self.http.protocol("missing numeric `embedding` array"))?;
        if v.len() != self.dim {
            return Err(self.http.protocol(format!("embedding has {} dims, expected {}", v.len(), self.dim)));
        }
        Ok(v)
    }
}
