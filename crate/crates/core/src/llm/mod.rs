//! Chat-completion gateway: request types, backends, replay cache and reply parsing.

mod cache;
mod extract;
mod http;

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

pub use cache::{fingerprint, CacheRecord, ReplayCache};
pub use extract::{extract_sql, extract_structured, StructuredReply};
pub use http::{HttpBackend, HttpConfig};

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("transport failure after {attempts} attempt(s): {message}")]
    Transport { attempts: u32, message: String },
    #[error("authentication rejected: {0}")]
    Auth(String),
    #[error("no recorded response for request {fingerprint} (step {tag})")]
    ReplayMiss { fingerprint: String, tag: String },
    #[error("reply contains no SQL statement")]
    NoSqlFound,
    #[error("reply contains no JSON object or array")]
    NoStructureFound,
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("replay cache {path}: {message}")]
    Cache { path: String, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
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
    pub messages: Vec<ChatMessage>,
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    /// Pipeline step that issued the request.
    pub request_tag: String,
}

impl ChatRequest {
    pub fn validate(&self) -> Result<(), LlmError> {
        if self.messages.is_empty() {
            return Err(LlmError::InvalidRequest("no messages".into()));
        }
        if self.messages.last().map(|m| m.role) != Some(Role::User) {
            return Err(LlmError::InvalidRequest("last message must come from the user".into()));
        }
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(LlmError::InvalidRequest(format!("temperature {} is not >= 0", self.temperature)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Replay,
    Scripted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub backend: BackendKind,
}

/// Anything that can answer a chat request.
pub trait Backend: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError>;
}

/// Backend driven by a closure; used for fixtures and offline experiments.
pub struct ScriptedBackend<F> {
    respond: F,
}

impl<F> ScriptedBackend<F>
where
    F: Fn(&ChatRequest) -> Option<String> + Send + Sync,
{
    pub fn new(respond: F) -> Self {
        Self { respond }
    }
}

impl<F> Backend for ScriptedBackend<F>
where
    F: Fn(&ChatRequest) -> Option<String> + Send + Sync,
{
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let content = (self.respond)(request).ok_or_else(|| LlmError::Transport {
            attempts: 1,
            message: format!("script has no reply for step {}", request.request_tag),
        })?;
        Ok(ChatResponse {
            prompt_tokens: approx_tokens(request.messages.iter().map(|m| m.content.as_str())),
            completion_tokens: approx_tokens([content.as_str()]),
            content,
            backend: BackendKind::Scripted,
        })
    }
}

/// Rough token estimate (four characters per token) for offline backends.
pub fn approx_tokens<'a>(texts: impl IntoIterator<Item = &'a str>) -> u64 {
    let chars: usize = texts.into_iter().map(|t| t.chars().count()).sum();
    chars.div_ceil(4) as u64
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub calls: u64,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

impl TokenUsage {
    pub fn total(&self) -> u64 {
        self.prompt_tokens + self.completion_tokens
    }

    pub fn add(&mut self, other: &TokenUsage) {
        self.calls += other.calls;
        self.prompt_tokens += other.prompt_tokens;
        self.completion_tokens += other.completion_tokens;
    }

    pub fn of(response: &ChatResponse) -> Self {
        Self { calls: 1, prompt_tokens: response.prompt_tokens, completion_tokens: response.completion_tokens }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum GatewayMode {
    /// Call the backend only.
    #[default]
    Live,
    /// Call the backend and append every exchange to the cache.
    Record,
    /// Answer from the cache only.
    Replay,
}

/// Entry point for all model calls: routes by mode and counts tokens.
pub struct LlmGateway {
    backend: Option<Box<dyn Backend>>,
    cache: Option<Arc<ReplayCache>>,
    mode: GatewayMode,
    calls: AtomicU64,
    prompt_tokens: AtomicU64,
    completion_tokens: AtomicU64,
    by_tag: Mutex<BTreeMap<String, TokenUsage>>,
}

impl LlmGateway {
    pub fn live(backend: Box<dyn Backend>) -> Self {
        Self::build(Some(backend), None, GatewayMode::Live)
    }

    pub fn record(backend: Box<dyn Backend>, cache: Arc<ReplayCache>) -> Self {
        Self::build(Some(backend), Some(cache), GatewayMode::Record)
    }

    pub fn replay(cache: Arc<ReplayCache>) -> Self {
        Self::build(None, Some(cache), GatewayMode::Replay)
    }

    fn build(backend: Option<Box<dyn Backend>>, cache: Option<Arc<ReplayCache>>, mode: GatewayMode) -> Self {
        Self {
            backend,
            cache,
            mode,
            calls: AtomicU64::new(0),
            prompt_tokens: AtomicU64::new(0),
            completion_tokens: AtomicU64::new(0),
            by_tag: Mutex::new(BTreeMap::new()),
        }
    }

    pub fn mode(&self) -> GatewayMode {
        self.mode
    }

    pub fn chat(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        request.validate()?;
        let response = match self.mode {
            GatewayMode::Replay => {
                let cache = self.cache.as_ref().expect("replay gateway always has a cache");
                let mut hit = cache.lookup(request).ok_or_else(|| LlmError::ReplayMiss {
                    fingerprint: fingerprint(request),
                    tag: request.request_tag.clone(),
                })?;
                hit.backend = BackendKind::Replay;
                hit
            }
            GatewayMode::Live | GatewayMode::Record => {
                let backend = self.backend.as_ref().expect("live gateway always has a backend");
                let response = backend.complete(request)?;
                if let (GatewayMode::Record, Some(cache)) = (self.mode, &self.cache) {
                    cache.append(request, &response)?;
                }
                response
            }
        };
        let usage = TokenUsage::of(&response);
        self.calls.fetch_add(1, Ordering::Relaxed);
        self.prompt_tokens.fetch_add(usage.prompt_tokens, Ordering::Relaxed);
        self.completion_tokens.fetch_add(usage.completion_tokens, Ordering::Relaxed);
        self.by_tag
            .lock()
            .unwrap_or_else(|e| e.into_inner())
            .entry(request.request_tag.clone())
            .or_default()
            .add(&usage);
        Ok(response)
    }

    /// Totals over every successful call so far.
    pub fn usage(&self) -> TokenUsage {
        TokenUsage {
            calls: self.calls.load(Ordering::Relaxed),
            prompt_tokens: self.prompt_tokens.load(Ordering::Relaxed),
            completion_tokens: self.completion_tokens.load(Ordering::Relaxed),
        }
    }

    pub fn usage_by_tag(&self) -> BTreeMap<String, TokenUsage> {
        self.by_tag.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }
}
