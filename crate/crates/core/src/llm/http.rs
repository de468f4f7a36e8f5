use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{approx_tokens, Backend, BackendKind, ChatRequest, ChatResponse, LlmError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HttpConfig {
    /// Base URL up to and including the version segment, e.g. `https://api.openai.com/v1`.
    pub base_url: String,
    /// Environment variable holding the bearer token.
    pub api_key_env: String,
    pub timeout_secs: u64,
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
}

impl Default for HttpConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            api_key_env: "OPENAI_API_KEY".into(),
            timeout_secs: 120,
            max_attempts: 5,
            initial_backoff_ms: 1_000,
        }
    }
}

/// OpenAI-compatible `/chat/completions` client.
pub struct HttpBackend {
    config: HttpConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

enum Attempt {
    Retry(String),
    Fatal(LlmError),
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok().filter(|k| !k.is_empty());
        Self::with_key(config, api_key)
    }

    pub fn with_key(config: HttpConfig, api_key: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .new_agent();
        Self { config, api_key, agent }
    }

    /// Posts arbitrary JSON to `{base_url}/{path}` with the retry policy.
    pub fn post_json(&self, path: &str, body: &Value) -> Result<Value, LlmError> {
        let url = format!("{}/{}", self.config.base_url.trim_end_matches('/'), path);
        let attempts = self.config.max_attempts.max(1);
        let mut backoff = Duration::from_millis(self.config.initial_backoff_ms);
        let mut last = String::new();
        for attempt in 1..=attempts {
            match self.attempt(&url, body) {
                Ok(value) => return Ok(value),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(message)) => {
                    log::warn!("{url}: attempt {attempt}/{attempts} failed: {message}");
                    last = message;
                    if attempt < attempts {
                        std::thread::sleep(backoff);
                        backoff *= 2;
                    }
                }
            }
        }
        Err(LlmError::Transport { attempts, message: last })
    }

    fn attempt(&self, url: &str, body: &Value) -> Result<Value, Attempt> {
        let mut builder = self.agent.post(url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            builder = builder.header("Authorization", format!("Bearer {key}"));
        }
        let mut response = builder.send_json(body).map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response.body_mut().read_to_string().map_err(|e| Attempt::Retry(e.to_string()))?;
        match status {
            200..=299 => serde_json::from_str(&text)
                .map_err(|e| Attempt::Fatal(LlmError::Transport { attempts: 1, message: format!("bad JSON body: {e}") })),
            401 | 403 => Err(Attempt::Fatal(LlmError::Auth(format!("HTTP {status}: {}", snippet(&text))))),
            408 | 409 | 429 | 500..=599 => Err(Attempt::Retry(format!("HTTP {status}: {}", snippet(&text)))),
            _ => Err(Attempt::Fatal(LlmError::Transport {
                attempts: 1,
                message: format!("HTTP {status}: {}", snippet(&text)),
            })),
        }
    }
}

fn snippet(text: &str) -> String {
    text.chars().take(300).collect()
}

impl Backend for HttpBackend {
    fn complete(&self, request: &ChatRequest) -> Result<ChatResponse, LlmError> {
        let body = json!({
            "model": request.model,
            "messages": request.messages,
            "temperature": request.temperature,
            "max_tokens": request.max_tokens,
        });
        let reply = self.post_json("chat/completions", &body)?;
        let content = reply
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| LlmError::Transport {
                attempts: 1,
                message: format!("response has no choices[0].message.content: {}", snippet(&reply.to_string())),
            })?
            .to_string();
        let count = |field: &str| reply.pointer(&format!("/usage/{field}")).and_then(Value::as_u64);
        Ok(ChatResponse {
            prompt_tokens: count("prompt_tokens")
                .unwrap_or_else(|| approx_tokens(request.messages.iter().map(|m| m.content.as_str()))),
            completion_tokens: count("completion_tokens").unwrap_or_else(|| approx_tokens([content.as_str()])),
            content,
            backend: BackendKind::Http,
        })
    }
}
