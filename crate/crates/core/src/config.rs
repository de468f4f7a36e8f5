//! Run configuration, loadable from TOML.

use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::linking::BackwardStrategy;
use crate::llm::{GatewayMode, HttpBackend, HttpConfig, LlmError, LlmGateway, ReplayCache};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("invalid config {path}: {source}")]
    Parse { path: PathBuf, source: toml::de::Error },
    #[error("invalid setting: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub model: String,
    pub temperature: f64,
    pub max_tokens: u32,
    pub http: HttpConfig,
    pub mode: GatewayMode,
    /// Record/replay cache file.
    pub replay_path: Option<PathBuf>,
    /// Directory whose `*.txt` files override the built-in prompt templates.
    pub templates_dir: Option<PathBuf>,
    pub few_shot_k: usize,
    /// Maximum self-correction rounds.
    pub correction_rounds: usize,
    pub rows_per_table: usize,
    pub max_cell_len: usize,
    pub preview_rows: usize,
    pub preview_cell_chars: usize,
    pub timeout_secs: f64,
    pub workers: usize,
    pub seed: u64,
    pub retain_keys: bool,
    pub backward_strategy: BackwardStrategy,
    pub timing_runs: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            model: "gpt-4o".into(),
            temperature: 0.0,
            max_tokens: 1024,
            http: HttpConfig::default(),
            mode: GatewayMode::Live,
            replay_path: None,
            templates_dir: None,
            few_shot_k: crate::fewshot::DEFAULT_K,
            correction_rounds: 5,
            rows_per_table: 3,
            max_cell_len: 64,
            preview_rows: 5,
            preview_cell_chars: 200,
            timeout_secs: 30.0,
            workers: 4,
            seed: 42,
            retain_keys: false,
            backward_strategy: BackwardStrategy::NameMatch,
            timing_runs: 5,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str, origin: &Path) -> Result<Self, ConfigError> {
        let config: Self =
            toml::from_str(text).map_err(|source| ConfigError::Parse { path: origin.to_path_buf(), source })?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io { path: path.to_path_buf(), source })?;
        Self::from_toml_str(&text, path)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fail = |m: &str| Err(ConfigError::Invalid(m.to_string()));
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return fail("temperature must be >= 0");
        }
        if self.few_shot_k == 0 {
            return fail("few_shot_k must be >= 1");
        }
        if self.rows_per_table == 0 {
            return fail("rows_per_table must be >= 1");
        }
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return fail("timeout_secs must be positive");
        }
        if self.workers == 0 {
            return fail("workers must be >= 1");
        }
        if self.timing_runs == 0 || self.timing_runs.is_multiple_of(2) {
            return fail("timing_runs must be odd");
        }
        if self.mode != GatewayMode::Live && self.replay_path.is_none() {
            return fail("record and replay modes need replay_path");
        }
        Ok(())
    }

    pub fn timeout(&self) -> Duration {
        Duration::from_secs_f64(self.timeout_secs)
    }

    /// Gateway for the configured mode. Replay opens the cache read-only and
    /// never touches the network.
    pub fn gateway(&self) -> Result<LlmGateway, LlmError> {
        let cache_path = || {
            self.replay_path.as_deref().ok_or_else(|| LlmError::InvalidRequest("replay_path is not set".into()))
        };
        Ok(match self.mode {
            GatewayMode::Live => LlmGateway::live(Box::new(HttpBackend::new(self.http.clone()))),
            GatewayMode::Record => LlmGateway::record(
                Box::new(HttpBackend::new(self.http.clone())),
                Arc::new(ReplayCache::open(cache_path()?)?),
            ),
            GatewayMode::Replay => LlmGateway::replay(Arc::new(ReplayCache::load(cache_path()?)?)),
        })
    }
}
