use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::{Mutex, RwLock};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{BackendKind, ChatMessage, ChatRequest, ChatResponse, LlmError};

#[derive(Serialize)]
struct FingerprintInput<'a> {
    model: &'a str,
    temperature: f64,
    messages: &'a [ChatMessage],
}

fn canonical_form(request: &ChatRequest) -> String {
    serde_json::to_string(&FingerprintInput {
        model: &request.model,
        temperature: request.temperature,
        messages: &request.messages,
    })
    .expect("request serialization cannot fail")
}

/// Hex SHA-256 of the canonical JSON of model, temperature and messages.
pub fn fingerprint(request: &ChatRequest) -> String {
    hex::encode(Sha256::digest(canonical_form(request).as_bytes()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordedResponse {
    pub content: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

/// One line of the cache file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheRecord {
    pub fingerprint: String,
    pub request: ChatRequest,
    pub response: RecordedResponse,
}

/// Append-only JSONL store of request/response pairs keyed by fingerprint.
///
/// Later records for the same fingerprint shadow earlier ones.
pub struct ReplayCache {
    path: PathBuf,
    entries: RwLock<HashMap<String, CacheRecord>>,
    writer: Mutex<Option<File>>,
}

impl ReplayCache {
    /// Opens (creating if needed) a cache for reading and appending.
    pub fn open(path: &Path) -> Result<Self, LlmError> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent).map_err(|e| cache_error(path, e))?;
        }
        let file = OpenOptions::new().create(true).append(true).open(path).map_err(|e| cache_error(path, e))?;
        let entries = Self::read_entries(path)?;
        Ok(Self { path: path.to_path_buf(), entries: RwLock::new(entries), writer: Mutex::new(Some(file)) })
    }

    /// Opens an existing cache without write access.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let entries = Self::read_entries(path)?;
        Ok(Self { path: path.to_path_buf(), entries: RwLock::new(entries), writer: Mutex::new(None) })
    }

    fn read_entries(path: &Path) -> Result<HashMap<String, CacheRecord>, LlmError> {
        let file = File::open(path).map_err(|e| cache_error(path, e))?;
        let mut entries = HashMap::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| cache_error(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: CacheRecord = serde_json::from_str(&line)
                .map_err(|e| cache_error(path, format!("line {}: {e}", lineno + 1)))?;
            let expected = fingerprint(&record.request);
            if record.fingerprint != expected {
                return Err(cache_error(
                    path,
                    format!("line {}: fingerprint {} does not match request ({expected})", lineno + 1, record.fingerprint),
                ));
            }
            entries.insert(record.fingerprint.clone(), record);
        }
        Ok(entries)
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.entries.read().unwrap_or_else(|e| e.into_inner()).len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookup(&self, request: &ChatRequest) -> Option<ChatResponse> {
        let key = fingerprint(request);
        let entries = self.entries.read().unwrap_or_else(|e| e.into_inner());
        let record = entries.get(&key)?;
        if canonical_form(&record.request) != canonical_form(request) {
            log::warn!("fingerprint collision on {key}; treating as a miss");
            return None;
        }
        Some(ChatResponse {
            content: record.response.content.clone(),
            prompt_tokens: record.response.prompt_tokens,
            completion_tokens: record.response.completion_tokens,
            backend: BackendKind::Replay,
        })
    }

    pub fn append(&self, request: &ChatRequest, response: &ChatResponse) -> Result<(), LlmError> {
        let record = CacheRecord {
            fingerprint: fingerprint(request),
            request: request.clone(),
            response: RecordedResponse {
                content: response.content.clone(),
                prompt_tokens: response.prompt_tokens,
                completion_tokens: response.completion_tokens,
            },
        };
        let mut line = serde_json::to_string(&record).map_err(|e| cache_error(&self.path, e))?;
        line.push('\n');
        {
            let mut writer = self.writer.lock().unwrap_or_else(|e| e.into_inner());
            let file = writer
                .as_mut()
                .ok_or_else(|| cache_error(&self.path, "cache was opened read-only"))?;
            file.write_all(line.as_bytes()).map_err(|e| cache_error(&self.path, e))?;
            file.flush().map_err(|e| cache_error(&self.path, e))?;
        }
        self.entries.write().unwrap_or_else(|e| e.into_inner()).insert(record.fingerprint.clone(), record);
        Ok(())
    }

    /// All records, ordered by fingerprint.
    pub fn records(&self) -> Vec<CacheRecord> {
        let mut out: Vec<CacheRecord> =
            self.entries.read().unwrap_or_else(|e| e.into_inner()).values().cloned().collect();
        out.sort_by(|a, b| a.fingerprint.cmp(&b.fingerprint));
        out
    }
}

fn cache_error(path: &Path, e: impl ToString) -> LlmError {
    LlmError::Cache { path: path.display().to_string(), message: e.to_string() }
}
