//! Demonstration selection by Euclidean distance between question vectors.

use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::llm::{HttpBackend, LlmError};

pub const DEFAULT_DIMENSION: usize = 1024;
pub const DEFAULT_K: usize = 5;

#[derive(Debug, thiserror::Error)]
pub enum FewShotError {
    #[error("training set is empty")]
    EmptyTrainingSet,
    #[error("index was built with {index}, queried with {query}")]
    VectorizerMismatch { index: String, query: String },
    #[error("embedding failed: {0}")]
    Embedding(#[from] LlmError),
}

/// Maps a question to a fixed-length vector.
pub trait Vectorizer: Send + Sync {
    /// Identifies the vectorizer and its parameters.
    fn id(&self) -> String;
    fn vectorize(&self, text: &str) -> Result<Vec<f64>, FewShotError>;
}

/// Hashed character-trigram counts, L2-normalised.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrigramVectorizer {
    pub dimension: usize,
}

impl Default for TrigramVectorizer {
    fn default() -> Self {
        Self { dimension: DEFAULT_DIMENSION }
    }
}

fn fnv1a(bytes: impl IntoIterator<Item = u8>) -> u64 {
    bytes.into_iter().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

impl Vectorizer for TrigramVectorizer {
    fn id(&self) -> String {
        format!("trigram-fnv1a-{}", self.dimension)
    }

    fn vectorize(&self, text: &str) -> Result<Vec<f64>, FewShotError> {
        let mut v = vec![0.0; self.dimension];
        let normalized: Vec<char> = text
            .to_lowercase()
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ")
            .chars()
            .collect();
        if normalized.is_empty() {
            return Ok(v);
        }
        let padded: Vec<char> = std::iter::once(' ').chain(normalized).chain(std::iter::once(' ')).collect();
        for gram in padded.windows(3) {
            let mut buf = [0u8; 12];
            let bytes = gram.iter().flat_map(|c| c.encode_utf8(&mut buf).as_bytes().to_vec()).collect::<Vec<u8>>();
            v[(fnv1a(bytes) % self.dimension as u64) as usize] += 1.0;
        }
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        v.iter_mut().for_each(|x| *x /= norm);
        Ok(v)
    }
}

/// Embeddings from an OpenAI-compatible `/embeddings` endpoint.
pub struct HttpEmbedder {
    pub backend: HttpBackend,
    pub model: String,
}

impl Vectorizer for HttpEmbedder {
    fn id(&self) -> String {
        format!("http-embedding-{}", self.model)
    }

    fn vectorize(&self, text: &str) -> Result<Vec<f64>, FewShotError> {
        let reply = self.backend.post_json("embeddings", &json!({"model": self.model, "input": text}))?;
        reply
            .pointer("/data/0/embedding")
            .and_then(|v| v.as_array())
            .and_then(|items| items.iter().map(|x| x.as_f64()).collect::<Option<Vec<f64>>>())
            .ok_or_else(|| {
                FewShotError::Embedding(LlmError::Transport { attempts: 1, message: "no data[0].embedding".into() })
            })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub question: String,
    pub sql: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IndexEntry {
    pub question: String,
    pub sql: String,
    pub vector: Vec<f64>,
}

/// Vectorised training pairs; immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExampleIndex {
    pub vectorizer_id: String,
    pub entries: Vec<IndexEntry>,
}

pub fn build_index(pairs: &[Example], vectorizer: &dyn Vectorizer) -> Result<ExampleIndex, FewShotError> {
    if pairs.is_empty() {
        return Err(FewShotError::EmptyTrainingSet);
    }
    let entries = pairs
        .iter()
        .map(|p| {
            Ok(IndexEntry { question: p.question.clone(), sql: p.sql.clone(), vector: vectorizer.vectorize(&p.question)? })
        })
        .collect::<Result<Vec<_>, FewShotError>>()?;
    Ok(ExampleIndex { vectorizer_id: vectorizer.id(), entries })
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

impl ExampleIndex {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// The `k` nearest pairs with their distances, closest first; ties keep
    /// training order.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<(&IndexEntry, f64)> {
        assert!(k >= 1, "k must be at least 1");
        let mut scored: Vec<(usize, f64)> =
            self.entries.iter().enumerate().map(|(i, e)| (i, euclidean(&e.vector, query))).collect();
        scored.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        scored.into_iter().take(k).map(|(i, d)| (&self.entries[i], d)).collect()
    }
}

/// Top-`k` demonstrations for `question`.
pub fn select_top_k(
    index: &ExampleIndex,
    vectorizer: &dyn Vectorizer,
    question: &str,
    k: usize,
) -> Result<Vec<Example>, FewShotError> {
    if vectorizer.id() != index.vectorizer_id {
        return Err(FewShotError::VectorizerMismatch { index: index.vectorizer_id.clone(), query: vectorizer.id() });
    }
    let query = vectorizer.vectorize(question)?;
    Ok(index
        .nearest(&query, k)
        .into_iter()
        .map(|(e, _)| Example { question: e.question.clone(), sql: e.sql.clone() })
        .collect())
}

/// Reads question/SQL pairs from a JSON array of BIRD (`SQL`) or Spider
/// (`query`) records. Records lacking either field are skipped.
pub fn load_examples(path: &std::path::Path) -> std::io::Result<Vec<Example>> {
    let text = std::fs::read_to_string(path)?;
    let records: Vec<serde_json::Value> = serde_json::from_str(&text).map_err(std::io::Error::other)?;
    let field = |r: &serde_json::Value, k: &str| r.get(k).and_then(|v| v.as_str()).map(str::to_string);
    Ok(records
        .iter()
        .filter_map(|r| {
            let question = field(r, "question")?;
            let sql = field(r, "SQL").or_else(|| field(r, "query"))?;
            Some(Example { question, sql })
        })
        .collect())
}

/// Renders demonstrations as the `E` block of a prompt.
pub fn render_examples(examples: &[Example]) -> String {
    examples
        .iter()
        .map(|e| format!("/* Question: {} */\n{}", e.question.trim(), e.sql.trim()))
        .collect::<Vec<_>>()
        .join("\n\n")
}
