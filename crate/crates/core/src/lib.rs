//! Text-to-SQL generation with bidirectional schema linking.
//!
//! The crate is split along the stages of the pipeline:
//!
//! - [`catalog`]: SQLite introspection, value samples, column descriptions and
//!   the prompt-facing schema rendering.
//! - [`sql`]: schema-reference extraction from SQL text and sandboxed execution.
//! - [`linking`]: forward/backward linking, schema simplification and recall metrics.
//! - [`llm`]: chat-completion gateway with HTTP, record and replay backends.
//! - [`fewshot`]: nearest-neighbour demonstration selection.
//! - [`pipeline`]: the four-step generation loop producing a [`pipeline::PipelineTrace`].
//! - [`eval`]: dataset loading, EX/VES scoring and cost accounting.

pub mod catalog;
pub mod config;
pub mod eval;
pub mod fewshot;
pub mod linking;
pub mod llm;
pub mod pipeline;
pub mod sql;

pub use catalog::{DatabaseCatalog, SchemaDescriptions, ValueSamples};
pub use config::PipelineConfig;
pub use sql::{ExecutionOutcome, SchemaSet};

/// Canonical form of a SQL identifier: surrounding quotes removed, ASCII case folded.
pub fn canonical_ident(raw: &str) -> String {
    let trimmed = raw.trim();
    let unquoted = match (trimmed.chars().next(), trimmed.chars().last()) {
        (Some('"'), Some('"')) | (Some('`'), Some('`')) if trimmed.len() >= 2 => {
            &trimmed[1..trimmed.len() - 1]
        }
        (Some('['), Some(']')) if trimmed.len() >= 2 => &trimmed[1..trimmed.len() - 1],
        _ => trimmed,
    };
    unquoted.to_ascii_lowercase()
}
