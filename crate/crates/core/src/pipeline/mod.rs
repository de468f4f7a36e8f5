//! The four-step generation loop and its per-question trace.

mod batch;
mod describe;
mod run;
mod templates;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::catalog::{
    database_path, introspect_database, load_descriptions, sample_values, CatalogError, DatabaseCatalog,
    DescriptionSource, SchemaDescriptions, ValueSamples,
};
use crate::config::PipelineConfig;
use crate::linking::LinkedSchema;
use crate::llm::TokenUsage;
use crate::sql::{ExecutionOutcome, SchemaSet};

pub use batch::{generated_path, load_contexts, read_generated, run_batch, BatchMode, FewShot};
pub use describe::{describe_table, TableDescription};
pub use run::{normalize_sql, Pipeline, Step1Output, Step2Output};
pub use templates::{render_template, Templates, TEMPLATE_NAMES};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Difficulty {
    Simple,
    Moderate,
    Challenging,
}

impl Difficulty {
    pub const ALL: [Difficulty; 3] = [Difficulty::Simple, Difficulty::Moderate, Difficulty::Challenging];

    pub fn label(self) -> &'static str {
        match self {
            Difficulty::Simple => "simple",
            Difficulty::Moderate => "moderate",
            Difficulty::Challenging => "challenging",
        }
    }
}

/// One natural-language question against one database.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionTask {
    pub question_id: String,
    pub db_id: String,
    pub question: String,
    #[serde(default)]
    pub evidence: String,
    #[serde(default)]
    pub gold_sql: Option<String>,
    #[serde(default)]
    pub difficulty: Option<Difficulty>,
}

/// Everything the prompts need about one database.
#[derive(Debug, Clone)]
pub struct DatabaseContext {
    pub db_path: PathBuf,
    pub catalog: DatabaseCatalog,
    pub samples: ValueSamples,
    pub descriptions: SchemaDescriptions,
}

impl DatabaseContext {
    /// Loads `<db_root>/<db_id>/<db_id>.sqlite` plus its
    /// `database_description` directory when present.
    pub fn load(db_root: &Path, db_id: &str, config: &PipelineConfig) -> Result<Self, CatalogError> {
        let db_path = database_path(db_root, db_id);
        let desc_dir = db_path.parent().map(|p| p.join("database_description"));
        let source = desc_dir.map_or(DescriptionSource::None, DescriptionSource::Directory);
        Self::from_path(&db_path, &source, config)
    }

    pub fn from_path(db_path: &Path, source: &DescriptionSource, config: &PipelineConfig) -> Result<Self, CatalogError> {
        let catalog = introspect_database(db_path)?;
        let samples = sample_values(&catalog, db_path, config.rows_per_table, config.seed, config.max_cell_len)?;
        let descriptions = load_descriptions(&catalog, source)?;
        for w in &descriptions.warnings {
            log::warn!("{}: {w}", catalog.db_id);
        }
        Ok(Self { db_path: db_path.to_path_buf(), catalog, samples, descriptions })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SqlCandidate {
    pub sql: String,
    pub outcome: ExecutionOutcome,
}

/// Descriptions of the simplified schema plus the pre-generated components.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContextAugmentation {
    /// `table.column` to description, restricted to the simplified schema.
    pub descriptions: BTreeMap<String, String>,
    pub elements: Vec<String>,
    pub conditions: Vec<String>,
    pub keywords: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Choice {
    Sql1,
    Sql2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMethod {
    /// Both candidates were identical; no model call.
    ShortCircuit,
    /// Only one candidate was available.
    OnlyCandidate,
    /// The model's reply named a candidate.
    Model,
    /// The reply could not be mapped even after a second ask.
    Defaulted,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Selection {
    pub choice: Choice,
    pub method: SelectionMethod,
    /// Raw selection reply(ies), empty when no call was made.
    pub rationale: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectionRound {
    /// Execution feedback sent for the previous query.
    pub feedback: String,
    pub sql: String,
    pub outcome: ExecutionOutcome,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CallRecord {
    pub tag: String,
    pub fingerprint: String,
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IssueKind {
    /// Transport, auth or invalid-request failure.
    Gateway,
    /// Replay mode found no recorded response.
    ReplayMiss,
    /// A reply could not be parsed after the retry.
    Unparseable,
    /// A step fell back to a degraded path.
    Fallback,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceIssue {
    pub step: String,
    pub kind: IssueKind,
    pub message: String,
}

/// Full record of one question's run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineTrace {
    pub question_id: String,
    pub db_id: String,
    pub links: LinkedSchema,
    /// Forward-link mentions that did not resolve.
    pub dropped_links: Vec<String>,
    /// Schema used by steps 2 to 4.
    pub simplified: SchemaSet,
    pub sql1: Option<SqlCandidate>,
    pub sql2: Option<SqlCandidate>,
    pub sql3: Option<SqlCandidate>,
    pub augmentation: ContextAugmentation,
    pub selection: Option<Selection>,
    pub correction_rounds: Vec<CorrectionRound>,
    pub calls: Vec<CallRecord>,
    pub token_totals: TokenUsage,
    pub issues: Vec<TraceIssue>,
    pub final_sql: String,
}

impl PipelineTrace {
    pub fn new(task: &QuestionTask) -> Self {
        Self {
            question_id: task.question_id.clone(),
            db_id: task.db_id.clone(),
            links: LinkedSchema::new(SchemaSet::new(), SchemaSet::new()),
            dropped_links: Vec::new(),
            simplified: SchemaSet::new(),
            sql1: None,
            sql2: None,
            sql3: None,
            augmentation: ContextAugmentation::default(),
            selection: None,
            correction_rounds: Vec::new(),
            calls: Vec::new(),
            token_totals: TokenUsage::default(),
            issues: Vec::new(),
            final_sql: String::new(),
        }
    }

    pub fn has_issue(&self, kind: IssueKind) -> bool {
        self.issues.iter().any(|i| i.kind == kind)
    }

    /// Token usage per request tag.
    pub fn usage_by_tag(&self) -> BTreeMap<String, TokenUsage> {
        let mut out: BTreeMap<String, TokenUsage> = BTreeMap::new();
        for c in &self.calls {
            out.entry(c.tag.clone()).or_default().add(&TokenUsage {
                calls: 1,
                prompt_tokens: c.prompt_tokens,
                completion_tokens: c.completion_tokens,
            });
        }
        out
    }
}

/// `"<sql>\t----- bird -----\t<db_id>"`, the submission encoding.
pub fn bird_prediction(sql: &str, db_id: &str) -> String {
    let one_line = sql.split_whitespace().collect::<Vec<_>>().join(" ");
    format!("{one_line}\t----- bird -----\t{db_id}")
}

/// Inverse of [`bird_prediction`]; plain SQL passes through unchanged.
pub fn parse_prediction(value: &str) -> (String, Option<String>) {
    match value.split_once("\t----- bird -----\t") {
        Some((sql, db)) => (sql.to_string(), Some(db.trim().to_string())),
        None => (value.to_string(), None),
    }
}
