//! Dataset loading and execution-based scoring.

mod cost;
mod dataset;
mod recall;
mod sample;
mod score;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

pub use cost::{cost_report, CostReport, PriceTable};
pub use dataset::{load_dataset, Dataset, DatasetKind};
pub use recall::{recall_table, RecallRow, RecallTable, RECALL_METHODS};
pub use sample::stratified_sample;
pub use score::{evaluate_ex, evaluate_ves, BucketScore, ExReport, Exclusion, QuestionScore, VesQuestion, VesReport};

use crate::pipeline::parse_prediction;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("malformed dataset {}: {}", path.display(), diagnostics.join(" | "))]
    MalformedDataset { path: PathBuf, diagnostics: Vec<String> },
    #[error("malformed predictions {}: {message}", path.display())]
    MalformedPredictions { path: PathBuf, message: String },
    #[error("timing runs must be a positive odd number, got {0}")]
    InvalidTimingRuns(usize),
}

/// Everything `eval` reports for one predictions file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub ex: ExReport,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ves: Option<VesReport>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub recall: Option<RecallTable>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cost: Option<CostReport>,
    pub n_evaluated: usize,
    pub n_excluded: usize,
}

impl EvalReport {
    pub fn new(ex: ExReport) -> Self {
        let (n_evaluated, n_excluded) = (ex.n_evaluated, ex.n_excluded);
        Self { ex, ves: None, recall: None, cost: None, n_evaluated, n_excluded }
    }
}

/// Reads a JSON object of question id to SQL. Values in the submission
/// encoding (`sql\t----- bird -----\tdb`) are reduced to their SQL.
pub fn load_predictions(path: &Path) -> Result<HashMap<String, String>, EvalError> {
    let err = |message: String| EvalError::MalformedPredictions { path: path.to_path_buf(), message };
    let text = std::fs::read_to_string(path).map_err(|e| err(e.to_string()))?;
    let raw: HashMap<String, String> = serde_json::from_str(&text).map_err(|e| err(e.to_string()))?;
    Ok(raw.into_iter().map(|(k, v)| (k, parse_prediction(&v).0)).collect())
}
