use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use super::{DatabaseContext, Pipeline, PipelineTrace, QuestionTask, Templates};
use crate::catalog::{load_descriptions, CatalogError, DescriptionSource, GeneratedDescriptions};
use crate::config::PipelineConfig;
use crate::fewshot::{select_top_k, Example, ExampleIndex, Vectorizer};
use crate::llm::LlmGateway;

/// Which steps a batch runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BatchMode {
    /// Step 1 only.
    Link,
    Full,
}

/// Demonstration source shared by all questions of a batch.
pub struct FewShot<'a> {
    pub index: &'a ExampleIndex,
    pub vectorizer: &'a dyn Vectorizer,
}

/// Loads each database once. Descriptions from `<db_root>/<db_id>/database_description`
/// are completed by `<generated_dir>/<db_id>.json` when given.
pub fn load_contexts(
    tasks: &[QuestionTask],
    db_root: &Path,
    generated_dir: Option<&Path>,
    config: &PipelineConfig,
) -> Result<BTreeMap<String, DatabaseContext>, CatalogError> {
    let mut out = BTreeMap::new();
    for task in tasks {
        if out.contains_key(&task.db_id) {
            continue;
        }
        let mut ctx = DatabaseContext::load(db_root, &task.db_id, config)?;
        if let Some(path) = generated_dir.map(|d| generated_path(d, &task.db_id)).filter(|p| p.is_file()) {
            let generated = read_generated(&path)?;
            let extra = load_descriptions(&ctx.catalog, &DescriptionSource::Generated(generated))?;
            ctx.descriptions.fill_missing(&extra);
        }
        out.insert(task.db_id.clone(), ctx);
    }
    Ok(out)
}

pub fn generated_path(dir: &Path, db_id: &str) -> PathBuf {
    dir.join(format!("{db_id}.json"))
}

pub fn read_generated(path: &Path) -> Result<GeneratedDescriptions, CatalogError> {
    let bad = |reason: String| CatalogError::MalformedDescriptionFile { path: path.to_path_buf(), reason };
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| bad(e.to_string()))
}

/// Runs every task on a pool of `config.workers` threads. Traces come back
/// in task order.
pub fn run_batch(
    tasks: &[QuestionTask],
    contexts: &BTreeMap<String, DatabaseContext>,
    gateway: &LlmGateway,
    config: &PipelineConfig,
    templates: &Templates,
    fewshot: Option<&FewShot<'_>>,
    mode: BatchMode,
) -> Vec<PipelineTrace> {
    let pipeline = Pipeline { gateway, config, templates };
    let one = |task: &QuestionTask| -> PipelineTrace {
        let db = &contexts[&task.db_id];
        let examples: Vec<Example> = match fewshot {
            None => Vec::new(),
            Some(f) => select_top_k(f.index, f.vectorizer, &task.question, config.few_shot_k).unwrap_or_else(|e| {
                log::warn!("{}: few-shot selection failed: {e}", task.question_id);
                Vec::new()
            }),
        };
        let trace = match mode {
            BatchMode::Link => pipeline.link(task, db, &examples),
            BatchMode::Full => pipeline.run(task, db, &examples),
        };
        log::info!("{} done, {} calls, {} issues", task.question_id, trace.calls.len(), trace.issues.len());
        trace
    };
    match rayon::ThreadPoolBuilder::new().num_threads(config.workers).build() {
        Ok(pool) => pool.install(|| tasks.par_iter().map(one).collect()),
        Err(e) => {
            log::warn!("thread pool unavailable ({e}); running serially");
            tasks.iter().map(one).collect()
        }
    }
}
