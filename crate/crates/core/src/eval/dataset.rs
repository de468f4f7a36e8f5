use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::EvalError;
use crate::catalog::database_path;
use crate::pipeline::{Difficulty, QuestionTask};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Bird,
    Spider,
    Custom,
}

impl std::str::FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bird" => Ok(Self::Bird),
            "spider" => Ok(Self::Spider),
            "custom" => Ok(Self::Custom),
            other => Err(format!("unknown dataset kind {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Dataset {
    pub name: DatasetKind,
    pub tasks: Vec<QuestionTask>,
    pub db_root: PathBuf,
}

impl Dataset {
    pub fn task(&self, question_id: &str) -> Option<&QuestionTask> {
        self.tasks.iter().find(|t| t.question_id == question_id)
    }

    pub fn db_path(&self, task: &QuestionTask) -> PathBuf {
        database_path(&self.db_root, &task.db_id)
    }
}

fn text_field(record: &Value, key: &str) -> Option<String> {
    match record.get(key)? {
        Value::String(s) => Some(s.clone()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Reads a JSON array of question records.
///
/// BIRD records carry `question_id, db_id, question, evidence, SQL,
/// difficulty`; Spider records carry `db_id, question, query`. Custom files
/// use the BIRD names with every field but `db_id` and `question` optional.
/// Missing question ids become the record index.
pub fn load_dataset(path: &Path, kind: DatasetKind, db_root: &Path) -> Result<Dataset, EvalError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| EvalError::MalformedDataset { path: path.to_path_buf(), diagnostics: vec![e.to_string()] })?;
    let records: Vec<Value> = serde_json::from_str(&text).map_err(|e| EvalError::MalformedDataset {
        path: path.to_path_buf(),
        diagnostics: vec![format!("not a JSON array of records: {e}")],
    })?;
    let mut tasks = Vec::with_capacity(records.len());
    let mut diagnostics = Vec::new();
    let mut seen = std::collections::HashSet::new();
    for (i, record) in records.iter().enumerate() {
        let mut problems = Vec::new();
        if !record.is_object() {
            diagnostics.push(format!("record {i}: not an object"));
            continue;
        }
        let db_id = text_field(record, "db_id").filter(|s| !s.trim().is_empty());
        let question = text_field(record, "question").filter(|s| !s.trim().is_empty());
        if db_id.is_none() {
            problems.push("missing db_id".to_string());
        }
        if question.is_none() {
            problems.push("missing question".to_string());
        }
        let gold_key = if kind == DatasetKind::Spider { "query" } else { "SQL" };
        let gold_sql = text_field(record, gold_key);
        if gold_sql.is_none() && kind != DatasetKind::Custom {
            problems.push(format!("missing {gold_key}"));
        }
        let question_id = match kind {
            DatasetKind::Bird => text_field(record, "question_id").unwrap_or_else(|| {
                problems.push("missing question_id".into());
                String::new()
            }),
            _ => text_field(record, "question_id").unwrap_or_else(|| i.to_string()),
        };
        let difficulty = match record.get("difficulty") {
            None | Some(Value::Null) => {
                if kind == DatasetKind::Bird {
                    problems.push("missing difficulty".into());
                }
                None
            }
            Some(v) => match serde_json::from_value::<Difficulty>(v.clone()) {
                Ok(d) => Some(d),
                Err(_) => {
                    problems.push(format!("unknown difficulty {v}"));
                    None
                }
            },
        };
        if let Some(db) = &db_id {
            if !database_path(db_root, db).is_file() {
                problems.push(format!("database {} not found", database_path(db_root, db).display()));
            }
        }
        if !question_id.is_empty() && !seen.insert(question_id.clone()) {
            problems.push(format!("duplicate question_id {question_id}"));
        }
        if !problems.is_empty() {
            diagnostics.push(format!("record {i}: {}", problems.join("; ")));
            continue;
        }
        tasks.push(QuestionTask {
            question_id,
            db_id: db_id.unwrap_or_default(),
            question: question.unwrap_or_default(),
            evidence: text_field(record, "evidence").unwrap_or_default(),
            gold_sql,
            difficulty,
        });
    }
    if !diagnostics.is_empty() {
        return Err(EvalError::MalformedDataset { path: path.to_path_buf(), diagnostics });
    }
    Ok(Dataset { name: kind, tasks, db_root: db_root.to_path_buf() })
}
