use std::collections::{BTreeMap, HashMap};
use std::time::Duration;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{Dataset, EvalError};
use crate::pipeline::{Difficulty, QuestionTask};
use crate::sql::{execute_sql, results_match, ExecutionOutcome};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketScore {
    pub correct: usize,
    pub total: usize,
}

impl BucketScore {
    /// Percentage in `[0, 100]`; zero for an empty bucket.
    pub fn ex(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            100.0 * self.correct as f64 / self.total as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub question_id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionScore {
    pub question_id: String,
    pub difficulty: Option<Difficulty>,
    pub correct: bool,
    /// Why the prediction failed, if it did not execute cleanly.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExReport {
    pub total: BucketScore,
    /// Only difficulties with at least one evaluated question appear.
    pub buckets: BTreeMap<Difficulty, BucketScore>,
    pub n_evaluated: usize,
    pub n_excluded: usize,
    pub excluded: Vec<Exclusion>,
    /// Predictions whose id is not part of the dataset.
    pub unknown_predictions: Vec<String>,
    pub per_question: Vec<QuestionScore>,
}

impl ExReport {
    pub fn ex_total(&self) -> f64 {
        self.total.ex()
    }

    pub fn ex_for(&self, difficulty: Difficulty) -> Option<f64> {
        self.buckets.get(&difficulty).map(BucketScore::ex)
    }

    /// One row in the layout `Simple | Moderate | Challenging | Total`;
    /// absent buckets print as `-`.
    pub fn render_table(&self, label: &str) -> String {
        let mut header = format!("{:<24}", "Method");
        let mut row = format!("{label:<24}");
        for d in Difficulty::ALL {
            let name = d.label();
            let mut title = name.to_string();
            title[..1].make_ascii_uppercase();
            header.push_str(&format!(" {title:>12}"));
            let cell = self.ex_for(d).map_or_else(|| "-".to_string(), |v| format!("{v:.2}"));
            row.push_str(&format!(" {cell:>12}"));
        }
        header.push_str(&format!(" {:>12}", "Total"));
        row.push_str(&format!(" {:>12}", format!("{:.2}", self.ex_total())));
        format!("{header}\n{row}\n")
    }
}

enum Graded {
    Excluded(Exclusion),
    Scored(QuestionScore),
}

fn gold_of(task: &QuestionTask) -> Result<&str, Exclusion> {
    task.gold_sql.as_deref().filter(|s| !s.trim().is_empty()).ok_or_else(|| Exclusion {
        question_id: task.question_id.clone(),
        reason: "no gold SQL".into(),
    })
}

fn exclusion_for_gold(task: &QuestionTask, gold: &ExecutionOutcome) -> Exclusion {
    Exclusion {
        question_id: task.question_id.clone(),
        reason: format!(
            "gold SQL {:?}: {}",
            gold.status,
            gold.error_message.as_deref().unwrap_or("")
        ),
    }
}

fn pred_error(outcome: &ExecutionOutcome) -> Option<String> {
    (!outcome.is_ok()).then(|| {
        format!("{:?}: {}", outcome.status, outcome.error_message.as_deref().unwrap_or("")).to_lowercase()
    })
}

fn unknown_ids(predictions: &HashMap<String, String>, dataset: &Dataset) -> Vec<String> {
    let known: std::collections::HashSet<&str> = dataset.tasks.iter().map(|t| t.question_id.as_str()).collect();
    let mut unknown: Vec<String> = predictions.keys().filter(|k| !known.contains(k.as_str())).cloned().collect();
    unknown.sort();
    for id in &unknown {
        log::warn!("prediction for unknown question {id} ignored");
    }
    unknown
}

fn grade(task: &QuestionTask, dataset: &Dataset, predictions: &HashMap<String, String>, timeout: Duration) -> Graded {
    let gold_sql = match gold_of(task) {
        Ok(s) => s,
        Err(e) => return Graded::Excluded(e),
    };
    let db = dataset.db_path(task);
    let gold = execute_sql(&db, gold_sql, timeout);
    if !gold.is_ok() {
        return Graded::Excluded(exclusion_for_gold(task, &gold));
    }
    let (correct, error) = match predictions.get(&task.question_id) {
        None => (false, Some("missing prediction".to_string())),
        Some(sql) => {
            let pred = execute_sql(&db, sql, timeout);
            (results_match(&pred, &gold), pred_error(&pred))
        }
    };
    Graded::Scored(QuestionScore { question_id: task.question_id.clone(), difficulty: task.difficulty, correct, error })
}

/// Execution accuracy over `dataset`. Questions whose gold query fails to
/// run are excluded and counted; missing predictions count as wrong.
pub fn evaluate_ex(predictions: &HashMap<String, String>, dataset: &Dataset, timeout: Duration) -> ExReport {
    let unknown_predictions = unknown_ids(predictions, dataset);
    let graded: Vec<Graded> = dataset.tasks.par_iter().map(|t| grade(t, dataset, predictions, timeout)).collect();
    let mut report = ExReport {
        total: BucketScore::default(),
        buckets: BTreeMap::new(),
        n_evaluated: 0,
        n_excluded: 0,
        excluded: Vec::new(),
        unknown_predictions,
        per_question: Vec::new(),
    };
    for g in graded {
        match g {
            Graded::Excluded(e) => report.excluded.push(e),
            Graded::Scored(q) => {
                for bucket in std::iter::once(&mut report.total)
                    .chain(q.difficulty.map(|d| report.buckets.entry(d).or_default()))
                {
                    bucket.total += 1;
                    bucket.correct += usize::from(q.correct);
                }
                report.per_question.push(q);
            }
        }
    }
    report.n_evaluated = report.per_question.len();
    report.n_excluded = report.excluded.len();
    debug_assert_eq!(report.n_evaluated + report.n_excluded, dataset.tasks.len());
    report
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesQuestion {
    pub question_id: String,
    pub reward: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_median_ms: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pred_median_ms: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VesReport {
    pub ves: f64,
    pub timing_runs: usize,
    pub n_evaluated: usize,
    pub n_excluded: usize,
    pub per_question: Vec<VesQuestion>,
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    xs[xs.len() / 2]
}

/// Valid efficiency score: `100 * mean(sqrt(t_gold / t_pred))` over
/// evaluated questions, with zero reward for non-matching predictions.
///
/// After one untimed warm-up execution of each query, gold and prediction
/// are timed alternately `timing_runs` times and the medians compared.
/// Questions run one after another so timings do not contend.
pub fn evaluate_ves(
    predictions: &HashMap<String, String>,
    dataset: &Dataset,
    timing_runs: usize,
    timeout: Duration,
) -> Result<VesReport, EvalError> {
    if timing_runs == 0 || timing_runs.is_multiple_of(2) {
        return Err(EvalError::InvalidTimingRuns(timing_runs));
    }
    unknown_ids(predictions, dataset);
    let mut per_question = Vec::new();
    let mut n_excluded = 0;
    for task in &dataset.tasks {
        let Ok(gold_sql) = gold_of(task) else {
            n_excluded += 1;
            continue;
        };
        let db = dataset.db_path(task);
        let gold = execute_sql(&db, gold_sql, timeout);
        if !gold.is_ok() {
            n_excluded += 1;
            continue;
        }
        let zero = |id: &str| VesQuestion { question_id: id.to_string(), reward: 0.0, gold_median_ms: None, pred_median_ms: None };
        let Some(pred_sql) = predictions.get(&task.question_id) else {
            per_question.push(zero(&task.question_id));
            continue;
        };
        let pred = execute_sql(&db, pred_sql, timeout);
        if !results_match(&pred, &gold) {
            per_question.push(zero(&task.question_id));
            continue;
        }
        let mut gold_times = Vec::with_capacity(timing_runs);
        let mut pred_times = Vec::with_capacity(timing_runs);
        for _ in 0..timing_runs {
            gold_times.push(execute_sql(&db, gold_sql, timeout).elapsed);
            pred_times.push(execute_sql(&db, pred_sql, timeout).elapsed);
        }
        let g = median(gold_times).as_secs_f64();
        let p = median(pred_times).as_secs_f64().max(1e-9);
        per_question.push(VesQuestion {
            question_id: task.question_id.clone(),
            reward: (g / p).sqrt(),
            gold_median_ms: Some(g * 1e3),
            pred_median_ms: Some(p * 1e3),
        });
    }
    let n = per_question.len();
    let ves = if n == 0 { 0.0 } else { 100.0 * per_question.iter().map(|q| q.reward).sum::<f64>() / n as f64 };
    Ok(VesReport { ves, timing_runs, n_evaluated: n, n_excluded, per_question })
}
