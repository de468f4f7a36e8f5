use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::catalog::DatabaseCatalog;
use crate::linking::{gold_schema, recall_stats, LinkError, RecallStats};
use crate::pipeline::PipelineTrace;
use crate::sql::SchemaSet;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallRow {
    pub method: String,
    pub stats: RecallStats,
}

/// Recall of the linked schemas against the reference query columns, with
/// rows for the full schema, each link direction, their union and the gold
/// sets themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallTable {
    pub rows: Vec<RecallRow>,
    pub n_included: usize,
    /// Question ids dropped because the trace or gold columns were unusable.
    pub excluded: Vec<String>,
}

impl RecallTable {
    pub fn row(&self, method: &str) -> Option<&RecallStats> {
        self.rows.iter().find(|r| r.method == method).map(|r| &r.stats)
    }

    /// `Method | SRR | NSR | Avg.T | Avg.C` with percentages.
    pub fn render_table(&self) -> String {
        let mut out = format!("{:<24} {:>8} {:>8} {:>8} {:>8}\n", "Method", "SRR", "NSR", "Avg.T", "Avg.C");
        for r in &self.rows {
            out.push_str(&format!(
                "{:<24} {:>8.2} {:>8.2} {:>8.2} {:>8.2}\n",
                r.method,
                100.0 * r.stats.srr,
                100.0 * r.stats.nsr,
                r.stats.avg_tables,
                r.stats.avg_columns
            ));
        }
        out
    }
}

pub const RECALL_METHODS: [&str; 5] = ["Full Schema", "Forward", "Backward", "Bidirectional", "Gold"];

/// Builds the recall table for the traces. Questions without gold SQL, with
/// unparseable gold SQL, with no gold columns, or without a catalog are
/// excluded.
pub fn recall_table(
    traces: &[PipelineTrace],
    dataset: &Dataset,
    catalogs: &BTreeMap<String, DatabaseCatalog>,
) -> Result<RecallTable, LinkError> {
    let mut sets: [Vec<SchemaSet>; 5] = Default::default();
    let mut excluded = Vec::new();
    for trace in traces {
        let gold = dataset
            .task(&trace.question_id)
            .and_then(|t| t.gold_sql.as_deref())
            .zip(catalogs.get(&trace.db_id))
            .and_then(|(sql, catalog)| gold_schema(sql, catalog).ok().map(|g| (g, catalog)))
            .filter(|(g, _)| g.column_count() > 0);
        let Some((gold, catalog)) = gold else {
            excluded.push(trace.question_id.clone());
            continue;
        };
        let linked = [
            catalog.full_schema_set(),
            trace.links.forward.clone(),
            trace.links.backward.clone(),
            trace.links.union.clone(),
        ];
        for (slot, set) in sets.iter_mut().zip(linked) {
            slot.push(set);
        }
        sets[4].push(gold);
    }
    if !excluded.is_empty() {
        log::warn!("{} questions excluded from recall", excluded.len());
    }
    let gold = &sets[4];
    let rows = RECALL_METHODS
        .iter()
        .zip(&sets)
        .map(|(m, linked)| Ok(RecallRow { method: m.to_string(), stats: recall_stats(linked, gold)? }))
        .collect::<Result<Vec<_>, LinkError>>()?;
    Ok(RecallTable { rows, n_included: gold.len(), excluded })
}
