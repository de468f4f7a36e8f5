use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{DatabaseContext, Templates};
use crate::catalog::{render_sections, GeneratedDescriptions};
use crate::config::PipelineConfig;
use crate::linking::first_json_value;
use crate::llm::{ChatMessage, ChatRequest, LlmError, LlmGateway};
use crate::sql::SchemaSet;

/// Model-written description of one table and its columns.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableDescription {
    pub table: String,
    pub columns: BTreeMap<String, String>,
}

impl TableDescription {
    /// Merges into `out` under the table's name.
    pub fn merge_into(&self, table: &str, out: &mut GeneratedDescriptions) {
        if !self.table.trim().is_empty() {
            out.tables.insert(table.to_string(), self.table.trim().to_string());
        }
        for (c, text) in &self.columns {
            out.columns.insert(format!("{table}.{c}"), text.trim().to_string());
        }
    }
}

fn parse_description(reply: &str, db: &DatabaseContext, table: &str) -> Option<TableDescription> {
    let value = first_json_value(reply)?;
    let table_text = value.get("table").and_then(Value::as_str).unwrap_or_default().to_string();
    let mut columns = BTreeMap::new();
    if let Some(map) = value.get("columns").and_then(Value::as_object) {
        for (name, text) in map {
            let Some(text) = text.as_str() else { continue };
            match db.catalog.table(table).and_then(|t| t.column(name)) {
                Some(col) => {
                    columns.insert(col.name.clone(), text.to_string());
                }
                None => log::warn!("{}: description for unknown column {table}.{name} dropped", db.catalog.db_id),
            }
        }
    }
    (!table_text.is_empty() || !columns.is_empty()).then_some(TableDescription { table: table_text, columns })
}

/// Asks the model for descriptions of one table, shown with its samples.
/// One retry with a JSON reminder; `Ok(None)` when neither reply parses.
pub fn describe_table(
    gateway: &LlmGateway,
    config: &PipelineConfig,
    templates: &Templates,
    db: &DatabaseContext,
    table: &str,
) -> Result<Option<TableDescription>, LlmError> {
    let mut subset = SchemaSet::new();
    subset.add_table(table);
    let sections = render_sections(&db.catalog, &db.samples, None, Some(&subset))
        .map_err(|e| LlmError::InvalidRequest(e.to_string()))?;
    let prompt = templates.render(
        "describe",
        &[("schema", sections.schema.as_str()), ("samples", sections.samples.as_str()), ("table", table)],
    );
    let mut messages = vec![ChatMessage::system(templates.get("system").trim()), ChatMessage::user(prompt)];
    for attempt in 0..2 {
        let request = ChatRequest {
            messages: messages.clone(),
            model: config.model.clone(),
            temperature: config.temperature,
            max_tokens: config.max_tokens,
            request_tag: "describe".into(),
        };
        let reply = gateway.chat(&request)?.content;
        if let Some(d) = parse_description(&reply, db, table) {
            return Ok(Some(d));
        }
        if attempt == 0 {
            messages.push(ChatMessage::assistant(reply));
            messages.push(ChatMessage::user(templates.get("reminder_json").trim()));
        }
    }
    Ok(None)
}
