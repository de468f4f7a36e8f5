use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::LlmError;
use crate::linking::first_json_value;

/// Pulls a single SQL statement out of a model reply.
///
/// Tried in order: fenced code blocks, a `SQL:` line, then the text from the
/// first `SELECT`/`WITH` keyword. The statement ends at the first semicolon
/// outside quotes or at a blank line.
pub fn extract_sql(reply: &str) -> Result<String, LlmError> {
    let candidates = fenced_blocks(reply)
        .into_iter()
        .chain(sql_label(reply))
        .chain(keyword_start(reply).map(|i| &reply[i..]));
    for candidate in candidates {
        if let Some(start) = keyword_start(candidate) {
            let statement = first_statement(&candidate[start..]);
            if !statement.is_empty() {
                return Ok(statement);
            }
        }
    }
    Err(LlmError::NoSqlFound)
}

fn fenced_blocks(reply: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut rest = reply;
    while let Some(open) = rest.find("```") {
        let after = &rest[open + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let info = after[..body_start].trim();
        let (body, next) = match after[body_start..].find("```") {
            Some(close) => (&after[body_start..body_start + close], &after[body_start + close + 3..]),
            None => (&after[body_start..], ""),
        };
        if info.is_empty() || info.eq_ignore_ascii_case("sql") || info.eq_ignore_ascii_case("sqlite") {
            out.push(body);
        } else if keyword_start(info) == Some(0) {
            out.push(&after[..body_start + body.len()]);
        }
        rest = next;
    }
    out
}

fn sql_label(reply: &str) -> Option<&str> {
    let lower = reply.to_ascii_lowercase();
    let at = lower.match_indices("sql:").map(|(i, _)| i).find(|&i| {
        i == 0 || !reply[..i].chars().next_back().is_some_and(|c| c.is_alphanumeric())
    })?;
    Some(&reply[at + 4..])
}

// Byte offset of the first standalone SELECT or WITH keyword.
fn keyword_start(text: &str) -> Option<usize> {
    let bytes = text.as_bytes();
    let boundary = |i: usize| i == 0 || !(bytes[i - 1].is_ascii_alphanumeric() || bytes[i - 1] == b'_');
    let after = |i: usize| bytes.get(i).is_none_or(|b| !(b.is_ascii_alphanumeric() || *b == b'_'));
    let lower = text.to_ascii_lowercase();
    ["select", "with"]
        .iter()
        .filter_map(|kw| {
            lower.match_indices(kw).map(|(i, _)| i).find(|&i| boundary(i) && after(i + kw.len()))
        })
        .min()
}

fn first_statement(text: &str) -> String {
    let mut quote: Option<char> = None;
    let mut end = text.len();
    let mut prev_newline = false;
    for (i, c) in text.char_indices() {
        match quote {
            Some(q) if c == q => quote = None,
            Some(_) => {}
            None => match c {
                '\'' | '"' | '`' => quote = Some(c),
                ';' => {
                    end = i;
                    break;
                }
                '\n' if prev_newline => {
                    end = i;
                    break;
                }
                _ => {}
            },
        }
        if c == '\n' {
            prev_newline = true;
        } else if !c.is_whitespace() {
            prev_newline = false;
        }
    }
    text[..end].trim().trim_end_matches(';').trim_end().to_string()
}

/// String-list fields read from a JSON reply.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StructuredReply {
    pub fields: BTreeMap<String, Vec<String>>,
    /// Expected fields absent from the reply (present in `fields` as empty lists).
    pub missing: Vec<String>,
}

impl StructuredReply {
    pub fn get(&self, field: &str) -> &[String] {
        self.fields.get(field).map_or(&[], Vec::as_slice)
    }
}

fn field_key(name: &str) -> String {
    name.chars().filter(|c| c.is_alphanumeric()).flat_map(char::to_lowercase).collect()
}

/// Reads the expected list fields from the first JSON value in a reply.
/// Keys match ignoring case, spaces and underscores.
pub fn extract_structured(reply: &str, expected_fields: &[&str]) -> Result<StructuredReply, LlmError> {
    let value = first_json_value(reply).ok_or(LlmError::NoStructureFound)?;
    let mut found: BTreeMap<String, &Value> = BTreeMap::new();
    collect_objects(&value, &mut found);
    let mut out = StructuredReply::default();
    for &field in expected_fields {
        match found.get(&field_key(field)) {
            Some(v) => {
                let mut items = Vec::new();
                flatten_strings(v, &mut items);
                out.fields.insert(field.to_string(), items);
            }
            None => {
                log::warn!("structured reply lacks field {field:?}");
                out.fields.insert(field.to_string(), Vec::new());
                out.missing.push(field.to_string());
            }
        }
    }
    Ok(out)
}

fn collect_objects<'a>(value: &'a Value, found: &mut BTreeMap<String, &'a Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                found.entry(field_key(k)).or_insert(v);
            }
        }
        Value::Array(items) => items.iter().for_each(|v| collect_objects(v, found)),
        _ => {}
    }
}

fn flatten_strings(value: &Value, out: &mut Vec<String>) {
    match value {
        Value::Null => {}
        Value::String(s) => {
            if !s.trim().is_empty() {
                out.push(s.trim().to_string());
            }
        }
        Value::Array(items) => items.iter().for_each(|v| flatten_strings(v, out)),
        Value::Object(map) => map.values().for_each(|v| flatten_strings(v, out)),
        other => out.push(other.to_string()),
    }
}
