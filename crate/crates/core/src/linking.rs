//! Bidirectional schema linking, schema simplification and recall metrics.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::canonical_ident;
use crate::catalog::{CatalogError, DatabaseCatalog, ForeignKey, SchemaDescriptions, TableInfo, ValueSamples};
use crate::sql::lexer::prose_tokens;
use crate::sql::{extract_columns_ast, extract_columns_ast_with, extract_columns_name_match, ParseError, SchemaSet, StarPolicy};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum LinkError {
    #[error("no valid schema element could be linked")]
    EmptyLink,
    #[error("{linked} linked sets but {gold} gold sets")]
    LengthMismatch { linked: usize, gold: usize },
    #[error("gold set {0} has no columns")]
    EmptyGold(usize),
    #[error("no questions to summarise")]
    EmptyInput,
}

/// Forward, backward and merged links for one question.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LinkedSchema {
    pub forward: SchemaSet,
    pub backward: SchemaSet,
    pub union: SchemaSet,
}

impl LinkedSchema {
    pub fn new(forward: SchemaSet, backward: SchemaSet) -> Self {
        let union = forward.union(&backward);
        Self { forward, backward, union }
    }
}

/// Result of reading a forward-linking reply.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForwardParse {
    pub linked: SchemaSet,
    /// Mentions that did not resolve against the catalog.
    pub dropped: Vec<String>,
}

/// Reads table and `table.column` mentions from a model reply.
///
/// The first JSON value found in the text is preferred; when it yields
/// nothing, dotted identifiers anywhere in the text are used instead.
pub fn parse_forward_response(text: &str, catalog: &DatabaseCatalog) -> Result<ForwardParse, LinkError> {
    let mut out = ForwardParse { linked: SchemaSet::new(), dropped: Vec::new() };
    if let Some(value) = first_json_value(text) {
        collect_value(&value, None, catalog, &mut out);
    }
    if out.linked.is_empty() {
        out.dropped.clear();
        for mention in dotted_mentions(text) {
            resolve_mention(&mention, None, catalog, &mut out);
        }
    }
    if out.linked.is_empty() {
        return Err(LinkError::EmptyLink);
    }
    Ok(out)
}

/// First parseable JSON object or array embedded in `text`.
pub fn first_json_value(text: &str) -> Option<Value> {
    text.char_indices()
        .filter(|(_, c)| *c == '{' || *c == '[')
        .find_map(|(i, _)| serde_json::Deserializer::from_str(&text[i..]).into_iter::<Value>().next()?.ok())
        .filter(|v| v.is_object() || v.is_array())
}

fn collect_value(value: &Value, owner: Option<&str>, catalog: &DatabaseCatalog, out: &mut ForwardParse) {
    match value {
        Value::String(s) => resolve_mention(s, owner, catalog, out),
        Value::Array(items) => items.iter().for_each(|v| collect_value(v, owner, catalog, out)),
        Value::Object(map) => {
            for (key, v) in map {
                if catalog.has_table(key) {
                    out.linked.add_table(key);
                    collect_value(v, Some(key), catalog, out);
                } else {
                    collect_value(v, owner, catalog, out);
                }
            }
        }
        _ => {}
    }
}

fn resolve_mention(raw: &str, owner: Option<&str>, catalog: &DatabaseCatalog, out: &mut ForwardParse) {
    let mention = raw.trim().trim_matches(|c: char| c == '[' || c == ']' || c == ',' || c == ';');
    if mention.is_empty() {
        return;
    }
    let parts: Vec<&str> = mention.split('.').collect();
    for cut in 1..parts.len() {
        let table = parts[..cut].join(".");
        let column = parts[cut..].join(".");
        if catalog.has_column(&table, &column) {
            out.linked.add_column(&table, &column);
            return;
        }
    }
    if catalog.has_table(mention) {
        out.linked.add_table(mention);
        return;
    }
    if let Some(owner) = owner {
        if catalog.has_column(owner, mention) {
            out.linked.add_column(owner, mention);
            return;
        }
    }
    if parts.len() > 1 || owner.is_some() {
        out.dropped.push(mention.to_string());
    }
}

/// Canonical `table` or `table.column` for a single mention, if it exists in
/// the catalog.
pub fn resolve_element(mention: &str, catalog: &DatabaseCatalog) -> Option<String> {
    let mut out = ForwardParse { linked: SchemaSet::new(), dropped: Vec::new() };
    resolve_mention(mention, None, catalog, &mut out);
    let column = out.linked.columns().next().map(ToString::to_string);
    column.or_else(|| out.linked.tables().into_iter().next())
}

// `a.b` patterns where each side is a bare word or a quoted identifier.
fn dotted_mentions(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut parts: Vec<String> = Vec::new();
    let mut found = Vec::new();
    let mut i = 0;
    let flush = |parts: &mut Vec<String>, found: &mut Vec<String>| {
        if parts.len() >= 2 {
            found.push(parts.join("."));
        }
        parts.clear();
    };
    while i < chars.len() {
        let c = chars[i];
        let word = if c == '`' || c == '"' {
            chars[i + 1..].iter().position(|&x| x == c).map(|len| {
                let w: String = chars[i + 1..i + 1 + len].iter().collect();
                i += len + 2;
                w
            })
        } else if c.is_alphanumeric() || c == '_' {
            let start = i;
            while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                i += 1;
            }
            Some(chars[start..i].iter().collect())
        } else {
            None
        };
        match word {
            Some(w) => {
                parts.push(w);
                if chars.get(i) == Some(&'.') {
                    i += 1;
                } else {
                    flush(&mut parts, &mut found);
                }
            }
            None => {
                flush(&mut parts, &mut found);
                i += 1;
            }
        }
    }
    flush(&mut parts, &mut found);
    found
}

/// Adds every catalog column whose name occurs in the evidence text.
pub fn augment_with_evidence(set: &SchemaSet, evidence: &str, catalog: &DatabaseCatalog) -> SchemaSet {
    let mut out = set.clone();
    if evidence.trim().is_empty() {
        return out;
    }
    let tokens: HashSet<String> = prose_tokens(evidence).into_iter().collect();
    let lowered = evidence.to_ascii_lowercase();
    for table in catalog.tables() {
        for column in &table.columns {
            let name = canonical_ident(&column.name);
            let plain = name.chars().all(|c| c.is_alphanumeric() || c == '_');
            if tokens.contains(&name) || !plain && contains_bounded(&lowered, &name) {
                out.add_column(&table.name, &column.name);
            }
        }
    }
    out
}

fn contains_bounded(haystack: &str, needle: &str) -> bool {
    let is_word = |c: char| c.is_alphanumeric() || c == '_';
    haystack.match_indices(needle).any(|(at, _)| {
        let before = haystack[..at].chars().next_back();
        let after = haystack[at + needle.len()..].chars().next();
        !before.is_some_and(is_word) && !after.is_some_and(is_word)
    })
}

/// How backward links are read from the preliminary SQL.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BackwardStrategy {
    #[default]
    NameMatch,
    Ast,
}

/// Schema elements referenced by `sql1`. Never fails: an unparseable query
/// under [`BackwardStrategy::Ast`] falls back to name matching.
pub fn backward_link(sql1: &str, catalog: &DatabaseCatalog, strategy: BackwardStrategy) -> SchemaSet {
    match strategy {
        BackwardStrategy::NameMatch => extract_columns_name_match(sql1, catalog),
        BackwardStrategy::Ast => {
            extract_columns_ast(sql1, catalog).unwrap_or_else(|_| extract_columns_name_match(sql1, catalog))
        }
    }
}

/// Catalog, samples and descriptions cut down to a linked schema.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplifiedCatalog {
    pub catalog: DatabaseCatalog,
    pub samples: ValueSamples,
    pub descriptions: SchemaDescriptions,
}

/// Keeps tables touched by `linked` and, within them, the linked columns.
///
/// A table named without any of its columns keeps all of them. With
/// `retain_keys`, primary keys and foreign-key endpoints between kept
/// tables survive as well. Declaration order is preserved.
pub fn simplify_schema(
    catalog: &DatabaseCatalog,
    samples: &ValueSamples,
    descriptions: &SchemaDescriptions,
    linked: &SchemaSet,
    retain_keys: bool,
) -> Result<SimplifiedCatalog, LinkError> {
    let kept_tables: Vec<&TableInfo> = catalog.tables().iter().filter(|t| linked.contains_table(&t.name)).collect();
    if kept_tables.is_empty() {
        return Err(LinkError::EmptyLink);
    }
    let kept_names: HashSet<String> = kept_tables.iter().map(|t| canonical_ident(&t.name)).collect();
    let key_endpoints: HashSet<(String, String)> = if retain_keys {
        catalog
            .foreign_keys()
            .iter()
            .filter(|fk| kept_names.contains(&canonical_ident(&fk.from_table)) && kept_names.contains(&canonical_ident(&fk.to_table)))
            .flat_map(|fk| [(fk.from_table.clone(), fk.from_column.clone()), (fk.to_table.clone(), fk.to_column.clone())])
            .map(|(t, c)| (canonical_ident(&t), canonical_ident(&c)))
            .collect()
    } else {
        HashSet::new()
    };

    let tables: Vec<TableInfo> = kept_tables
        .into_iter()
        .map(|table| {
            let any_linked = table.columns.iter().any(|c| linked.contains_column(&table.name, &c.name));
            let columns = table
                .columns
                .iter()
                .filter(|c| {
                    !any_linked
                        || linked.contains_column(&table.name, &c.name)
                        || retain_keys
                            && (c.is_primary_key
                                || key_endpoints.contains(&(canonical_ident(&table.name), canonical_ident(&c.name))))
                })
                .cloned()
                .collect();
            TableInfo { name: table.name.clone(), columns }
        })
        .collect();

    let probe = DatabaseCatalog::new(catalog.db_id.clone(), tables.clone(), Vec::new()).map_err(|_| LinkError::EmptyLink)?;
    let foreign_keys: Vec<ForeignKey> = catalog
        .foreign_keys()
        .iter()
        .filter(|fk| probe.has_column(&fk.from_table, &fk.from_column) && probe.has_column(&fk.to_table, &fk.to_column))
        .cloned()
        .collect();
    let simplified = DatabaseCatalog::new(catalog.db_id.clone(), tables, foreign_keys)
        .map_err(|e: CatalogError| unreachable_catalog(e))?;
    Ok(SimplifiedCatalog {
        samples: samples.restrict_to(&simplified),
        descriptions: descriptions.restrict_to(&simplified),
        catalog: simplified,
    })
}

fn unreachable_catalog(e: CatalogError) -> LinkError {
    log::error!("simplified catalog failed validation: {e}");
    LinkError::EmptyLink
}

/// Columns referenced by a reference query. Stars contribute their table
/// but no columns.
pub fn gold_schema(gold_sql: &str, catalog: &DatabaseCatalog) -> Result<SchemaSet, ParseError> {
    extract_columns_ast_with(gold_sql, catalog, StarPolicy::TableOnly)
}

fn check_pairs(linked: &[SchemaSet], gold: &[SchemaSet]) -> Result<(), LinkError> {
    if linked.len() != gold.len() {
        return Err(LinkError::LengthMismatch { linked: linked.len(), gold: gold.len() });
    }
    if linked.is_empty() {
        return Err(LinkError::EmptyInput);
    }
    match gold.iter().position(|g| g.column_count() == 0) {
        Some(i) => Err(LinkError::EmptyGold(i)),
        None => Ok(()),
    }
}

/// Non-strict recall: share of gold columns present in the linked sets.
pub fn compute_nsr(linked: &[SchemaSet], gold: &[SchemaSet]) -> Result<f64, LinkError> {
    check_pairs(linked, gold)?;
    let hit: usize = linked.iter().zip(gold).map(|(l, g)| g.column_overlap(l)).sum();
    let total: usize = gold.iter().map(SchemaSet::column_count).sum();
    Ok(hit as f64 / total as f64)
}

/// Strict recall: share of questions whose linked set covers every gold column.
pub fn compute_srr(linked: &[SchemaSet], gold: &[SchemaSet]) -> Result<f64, LinkError> {
    check_pairs(linked, gold)?;
    let covered = linked.iter().zip(gold).filter(|(l, g)| l.covers_columns(g)).count();
    Ok(covered as f64 / gold.len() as f64)
}

/// Mean table and column counts per question.
pub fn schema_size_stats(linked: &[SchemaSet]) -> Result<(f64, f64), LinkError> {
    if linked.is_empty() {
        return Err(LinkError::EmptyInput);
    }
    let n = linked.len() as f64;
    let tables: usize = linked.iter().map(SchemaSet::table_count).sum();
    let columns: usize = linked.iter().map(SchemaSet::column_count).sum();
    Ok((tables as f64 / n, columns as f64 / n))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecallStats {
    pub nsr: f64,
    pub srr: f64,
    pub avg_tables: f64,
    pub avg_columns: f64,
    pub n_questions: usize,
}

pub fn recall_stats(linked: &[SchemaSet], gold: &[SchemaSet]) -> Result<RecallStats, LinkError> {
    let nsr = compute_nsr(linked, gold)?;
    let srr = compute_srr(linked, gold)?;
    let (avg_tables, avg_columns) = schema_size_stats(linked)?;
    debug_assert!(srr <= nsr + 1e-12 && nsr <= 1.0);
    Ok(RecallStats { nsr, srr, avg_tables, avg_columns, n_questions: linked.len() })
}
