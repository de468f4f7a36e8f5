use std::fmt::Write;

use super::{CatalogError, DatabaseCatalog, SchemaDescriptions, ValueSamples};
use crate::canonical_ident;
use crate::sql::SchemaSet;

pub const SCHEMA_HEADER: &str = "### Database schema";
pub const FOREIGN_KEY_HEADER: &str = "### Foreign keys";
pub const SAMPLES_HEADER: &str = "### Value samples";
pub const DESCRIPTIONS_HEADER: &str = "### Column descriptions";

/// Separately rendered prompt blocks; empty strings for absent sections.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PromptSections {
    /// Tables, columns and foreign keys.
    pub schema: String,
    pub samples: String,
    pub descriptions: String,
}

/// Renders schema, foreign keys, value samples and (optionally) column
/// descriptions as prompt text.
///
/// With a `subset`, only its tables and columns are listed and foreign keys
/// are kept only when both endpoint tables are retained.
pub fn render_schema_prompt(
    catalog: &DatabaseCatalog,
    samples: &ValueSamples,
    descriptions: Option<&SchemaDescriptions>,
    subset: Option<&SchemaSet>,
) -> Result<String, CatalogError> {
    let sections = render_sections(catalog, samples, descriptions, subset)?;
    let mut out = sections.schema;
    for block in [sections.samples, sections.descriptions] {
        if !block.is_empty() {
            out.push('\n');
            out.push_str(&block);
        }
    }
    Ok(out)
}

/// Same content as [`render_schema_prompt`], one string per section.
pub fn render_sections(
    catalog: &DatabaseCatalog,
    samples: &ValueSamples,
    descriptions: Option<&SchemaDescriptions>,
    subset: Option<&SchemaSet>,
) -> Result<PromptSections, CatalogError> {
    if let Some(subset) = subset {
        for t in subset.tables() {
            if !catalog.has_table(&t) {
                return Err(CatalogError::UnknownSchemaElement(t));
            }
        }
        for c in subset.columns() {
            if !catalog.has_column(&c.table, &c.column) {
                return Err(CatalogError::UnknownSchemaElement(c.to_string()));
            }
        }
    }
    let keep_table = |name: &str| subset.is_none_or(|s| s.contains_table(name));
    let keep_column = |table: &str, column: &str| subset.is_none_or(|s| s.contains_column(table, column));

    let mut out = String::new();
    out.push_str(SCHEMA_HEADER);
    out.push('\n');
    for table in catalog.tables().iter().filter(|t| keep_table(&t.name)) {
        let _ = writeln!(out, "# Table: {}", table.name);
        for col in table.columns.iter().filter(|c| keep_column(&table.name, &c.name)) {
            let ty = if col.declared_type.is_empty() { "ANY" } else { col.declared_type.as_str() };
            if col.is_primary_key {
                let _ = writeln!(out, "{}.{} ({ty}, primary key)", table.name, col.name);
            } else {
                let _ = writeln!(out, "{}.{} ({ty})", table.name, col.name);
            }
        }
    }

    let fks: Vec<_> = catalog
        .foreign_keys()
        .iter()
        .filter(|fk| keep_table(&fk.from_table) && keep_table(&fk.to_table))
        .collect();
    if !fks.is_empty() {
        out.push('\n');
        out.push_str(FOREIGN_KEY_HEADER);
        out.push('\n');
        for fk in fks {
            let _ = writeln!(out, "{}.{} = {}.{}", fk.from_table, fk.from_column, fk.to_table, fk.to_column);
        }
    }

    let mut sample_block = String::new();
    for table in catalog.tables().iter().filter(|t| keep_table(&t.name)) {
        let Some(sample) = samples.table(&table.name) else { continue };
        let positions: Vec<usize> = sample
            .columns
            .iter()
            .enumerate()
            .filter(|(_, c)| keep_column(&table.name, c))
            .map(|(i, _)| i)
            .collect();
        if positions.is_empty() {
            continue;
        }
        let header: Vec<&str> = positions.iter().map(|&i| sample.columns[i].as_str()).collect();
        let _ = writeln!(sample_block, "# {}: {}", table.name, header.join(" | "));
        if sample.rows.is_empty() {
            sample_block.push_str("(no rows)\n");
        }
        for row in &sample.rows {
            let cells: Vec<&str> = positions.iter().map(|&i| row[i].as_str()).collect();
            let _ = writeln!(sample_block, "{}", cells.join(" | "));
        }
    }
    let mut sections = PromptSections { schema: out, ..PromptSections::default() };
    if !sample_block.is_empty() {
        sections.samples = format!("{SAMPLES_HEADER}\n{sample_block}");
    }

    if let Some(descriptions) = descriptions {
        let mut block = String::new();
        for table in catalog.tables().iter().filter(|t| keep_table(&t.name)) {
            let table_text = descriptions.table(&table.name);
            if !table_text.is_empty() {
                let _ = writeln!(block, "# {}: {table_text}", table.name);
            }
            for col in table.columns.iter().filter(|c| keep_column(&table.name, &c.name)) {
                let text = descriptions.column(&table.name, &col.name);
                if !text.is_empty() {
                    let _ = writeln!(block, "# {}.{}: {text}", table.name, col.name);
                }
            }
        }
        if !block.is_empty() {
            sections.descriptions = format!("{DESCRIPTIONS_HEADER}\n{block}");
        }
    }
    Ok(sections)
}

/// Qualified `table.column` identifiers listed in the schema section of a
/// rendering, canonicalized.
pub fn mentioned_columns(rendered: &str) -> Vec<(String, String)> {
    let section = rendered
        .split("\n\n")
        .find(|s| s.starts_with(SCHEMA_HEADER))
        .unwrap_or("");
    section
        .lines()
        .filter(|l| !l.starts_with('#'))
        .filter_map(|l| {
            let ident = l.rsplit_once(" (").map(|(head, _)| head)?;
            let (t, c) = ident.split_once('.')?;
            Some((canonical_ident(t), canonical_ident(c)))
        })
        .collect()
}
