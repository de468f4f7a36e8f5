use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rusqlite::types::ValueRef;
use serde::Serialize;

use super::{open_read_only, CatalogError, DatabaseCatalog};
use crate::canonical_ident;

/// Appended to any sampled cell cut at `max_cell_len` characters.
pub const TRUNCATION_MARKER: &str = "...";

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableSample {
    pub table: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

/// A few rows per table, rendered as truncated strings.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ValueSamples {
    pub sample_seed: u64,
    pub rows_per_table: usize,
    pub max_cell_len: usize,
    pub tables: Vec<TableSample>,
}

impl ValueSamples {
    pub fn empty() -> Self {
        Self { sample_seed: 0, rows_per_table: 0, max_cell_len: 0, tables: Vec::new() }
    }

    pub fn table(&self, name: &str) -> Option<&TableSample> {
        let key = canonical_ident(name);
        self.tables.iter().find(|t| canonical_ident(&t.table) == key)
    }

    /// Projects the samples onto the tables and columns of `catalog`.
    pub fn restrict_to(&self, catalog: &DatabaseCatalog) -> Self {
        let tables = self
            .tables
            .iter()
            .filter_map(|sample| {
                let info = catalog.table(&sample.table)?;
                let keep: Vec<usize> = (0..sample.columns.len())
                    .filter(|&i| info.column(&sample.columns[i]).is_some())
                    .collect();
                Some(TableSample {
                    table: sample.table.clone(),
                    columns: keep.iter().map(|&i| sample.columns[i].clone()).collect(),
                    rows: sample.rows.iter().map(|r| keep.iter().filter_map(|&i| r.get(i).cloned()).collect()).collect(),
                })
            })
            .collect();
        Self { tables, ..*self }
    }
}

// FNV-1a; only used to decorrelate per-table sampler streams.
fn name_hash(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn render_cell(value: ValueRef<'_>) -> String {
    match value {
        ValueRef::Null => "NULL".to_string(),
        ValueRef::Integer(i) => i.to_string(),
        ValueRef::Real(f) => f.to_string(),
        ValueRef::Text(t) => String::from_utf8_lossy(t).into_owned(),
        ValueRef::Blob(b) => format!("<blob {} bytes>", b.len()),
    }
}

pub(crate) fn truncate_cell(cell: String, max_len: usize) -> String {
    match cell.char_indices().nth(max_len) {
        Some((cut, _)) => {
            let mut out = cell[..cut].to_string();
            out.push_str(TRUNCATION_MARKER);
            out
        }
        None => cell,
    }
}

fn quote_ident(name: &str) -> String {
    format!("\"{}\"", name.replace('"', "\"\""))
}

/// Picks up to `rows_per_table` rows from every table with a seeded sampler.
///
/// Rows are addressed by scan offset rather than `ORDER BY RANDOM()`, so the
/// same seed over the same file always yields the same rows.
pub fn sample_values(
    catalog: &DatabaseCatalog,
    db_path: &Path,
    rows_per_table: usize,
    seed: u64,
    max_cell_len: usize,
) -> Result<ValueSamples, CatalogError> {
    assert!(rows_per_table >= 1, "rows_per_table must be at least 1");
    let conn = open_read_only(db_path)?;
    let mut tables = Vec::with_capacity(catalog.tables().len());
    for table in catalog.tables() {
        let failure = |source| CatalogError::QueryFailure { table: table.name.clone(), source };
        let quoted = quote_ident(&table.name);
        let total: i64 = conn
            .query_row(&format!("SELECT COUNT(*) FROM {quoted}"), [], |r| r.get(0))
            .map_err(failure)?;
        let total = total.max(0) as usize;
        let take = rows_per_table.min(total);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ name_hash(&canonical_ident(&table.name)));
        let mut offsets = rand::seq::index::sample(&mut rng, total, take).into_vec();
        offsets.sort_unstable();

        let column_list = table.columns.iter().map(|c| quote_ident(&c.name)).collect::<Vec<_>>().join(", ");
        let mut stmt = conn
            .prepare(&format!("SELECT {column_list} FROM {quoted} LIMIT 1 OFFSET ?1"))
            .map_err(failure)?;
        let width = table.columns.len();
        let mut rows = Vec::with_capacity(take);
        for offset in offsets {
            let row = stmt
                .query_row([offset as i64], |r| {
                    (0..width)
                        .map(|i| Ok(truncate_cell(render_cell(r.get_ref(i)?), max_cell_len)))
                        .collect::<Result<Vec<_>, rusqlite::Error>>()
                })
                .map_err(failure)?;
            rows.push(row);
        }
        tables.push(TableSample {
            table: table.name.clone(),
            columns: table.columns.iter().map(|c| c.name.clone()).collect(),
            rows,
        });
    }
    Ok(ValueSamples { sample_seed: seed, rows_per_table, max_cell_len, tables })
}
