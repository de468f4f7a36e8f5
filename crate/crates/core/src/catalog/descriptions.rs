use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CatalogError, DatabaseCatalog};
use crate::canonical_ident;

/// Pre-generated descriptions, e.g. produced by the `describe` command.
///
/// Column keys are `table.column`.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedDescriptions {
    #[serde(default)]
    pub tables: BTreeMap<String, String>,
    #[serde(default)]
    pub columns: BTreeMap<String, String>,
}

#[derive(Debug, Clone)]
pub enum DescriptionSource {
    /// A `database_description` directory holding one CSV per table.
    Directory(PathBuf),
    Generated(GeneratedDescriptions),
    None,
}

/// Column and table descriptions keyed by canonical names.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct SchemaDescriptions {
    columns: BTreeMap<(String, String), String>,
    tables: BTreeMap<String, String>,
    #[serde(skip)]
    pub warnings: Vec<String>,
}

impl SchemaDescriptions {
    /// Empty description for every column of the catalog.
    pub fn empty_for(catalog: &DatabaseCatalog) -> Self {
        let mut out = Self::default();
        for t in catalog.tables() {
            let tk = canonical_ident(&t.name);
            out.tables.insert(tk.clone(), String::new());
            for c in &t.columns {
                out.columns.insert((tk.clone(), canonical_ident(&c.name)), String::new());
            }
        }
        out
    }

    pub fn column(&self, table: &str, column: &str) -> &str {
        self.columns
            .get(&(canonical_ident(table), canonical_ident(column)))
            .map(String::as_str)
            .unwrap_or("")
    }

    pub fn table(&self, table: &str) -> &str {
        self.tables.get(&canonical_ident(table)).map(String::as_str).unwrap_or("")
    }

    pub fn is_blank(&self) -> bool {
        self.columns.values().all(String::is_empty) && self.tables.values().all(String::is_empty)
    }

    /// Fills entries that are still empty from `fallback`.
    pub fn fill_missing(&mut self, fallback: &SchemaDescriptions) {
        for (key, text) in self.columns.iter_mut() {
            if text.is_empty() {
                if let Some(other) = fallback.columns.get(key) {
                    text.clone_from(other);
                }
            }
        }
        for (key, text) in self.tables.iter_mut() {
            if text.is_empty() {
                if let Some(other) = fallback.tables.get(key) {
                    text.clone_from(other);
                }
            }
        }
    }

    /// Keeps only entries for tables and columns present in `catalog`.
    pub fn restrict_to(&self, catalog: &DatabaseCatalog) -> Self {
        let columns = self
            .columns
            .iter()
            .filter(|((t, c), _)| catalog.has_column(t, c))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let tables = self
            .tables
            .iter()
            .filter(|(t, _)| catalog.has_table(t))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        Self { columns, tables, warnings: Vec::new() }
    }

    fn set_column(&mut self, table: &str, column: &str, text: String) {
        self.columns.insert((canonical_ident(table), canonical_ident(column)), text);
    }
}

fn clean(text: &str) -> String {
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn read_table_csv(path: &Path) -> Result<Vec<(String, String)>, CatalogError> {
    let malformed = |reason: String| CatalogError::MalformedDescriptionFile { path: path.to_path_buf(), reason };
    let bytes = std::fs::read(path).map_err(|e| malformed(e.to_string()))?;
    // Some benchmark files are Latin-1; lossy decoding keeps them usable.
    let text = String::from_utf8_lossy(&bytes);
    let text = text.trim_start_matches('\u{feff}');
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = reader.headers().map_err(|e| malformed(e.to_string()))?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let name_idx = find("original_column_name").ok_or_else(|| malformed("missing original_column_name header".into()))?;
    let desc_idx = find("column_description");
    let value_idx = find("value_description");

    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| malformed(e.to_string()))?;
        let Some(name) = record.get(name_idx).map(str::trim).filter(|n| !n.is_empty()) else {
            continue;
        };
        let desc = desc_idx.and_then(|i| record.get(i)).map(clean).unwrap_or_default();
        let values = value_idx.and_then(|i| record.get(i)).map(clean).unwrap_or_default();
        let text = match (desc.is_empty(), values.is_empty()) {
            (_, true) => desc,
            (true, false) => format!("Value description: {values}"),
            (false, false) => format!("{desc}. Value description: {values}"),
        };
        out.push((name.to_string(), text));
    }
    Ok(out)
}

/// Loads per-column descriptions. Every catalog column gets an entry, empty
/// when the source has nothing for it. A missing directory is not an error.
pub fn load_descriptions(
    catalog: &DatabaseCatalog,
    source: &DescriptionSource,
) -> Result<SchemaDescriptions, CatalogError> {
    let mut out = SchemaDescriptions::empty_for(catalog);
    match source {
        DescriptionSource::None => {}
        DescriptionSource::Directory(dir) => {
            let Ok(entries) = std::fs::read_dir(dir) else {
                return Ok(out);
            };
            let mut files: Vec<PathBuf> = entries
                .filter_map(Result::ok)
                .map(|e| e.path())
                .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("csv")))
                .collect();
            files.sort();
            for file in files {
                let stem = file.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
                let Some(table) = catalog.table(&stem) else {
                    let msg = format!("{}: no table named {stem}", file.display());
                    log::warn!("{msg}");
                    out.warnings.push(msg);
                    continue;
                };
                for (column, text) in read_table_csv(&file)? {
                    if table.column(&column).is_some() {
                        out.set_column(&table.name, &column, text);
                    } else {
                        let msg = format!("{}: unknown column {}.{column}", file.display(), table.name);
                        log::warn!("{msg}");
                        out.warnings.push(msg);
                    }
                }
            }
        }
        DescriptionSource::Generated(map) => {
            for (table, text) in &map.tables {
                if catalog.has_table(table) {
                    out.tables.insert(canonical_ident(table), clean(text));
                } else {
                    out.warnings.push(format!("generated descriptions: unknown table {table}"));
                }
            }
            for (key, text) in &map.columns {
                let resolved = key
                    .match_indices('.')
                    .map(|(i, _)| (&key[..i], &key[i + 1..]))
                    .find(|(t, c)| catalog.has_column(t, c));
                match resolved {
                    Some((t, c)) => out.set_column(t, c, clean(text)),
                    None => out.warnings.push(format!("generated descriptions: unknown column {key}")),
                }
            }
            for w in &out.warnings {
                log::warn!("{w}");
            }
        }
    }
    Ok(out)
}
