//! Relational catalog of a single SQLite database.
//!
//! A [`DatabaseCatalog`] is built once per database by [`introspect_database`]
//! and shared read-only by everything downstream. Names keep their declared
//! casing for rendering; lookups go through [`canonical_ident`].

mod descriptions;
mod render;
mod samples;

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rusqlite::{Connection, OpenFlags};
use serde::Serialize;

use crate::canonical_ident;

pub use descriptions::{load_descriptions, DescriptionSource, GeneratedDescriptions, SchemaDescriptions};
pub use render::{mentioned_columns, render_schema_prompt, render_sections, PromptSections};
pub use samples::{sample_values, TableSample, ValueSamples, TRUNCATION_MARKER};
pub(crate) use samples::truncate_cell;

#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("database file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("not a SQLite database: {path}: {reason}")]
    NotADatabase { path: PathBuf, reason: String },
    #[error("database {0} has no user tables")]
    EmptySchema(String),
    #[error("query failed on table {table}: {source}")]
    QueryFailure {
        table: String,
        #[source]
        source: rusqlite::Error,
    },
    #[error("malformed description file {path}: {reason}")]
    MalformedDescriptionFile { path: PathBuf, reason: String },
    #[error("unknown schema element: {0}")]
    UnknownSchemaElement(String),
    #[error("invalid catalog: {0}")]
    Invalid(String),
    #[error(transparent)]
    Sqlite(#[from] rusqlite::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct ColumnInfo {
    pub name: String,
    pub declared_type: String,
    pub is_primary_key: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TableInfo {
    pub name: String,
    pub columns: Vec<ColumnInfo>,
}

impl TableInfo {
    pub fn column(&self, name: &str) -> Option<&ColumnInfo> {
        let key = canonical_ident(name);
        self.columns.iter().find(|c| canonical_ident(&c.name) == key)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
pub struct ForeignKey {
    pub from_table: String,
    pub from_column: String,
    pub to_table: String,
    pub to_column: String,
}

/// Tables, columns and foreign keys of one database, in declaration order.
#[derive(Debug, Clone, Serialize)]
pub struct DatabaseCatalog {
    pub db_id: String,
    tables: Vec<TableInfo>,
    foreign_keys: Vec<ForeignKey>,
    #[serde(skip)]
    table_index: HashMap<String, usize>,
    #[serde(skip)]
    column_owners: HashMap<String, Vec<usize>>,
}

impl PartialEq for DatabaseCatalog {
    fn eq(&self, other: &Self) -> bool {
        self.db_id == other.db_id
            && self.tables == other.tables
            && self.foreign_keys == other.foreign_keys
    }
}

impl Eq for DatabaseCatalog {}

impl DatabaseCatalog {
    /// Validates name uniqueness and foreign-key endpoints.
    pub fn new(
        db_id: impl Into<String>,
        tables: Vec<TableInfo>,
        foreign_keys: Vec<ForeignKey>,
    ) -> Result<Self, CatalogError> {
        let db_id = db_id.into();
        if tables.is_empty() {
            return Err(CatalogError::EmptySchema(db_id));
        }
        let mut table_index = HashMap::new();
        let mut column_owners: HashMap<String, Vec<usize>> = HashMap::new();
        for (idx, table) in tables.iter().enumerate() {
            if table.columns.is_empty() {
                return Err(CatalogError::Invalid(format!("table {} has no columns", table.name)));
            }
            if table_index.insert(canonical_ident(&table.name), idx).is_some() {
                return Err(CatalogError::Invalid(format!("duplicate table {}", table.name)));
            }
            let mut seen = std::collections::HashSet::new();
            for col in &table.columns {
                let key = canonical_ident(&col.name);
                if !seen.insert(key.clone()) {
                    return Err(CatalogError::Invalid(format!(
                        "duplicate column {}.{}",
                        table.name, col.name
                    )));
                }
                column_owners.entry(key).or_default().push(idx);
            }
        }
        let catalog = Self { db_id, tables, foreign_keys: Vec::new(), table_index, column_owners };
        for fk in &foreign_keys {
            if !catalog.has_column(&fk.from_table, &fk.from_column)
                || !catalog.has_column(&fk.to_table, &fk.to_column)
            {
                return Err(CatalogError::Invalid(format!(
                    "foreign key {}.{} -> {}.{} names a missing column",
                    fk.from_table, fk.from_column, fk.to_table, fk.to_column
                )));
            }
        }
        Ok(Self { foreign_keys, ..catalog })
    }

    pub fn tables(&self) -> &[TableInfo] {
        &self.tables
    }

    pub fn foreign_keys(&self) -> &[ForeignKey] {
        &self.foreign_keys
    }

    pub fn table(&self, name: &str) -> Option<&TableInfo> {
        self.table_index.get(&canonical_ident(name)).map(|&i| &self.tables[i])
    }

    pub fn has_table(&self, name: &str) -> bool {
        self.table_index.contains_key(&canonical_ident(name))
    }

    pub fn has_column(&self, table: &str, column: &str) -> bool {
        self.table(table).is_some_and(|t| t.column(column).is_some())
    }

    /// Tables declaring a column with this name, in declaration order.
    pub fn tables_with_column(&self, column: &str) -> impl Iterator<Item = &TableInfo> {
        self.column_owners
            .get(&canonical_ident(column))
            .into_iter()
            .flatten()
            .map(|&i| &self.tables[i])
    }

    pub fn column_count(&self) -> usize {
        self.tables.iter().map(|t| t.columns.len()).sum()
    }

    /// Every column of the catalog as a schema set.
    pub fn full_schema_set(&self) -> crate::SchemaSet {
        let mut set = crate::SchemaSet::new();
        for t in &self.tables {
            set.add_table(&t.name);
            for c in &t.columns {
                set.add_column(&t.name, &c.name);
            }
        }
        set
    }
}

fn open_read_only(db_path: &Path) -> Result<Connection, CatalogError> {
    if !db_path.is_file() {
        return Err(CatalogError::FileNotFound(db_path.to_path_buf()));
    }
    Connection::open_with_flags(
        db_path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    )
    .map_err(|e| CatalogError::NotADatabase { path: db_path.to_path_buf(), reason: e.to_string() })
}

/// Reads tables, columns and foreign keys from a SQLite file.
///
/// The database id is the file stem. Foreign keys whose target does not exist
/// are dropped with a warning, since benchmark databases ship a few of those.
pub fn introspect_database(db_path: &Path) -> Result<DatabaseCatalog, CatalogError> {
    let conn = open_read_only(db_path)?;
    let not_a_db = |e: rusqlite::Error| CatalogError::NotADatabase {
        path: db_path.to_path_buf(),
        reason: e.to_string(),
    };
    let db_id = db_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();

    let mut stmt = conn
        .prepare(
            "SELECT name FROM sqlite_master WHERE type = 'table' \
             AND name NOT LIKE 'sqlite\\_%' ESCAPE '\\' ORDER BY rowid",
        )
        .map_err(not_a_db)?;
    let names: Vec<String> = stmt
        .query_map([], |row| row.get(0))
        .map_err(not_a_db)?
        .collect::<Result<_, _>>()
        .map_err(not_a_db)?;
    if names.is_empty() {
        return Err(CatalogError::EmptySchema(db_id));
    }

    let mut tables = Vec::with_capacity(names.len());
    for name in &names {
        let query_failure = |source| CatalogError::QueryFailure { table: name.clone(), source };
        let mut info = conn
            .prepare("SELECT name, type, pk FROM pragma_table_info(?1) ORDER BY cid")
            .map_err(query_failure)?;
        let columns = info
            .query_map([name], |row| {
                Ok(ColumnInfo {
                    name: row.get(0)?,
                    declared_type: row.get::<_, Option<String>>(1)?.unwrap_or_default(),
                    is_primary_key: row.get::<_, i64>(2)? > 0,
                })
            })
            .map_err(query_failure)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(query_failure)?;
        tables.push(TableInfo { name: name.clone(), columns });
    }

    let mut foreign_keys = Vec::new();
    for table in &tables {
        let query_failure =
            |source| CatalogError::QueryFailure { table: table.name.clone(), source };
        let mut fk_stmt = conn
            .prepare(
                "SELECT \"table\", \"from\", \"to\", seq FROM pragma_foreign_key_list(?1) \
                 ORDER BY id, seq",
            )
            .map_err(query_failure)?;
        let rows = fk_stmt
            .query_map([&table.name], |row| {
                Ok((
                    row.get::<_, String>(0)?,
                    row.get::<_, String>(1)?,
                    row.get::<_, Option<String>>(2)?,
                    row.get::<_, i64>(3)?,
                ))
            })
            .map_err(query_failure)?
            .collect::<Result<Vec<_>, _>>()
            .map_err(query_failure)?;
        for (to_table, from_column, to_column, seq) in rows {
            let Some(target) = tables.iter().find(|t| canonical_ident(&t.name) == canonical_ident(&to_table))
            else {
                log::warn!("{db_id}: dropping foreign key {}.{from_column} -> missing table {to_table}", table.name);
                continue;
            };
            // A NULL target column references the target's primary key.
            let to_col = match to_column {
                Some(c) => target.column(&c).map(|c| c.name.clone()),
                None => target
                    .columns
                    .iter()
                    .filter(|c| c.is_primary_key)
                    .nth(seq as usize)
                    .map(|c| c.name.clone()),
            };
            let (Some(from_col), Some(to_col)) = (table.column(&from_column), to_col) else {
                log::warn!("{db_id}: dropping foreign key on {}.{from_column}: unresolved column", table.name);
                continue;
            };
            let fk = ForeignKey {
                from_table: table.name.clone(),
                from_column: from_col.name.clone(),
                to_table: target.name.clone(),
                to_column: to_col,
            };
            if !foreign_keys.contains(&fk) {
                foreign_keys.push(fk);
            }
        }
    }

    DatabaseCatalog::new(db_id, tables, foreign_keys)
}

/// Benchmark layout: `<root>/<db_id>/<db_id>.sqlite`.
pub fn database_path(db_root: &Path, db_id: &str) -> PathBuf {
    db_root.join(db_id).join(format!("{db_id}.sqlite"))
}
