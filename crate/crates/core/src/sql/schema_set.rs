use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::canonical_ident;

/// A canonical `table.column` reference.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ColumnRef {
    pub table: String,
    pub column: String,
}

impl ColumnRef {
    pub fn new(table: &str, column: &str) -> Self {
        Self { table: canonical_ident(table), column: canonical_ident(column) }
    }
}

impl fmt::Display for ColumnRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.table, self.column)
    }
}

/// Set of tables and columns, all names canonical.
///
/// The table set is the projection of the column set plus any tables added
/// on their own.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SchemaSet {
    columns: BTreeSet<ColumnRef>,
    explicit_tables: BTreeSet<String>,
}

impl SchemaSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_table(&mut self, table: &str) -> bool {
        self.explicit_tables.insert(canonical_ident(table))
    }

    pub fn add_column(&mut self, table: &str, column: &str) -> bool {
        self.columns.insert(ColumnRef::new(table, column))
    }

    pub fn columns(&self) -> impl Iterator<Item = &ColumnRef> {
        self.columns.iter()
    }

    pub fn tables(&self) -> BTreeSet<String> {
        self.explicit_tables
            .iter()
            .cloned()
            .chain(self.columns.iter().map(|c| c.table.clone()))
            .collect()
    }

    pub fn contains_table(&self, table: &str) -> bool {
        let key = canonical_ident(table);
        self.explicit_tables.contains(&key) || self.columns.iter().any(|c| c.table == key)
    }

    pub fn contains_column(&self, table: &str, column: &str) -> bool {
        self.columns.contains(&ColumnRef::new(table, column))
    }

    pub fn column_count(&self) -> usize {
        self.columns.len()
    }

    pub fn table_count(&self) -> usize {
        self.tables().len()
    }

    pub fn is_empty(&self) -> bool {
        self.columns.is_empty() && self.explicit_tables.is_empty()
    }

    pub fn union(&self, other: &SchemaSet) -> SchemaSet {
        SchemaSet {
            columns: self.columns.union(&other.columns).cloned().collect(),
            explicit_tables: self.explicit_tables.union(&other.explicit_tables).cloned().collect(),
        }
    }

    pub fn extend(&mut self, other: &SchemaSet) {
        self.columns.extend(other.columns.iter().cloned());
        self.explicit_tables.extend(other.explicit_tables.iter().cloned());
    }

    /// Number of columns shared with `other`.
    pub fn column_overlap(&self, other: &SchemaSet) -> usize {
        self.columns.intersection(&other.columns).count()
    }

    /// True when every column of `other` is in `self`.
    pub fn covers_columns(&self, other: &SchemaSet) -> bool {
        other.columns.is_subset(&self.columns)
    }

    /// Column and table subset check.
    pub fn is_subset(&self, other: &SchemaSet) -> bool {
        self.columns.is_subset(&other.columns) && self.tables().is_subset(&other.tables())
    }
}

impl<'a> FromIterator<&'a ColumnRef> for SchemaSet {
    fn from_iter<I: IntoIterator<Item = &'a ColumnRef>>(iter: I) -> Self {
        SchemaSet { columns: iter.into_iter().cloned().collect(), explicit_tables: BTreeSet::new() }
    }
}

#[derive(Serialize, Deserialize)]
struct SchemaSetRepr {
    tables: Vec<String>,
    columns: Vec<String>,
}

impl Serialize for SchemaSet {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        SchemaSetRepr {
            tables: self.tables().into_iter().collect(),
            columns: self.columns.iter().map(ToString::to_string).collect(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SchemaSet {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = SchemaSetRepr::deserialize(deserializer)?;
        let mut set = SchemaSet::new();
        for t in &repr.tables {
            set.add_table(t);
        }
        for c in &repr.columns {
            let (t, col) = c
                .split_once('.')
                .ok_or_else(|| serde::de::Error::custom(format!("expected table.column, got {c}")))?;
            set.add_column(t, col);
        }
        Ok(set)
    }
}
