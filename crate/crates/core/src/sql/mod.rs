//! SQL handling: schema sets, identifier extraction and sandboxed execution.

mod exec;
mod extract;
pub mod lexer;
mod schema_set;

pub use exec::{
    classify_risk, execute_sql, execute_sql_with, results_match, CanonicalCell, Cell, ExecOptions,
    ExecStatus, ExecutionOutcome, Risk, DEFAULT_MAX_ROWS, DEFAULT_TIMEOUT,
};
pub use extract::{
    extract_columns_ast, extract_columns_ast_with, extract_columns_name_match,
    extract_columns_name_match_bytes, ParseError, StarPolicy,
};
pub use schema_set::{ColumnRef, SchemaSet};
