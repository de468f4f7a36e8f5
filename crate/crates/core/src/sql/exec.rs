use std::collections::BTreeSet;
use std::fmt::Write;
use std::path::Path;
use std::time::{Duration, Instant};

use rusqlite::types::ValueRef;
use rusqlite::{Connection, ErrorCode, OpenFlags};
use serde::{Deserialize, Serialize};

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);
pub const DEFAULT_MAX_ROWS: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExecStatus {
    Ok,
    Error,
    Timeout,
}

/// One result cell as returned by SQLite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Cell {
    Null,
    Int(i64),
    Real(f64),
    Text(String),
    Blob { blob: String },
}

/// Comparison key for a cell: numbers are scaled to micro-units and rounded,
/// so `1`, `1.0` and `1.0000001` coincide.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum CanonicalCell {
    Null,
    Number(i128),
    Text(String),
    Blob(String),
}

impl Cell {
    pub fn canonical(&self) -> CanonicalCell {
        match self {
            Cell::Null => CanonicalCell::Null,
            Cell::Int(i) => CanonicalCell::Number(*i as i128 * 1_000_000),
            Cell::Real(f) => CanonicalCell::Number((f * 1e6).round() as i128),
            Cell::Text(s) => CanonicalCell::Text(s.clone()),
            Cell::Blob { blob } => CanonicalCell::Blob(blob.clone()),
        }
    }

    /// Stable string rendering of the canonical value.
    pub fn canonical_string(&self) -> String {
        match self.canonical() {
            CanonicalCell::Null => "NULL".into(),
            CanonicalCell::Number(micros) => {
                let sign = if micros < 0 { "-" } else { "" };
                let abs = micros.unsigned_abs();
                let (whole, frac) = (abs / 1_000_000, abs % 1_000_000);
                if frac == 0 {
                    format!("{sign}{whole}")
                } else {
                    let frac = format!("{frac:06}");
                    format!("{sign}{whole}.{}", frac.trim_end_matches('0'))
                }
            }
            CanonicalCell::Text(s) => s,
            CanonicalCell::Blob(hex) => format!("x'{hex}'"),
        }
    }

    /// Python-literal rendering used in prompts.
    fn repr(&self, max_chars: usize) -> String {
        match self {
            Cell::Null => "None".into(),
            Cell::Int(i) => i.to_string(),
            Cell::Real(f) => {
                if f.fract() == 0.0 && f.is_finite() {
                    format!("{f:.1}")
                } else {
                    f.to_string()
                }
            }
            Cell::Text(s) => {
                let clipped = crate::catalog::truncate_cell(s.clone(), max_chars);
                format!("'{}'", clipped.replace('\\', "\\\\").replace('\'', "\\'"))
            }
            Cell::Blob { blob } => format!("b'{}'", crate::catalog::truncate_cell(blob.clone(), max_chars)),
        }
    }

    fn from_value(value: ValueRef<'_>) -> Cell {
        match value {
            ValueRef::Null => Cell::Null,
            ValueRef::Integer(i) => Cell::Int(i),
            ValueRef::Real(f) => Cell::Real(f),
            ValueRef::Text(t) => Cell::Text(String::from_utf8_lossy(t).into_owned()),
            ValueRef::Blob(b) => Cell::Blob { blob: hex::encode(b) },
        }
    }
}

/// Result of running one statement.
///
/// `row_count` is the true number of rows even when `rows` was capped
/// (`truncated`). `column_count` is the width of the returned rows, zero for
/// an empty result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionOutcome {
    pub status: ExecStatus,
    pub rows: Vec<Vec<Cell>>,
    pub row_count: usize,
    pub column_count: usize,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub truncated: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error_message: Option<String>,
    #[serde(skip)]
    pub elapsed: Duration,
}

impl ExecutionOutcome {
    pub fn failed(status: ExecStatus, message: impl Into<String>, elapsed: Duration) -> Self {
        debug_assert!(status != ExecStatus::Ok);
        Self {
            status,
            rows: Vec::new(),
            row_count: 0,
            column_count: 0,
            truncated: false,
            error_message: Some(message.into()),
            elapsed,
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == ExecStatus::Ok
    }

    pub fn row_set(&self) -> BTreeSet<Vec<CanonicalCell>> {
        self.rows.iter().map(|r| r.iter().map(Cell::canonical).collect()).collect()
    }

    /// Counts plus a capped preview, in the layout shown to the model.
    pub fn render_preview(&self, max_rows: usize, max_cell_chars: usize) -> String {
        let mut out = String::new();
        match self.status {
            ExecStatus::Ok => {
                let _ = writeln!(out, "[Row_count, Column_count] = [{}, {}]", self.row_count, self.column_count);
                let shown: Vec<String> = self
                    .rows
                    .iter()
                    .take(max_rows)
                    .map(|row| {
                        let cells: Vec<String> = row.iter().map(|c| c.repr(max_cell_chars)).collect();
                        if cells.len() == 1 {
                            format!("({},)", cells[0])
                        } else {
                            format!("({})", cells.join(", "))
                        }
                    })
                    .collect();
                let more = if self.row_count > shown.len() { ", ..." } else { "" };
                let _ = write!(out, "[Result] = [{}{more}]", shown.join(", "));
            }
            ExecStatus::Error => {
                let _ = write!(out, "[Error] = {}", self.error_message.as_deref().unwrap_or("unknown error"));
            }
            ExecStatus::Timeout => {
                let _ = write!(out, "[Error] = {}", self.error_message.as_deref().unwrap_or("timeout"));
            }
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Risk {
    Low,
    High,
}

/// Failed, timed-out and empty executions are high risk.
pub fn classify_risk(outcome: &ExecutionOutcome) -> Risk {
    match outcome.status {
        ExecStatus::Ok if outcome.row_count > 0 => Risk::Low,
        _ => Risk::High,
    }
}

/// Set-of-rows equality; row order is ignored, column order is not.
pub fn results_match(pred: &ExecutionOutcome, gold: &ExecutionOutcome) -> bool {
    pred.is_ok() && gold.is_ok() && pred.row_set() == gold.row_set()
}

#[derive(Debug, Clone, Copy)]
pub struct ExecOptions {
    pub timeout: Duration,
    pub max_rows: usize,
}

impl Default for ExecOptions {
    fn default() -> Self {
        Self { timeout: DEFAULT_TIMEOUT, max_rows: DEFAULT_MAX_ROWS }
    }
}

fn leading_keyword(sql: &str) -> String {
    let mut rest = sql.trim_start();
    loop {
        if let Some(r) = rest.strip_prefix("--") {
            rest = r.split_once('\n').map(|(_, tail)| tail).unwrap_or("").trim_start();
        } else if let Some(r) = rest.strip_prefix("/*") {
            rest = r.split_once("*/").map(|(_, tail)| tail).unwrap_or("").trim_start();
        } else if let Some(r) = rest.strip_prefix('(') {
            rest = r.trim_start();
        } else {
            break;
        }
    }
    rest.chars().take_while(|c| c.is_ascii_alphabetic()).collect::<String>().to_ascii_uppercase()
}

/// Runs a read-only query, capturing rows, errors and wall-clock time.
pub fn execute_sql(db_path: &Path, sql: &str, timeout: Duration) -> ExecutionOutcome {
    execute_sql_with(db_path, sql, ExecOptions { timeout, ..ExecOptions::default() })
}

pub fn execute_sql_with(db_path: &Path, sql: &str, options: ExecOptions) -> ExecutionOutcome {
    let start = Instant::now();
    let statement = sql.trim().trim_end_matches(';').trim_end();
    let keyword = leading_keyword(statement);
    if keyword != "SELECT" && keyword != "WITH" {
        return ExecutionOutcome::failed(
            ExecStatus::Error,
            format!("only SELECT/WITH statements may be executed, got {:?}", keyword),
            start.elapsed(),
        );
    }
    if !db_path.is_file() {
        return ExecutionOutcome::failed(
            ExecStatus::Error,
            format!("database not found: {}", db_path.display()),
            start.elapsed(),
        );
    }
    let conn = match Connection::open_with_flags(
        db_path,
        OpenFlags::SQLITE_OPEN_READ_ONLY | OpenFlags::SQLITE_OPEN_NO_MUTEX,
    ) {
        Ok(c) => c,
        Err(e) => return ExecutionOutcome::failed(ExecStatus::Error, e.to_string(), start.elapsed()),
    };
    let deadline = start + options.timeout;
    if let Err(e) = conn.progress_handler(1_000, Some(move || Instant::now() >= deadline)) {
        return ExecutionOutcome::failed(ExecStatus::Error, e.to_string(), start.elapsed());
    }

    let result = run(&conn, statement, options.max_rows, deadline);
    let elapsed = start.elapsed();
    let _ = conn.progress_handler(1_000, None::<fn() -> bool>);
    match result {
        Ok((rows, row_count, truncated)) => ExecutionOutcome {
            status: ExecStatus::Ok,
            column_count: rows.first().map_or(0, Vec::len),
            rows,
            row_count,
            truncated,
            error_message: None,
            elapsed,
        },
        Err(RunError::Timeout) => ExecutionOutcome::failed(
            ExecStatus::Timeout,
            format!("execution exceeded {:.1}s", options.timeout.as_secs_f64()),
            elapsed,
        ),
        Err(RunError::Sqlite(e)) => {
            let interrupted = matches!(&e, rusqlite::Error::SqliteFailure(f, _) if f.code == ErrorCode::OperationInterrupted);
            if interrupted {
                ExecutionOutcome::failed(
                    ExecStatus::Timeout,
                    format!("execution exceeded {:.1}s", options.timeout.as_secs_f64()),
                    elapsed,
                )
            } else {
                ExecutionOutcome::failed(ExecStatus::Error, e.to_string(), elapsed)
            }
        }
    }
}

enum RunError {
    Timeout,
    Sqlite(rusqlite::Error),
}

impl From<rusqlite::Error> for RunError {
    fn from(e: rusqlite::Error) -> Self {
        RunError::Sqlite(e)
    }
}

type RunResult = Result<(Vec<Vec<Cell>>, usize, bool), RunError>;

fn run(conn: &Connection, sql: &str, max_rows: usize, deadline: Instant) -> RunResult {
    let mut stmt = conn.prepare(sql)?;
    if !stmt.readonly() {
        return Err(RunError::Sqlite(rusqlite::Error::InvalidQuery));
    }
    let width = stmt.column_count();
    let mut rows = Vec::new();
    let mut count = 0usize;
    let mut cursor = stmt.query([])?;
    while let Some(row) = cursor.next()? {
        count += 1;
        if rows.len() < max_rows {
            let cells = (0..width).map(|i| row.get_ref(i).map(Cell::from_value)).collect::<Result<Vec<_>, _>>()?;
            rows.push(cells);
        }
        if count.is_multiple_of(256) && Instant::now() >= deadline {
            return Err(RunError::Timeout);
        }
    }
    let truncated = count > rows.len();
    Ok((rows, count, truncated))
}
