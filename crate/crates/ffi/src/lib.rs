//! C ABI over the linksql catalog, extraction, execution and recall metrics.
//!
//! Every fallible call returns a [`LinksqlStatus`]; on failure the message is
//! available from [`linksql_last_error`] on the same thread. Strings returned
//! through out-pointers are owned by the caller and released with
//! [`linksql_string_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr, CString};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::PathBuf;
use std::ptr;
use std::time::Duration;

use linksql::catalog::{introspect_database, render_schema_prompt, sample_values, CatalogError};
use linksql::linking::{compute_nsr, compute_srr, LinkError};
use linksql::sql::{execute_sql, extract_columns_ast, extract_columns_name_match};
use linksql::{DatabaseCatalog, SchemaSet, ValueSamples};

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinksqlStatus {
    Ok = 0,
    NullArgument = 1,
    InvalidUtf8 = 2,
    InvalidArgument = 3,
    Catalog = 4,
    Parse = 5,
    Metric = 6,
    Panic = 7,
}

#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LinksqlExtractor {
    NameMatch = 0,
    Ast = 1,
}

/// An introspected SQLite database with its value samples.
pub struct LinksqlCatalog {
    path: PathBuf,
    catalog: DatabaseCatalog,
    samples: ValueSamples,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

struct Failure(LinksqlStatus, String);

impl From<CatalogError> for Failure {
    fn from(e: CatalogError) -> Self {
        Failure(LinksqlStatus::Catalog, e.to_string())
    }
}

impl From<LinkError> for Failure {
    fn from(e: LinkError) -> Self {
        Failure(LinksqlStatus::Metric, e.to_string())
    }
}

fn set_last_error(message: String) {
    let c = CString::new(message.replace('\0', " ")).unwrap_or_default();
    LAST_ERROR.with(|slot| *slot.borrow_mut() = Some(c));
}

fn guard(f: impl FnOnce() -> Result<(), Failure>) -> LinksqlStatus {
    LAST_ERROR.with(|slot| *slot.borrow_mut() = None);
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => LinksqlStatus::Ok,
        Ok(Err(Failure(status, message))) => {
            set_last_error(message);
            status
        }
        Err(_) => {
            set_last_error("internal panic".into());
            LinksqlStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, name: &str) -> Result<&'a str, Failure> {
    if p.is_null() {
        return Err(Failure(LinksqlStatus::NullArgument, format!("{name} is null")));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Failure(LinksqlStatus::InvalidUtf8, format!("{name} is not UTF-8")))
}

unsafe fn handle<'a>(p: *const LinksqlCatalog) -> Result<&'a LinksqlCatalog, Failure> {
    p.as_ref().ok_or_else(|| Failure(LinksqlStatus::NullArgument, "catalog is null".into()))
}

unsafe fn write_out<T>(out: *mut T, value: T) -> Result<(), Failure> {
    if out.is_null() {
        return Err(Failure(LinksqlStatus::NullArgument, "output pointer is null".into()));
    }
    out.write(value);
    Ok(())
}

unsafe fn write_string(out: *mut *mut c_char, s: String) -> Result<(), Failure> {
    let c = CString::new(s).map_err(|_| Failure(LinksqlStatus::InvalidArgument, "result contains NUL".into()))?;
    write_out(out, c.into_raw())
}

fn column_list(set: &SchemaSet) -> String {
    serde_json::to_string(&set.columns().map(ToString::to_string).collect::<Vec<_>>()).unwrap_or_default()
}

fn parse_sets(json: &str, name: &str) -> Result<Vec<SchemaSet>, Failure> {
    let bad = |m: String| Failure(LinksqlStatus::InvalidArgument, format!("{name}: {m}"));
    let lists: Vec<Vec<String>> = serde_json::from_str(json).map_err(|e| bad(e.to_string()))?;
    lists
        .iter()
        .map(|cols| {
            let mut set = SchemaSet::new();
            for c in cols {
                let (t, col) = c.split_once('.').ok_or_else(|| bad(format!("expected table.column, got {c}")))?;
                set.add_column(t, col);
            }
            Ok(set)
        })
        .collect()
}

/// Message for the last failed call on this thread, or null. Valid until the
/// next call into the library from this thread.
#[no_mangle]
pub extern "C" fn linksql_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| slot.borrow().as_ref().map_or(ptr::null(), |c| c.as_ptr()))
}

/// Opens and introspects `path`, sampling `rows_per_table` rows per table
/// with `seed`.
///
/// # Safety
/// `path` must be a NUL-terminated string; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn linksql_catalog_open(
    path: *const c_char,
    rows_per_table: usize,
    seed: u64,
    out: *mut *mut LinksqlCatalog,
) -> LinksqlStatus {
    guard(|| {
        let path = PathBuf::from(str_arg(path, "path")?);
        if rows_per_table == 0 {
            return Err(Failure(LinksqlStatus::InvalidArgument, "rows_per_table must be at least 1".into()));
        }
        let catalog = introspect_database(&path)?;
        let samples = sample_values(&catalog, &path, rows_per_table, seed, 64)?;
        write_out(out, Box::into_raw(Box::new(LinksqlCatalog { path, catalog, samples })))
    })
}

/// # Safety
/// `catalog` must come from [`linksql_catalog_open`] and not be freed already.
#[no_mangle]
pub unsafe extern "C" fn linksql_catalog_free(catalog: *mut LinksqlCatalog) {
    if !catalog.is_null() {
        drop(Box::from_raw(catalog));
    }
}

/// Number of user tables.
///
/// # Safety
/// `catalog` must be a live handle or null.
#[no_mangle]
pub unsafe extern "C" fn linksql_catalog_table_count(catalog: *const LinksqlCatalog) -> usize {
    catalog.as_ref().map_or(0, |c| c.catalog.tables().len())
}

/// Prompt rendering of the whole schema with value samples.
///
/// # Safety
/// `catalog` must be a live handle; `out` must be writable.
#[no_mangle]
pub unsafe extern "C" fn linksql_catalog_render(catalog: *const LinksqlCatalog, out: *mut *mut c_char) -> LinksqlStatus {
    guard(|| {
        let c = handle(catalog)?;
        let text = render_schema_prompt(&c.catalog, &c.samples, None, None)?;
        write_string(out, text)
    })
}

/// Columns referenced by `sql` as a JSON array of `"table.column"` strings.
/// `extractor` is a [`LinksqlExtractor`] value.
///
/// # Safety
/// `catalog` must be a live handle, `sql` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn linksql_extract_columns(
    catalog: *const LinksqlCatalog,
    sql: *const c_char,
    extractor: u32,
    out: *mut *mut c_char,
) -> LinksqlStatus {
    guard(|| {
        let c = handle(catalog)?;
        let sql = str_arg(sql, "sql")?;
        let set = match extractor {
            e if e == LinksqlExtractor::NameMatch as u32 => extract_columns_name_match(sql, &c.catalog),
            e if e == LinksqlExtractor::Ast as u32 => {
                extract_columns_ast(sql, &c.catalog).map_err(|e| Failure(LinksqlStatus::Parse, e.to_string()))?
            }
            other => return Err(Failure(LinksqlStatus::InvalidArgument, format!("unknown extractor {other}"))),
        };
        write_string(out, column_list(&set))
    })
}

/// Runs `sql` read-only and writes the outcome as JSON. A failing query is
/// still `Ok`; its status is in the JSON.
///
/// # Safety
/// `catalog` must be a live handle, `sql` NUL-terminated, `out` writable.
#[no_mangle]
pub unsafe extern "C" fn linksql_execute(
    catalog: *const LinksqlCatalog,
    sql: *const c_char,
    timeout_ms: u64,
    out: *mut *mut c_char,
) -> LinksqlStatus {
    guard(|| {
        let c = handle(catalog)?;
        let sql = str_arg(sql, "sql")?;
        let outcome = execute_sql(&c.path, sql, Duration::from_millis(timeout_ms));
        let json = serde_json::to_string(&outcome).map_err(|e| Failure(LinksqlStatus::InvalidArgument, e.to_string()))?;
        write_string(out, json)
    })
}

/// Non-strict and strict recall over paired linked/gold sets, each a JSON
/// array of arrays of `"table.column"` strings.
///
/// # Safety
/// Both strings must be NUL-terminated; `nsr` and `srr` writable.
#[no_mangle]
pub unsafe extern "C" fn linksql_recall(
    linked_json: *const c_char,
    gold_json: *const c_char,
    nsr: *mut f64,
    srr: *mut f64,
) -> LinksqlStatus {
    guard(|| {
        let linked = parse_sets(str_arg(linked_json, "linked")?, "linked")?;
        let gold = parse_sets(str_arg(gold_json, "gold")?, "gold")?;
        let n = compute_nsr(&linked, &gold)?;
        let s = compute_srr(&linked, &gold)?;
        write_out(nsr, n)?;
        write_out(srr, s)
    })
}

/// # Safety
/// `s` must come from this library and not be freed already.
#[no_mangle]
pub unsafe extern "C" fn linksql_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}
