#ifndef LINKSQL_H
#define LINKSQL_H

#pragma once

#include <stdarg.h>
#include <stdbool.h>
#include <stddef.h>
#include <stdint.h>
#include <stdlib.h>

typedef enum LinksqlStatus {
  LINKSQL_STATUS_OK = 0,
  LINKSQL_STATUS_NULL_ARGUMENT = 1,
  LINKSQL_STATUS_INVALID_UTF8 = 2,
  LINKSQL_STATUS_INVALID_ARGUMENT = 3,
  LINKSQL_STATUS_CATALOG = 4,
  LINKSQL_STATUS_PARSE = 5,
  LINKSQL_STATUS_METRIC = 6,
  LINKSQL_STATUS_PANIC = 7,
} LinksqlStatus;

typedef enum LinksqlExtractor {
  LINKSQL_EXTRACTOR_NAME_MATCH = 0,
  LINKSQL_EXTRACTOR_AST = 1,
} LinksqlExtractor;

/**
 * An introspected SQLite database with its value samples.
 */
typedef struct LinksqlCatalog LinksqlCatalog;

#ifdef __cplusplus
extern "C" {
#endif // __cplusplus

/**
 * Message for the last failed call on this thread, or null. Valid until the
 * next call into the library from this thread.
 */
const char *linksql_last_error(void);

/**
 * Opens and introspects `path`, sampling `rows_per_table` rows per table
 * with `seed`.
 *
 * # Safety
 * `path` must be a NUL-terminated string; `out` must be writable.
 */
enum LinksqlStatus linksql_catalog_open(const char *path,
                                        size_t rows_per_table,
                                        uint64_t seed,
                                        struct LinksqlCatalog **out);

/**
 * # Safety
 * `catalog` must come from [`linksql_catalog_open`] and not be freed already.
 */
void linksql_catalog_free(struct LinksqlCatalog *catalog);

/**
 * Number of user tables.
 *
 * # Safety
 * `catalog` must be a live handle or null.
 */
size_t linksql_catalog_table_count(const struct LinksqlCatalog *catalog);

/**
 * Prompt rendering of the whole schema with value samples.
 *
 * # Safety
 * `catalog` must be a live handle; `out` must be writable.
 */
enum LinksqlStatus linksql_catalog_render(const struct LinksqlCatalog *catalog, char **out);

/**
 * Columns referenced by `sql` as a JSON array of `"table.column"` strings.
 * `extractor` is a [`LinksqlExtractor`] value.
 *
 * # Safety
 * `catalog` must be a live handle, `sql` NUL-terminated, `out` writable.
 */
enum LinksqlStatus linksql_extract_columns(const struct LinksqlCatalog *catalog,
                                           const char *sql,
                                           uint32_t extractor,
                                           char **out);

/**
 * Runs `sql` read-only and writes the outcome as JSON. A failing query is
 * still `Ok`; its status is in the JSON.
 *
 * # Safety
 * `catalog` must be a live handle, `sql` NUL-terminated, `out` writable.
 */
enum LinksqlStatus linksql_execute(const struct LinksqlCatalog *catalog,
                                   const char *sql,
                                   uint64_t timeout_ms,
                                   char **out);

/**
 * Non-strict and strict recall over paired linked/gold sets, each a JSON
 * array of arrays of `"table.column"` strings.
 *
 * # Safety
 * Both strings must be NUL-terminated; `nsr` and `srr` writable.
 */
enum LinksqlStatus linksql_recall(const char *linked_json,
                                  const char *gold_json,
                                  double *nsr,
                                  double *srr);

/**
 * # Safety
 * `s` must come from this library and not be freed already.
 */
void linksql_string_free(char *s);

#ifdef __cplusplus
}  // extern "C"
#endif  // __cplusplus

#endif  /* LINKSQL_H */
