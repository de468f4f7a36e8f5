//! Schema references used by a SQL statement.
//!
//! Two strategies with different failure modes:
//!
//! - [`extract_columns_name_match`] recalls every `table.column` whose column
//!   name appears as an identifier token. It never fails and tolerates broken
//!   SQL, at the price of recalling same-named columns of unrelated tables.
//! - [`extract_columns_ast`] parses the statement and resolves every column
//!   reference through the FROM clauses, aliases and subquery scopes.

use std::collections::HashMap;
use std::ops::ControlFlow;
use std::sync::OnceLock;

use sqlparser::ast::{
    Expr, JoinConstraint, JoinOperator, Query, Select, SelectItem, SelectItemQualifiedWildcardKind,
    SetExpr, Statement, TableFactor, TableWithJoins, VisitMut, VisitorMut,
};
use sqlparser::dialect::SQLiteDialect;
use sqlparser::parser::Parser;

use super::lexer::identifier_tokens;
use super::SchemaSet;
use crate::canonical_ident;
use crate::catalog::DatabaseCatalog;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("cannot parse SQL: {0}")]
pub struct ParseError(pub String);

/// How `SELECT *` / `t.*` projections are counted.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum StarPolicy {
    /// Every column of the starred tables.
    #[default]
    Expand,
    /// The starred tables only, no columns.
    TableOnly,
}

/// Name-matching recall. Total on any input.
pub fn extract_columns_name_match(sql: &str, catalog: &DatabaseCatalog) -> SchemaSet {
    let mut set = SchemaSet::new();
    for token in identifier_tokens(sql) {
        if let Some(table) = catalog.table(&token) {
            set.add_table(&table.name);
        }
        for table in catalog.tables_with_column(&token) {
            set.add_column(&table.name, &token);
        }
    }
    set
}

/// Byte-level entry point; invalid UTF-8 is replaced before lexing.
pub fn extract_columns_name_match_bytes(sql: &[u8], catalog: &DatabaseCatalog) -> SchemaSet {
    extract_columns_name_match(&String::from_utf8_lossy(sql), catalog)
}

/// Parse-based extraction with `SELECT *` expanded to all columns.
pub fn extract_columns_ast(sql: &str, catalog: &DatabaseCatalog) -> Result<SchemaSet, ParseError> {
    extract_columns_ast_with(sql, catalog, StarPolicy::Expand)
}

pub fn extract_columns_ast_with(
    sql: &str,
    catalog: &DatabaseCatalog,
    star: StarPolicy,
) -> Result<SchemaSet, ParseError> {
    let statements = Parser::parse_sql(&SQLiteDialect {}, sql).map_err(|e| ParseError(e.to_string()))?;
    if statements.is_empty() {
        return Err(ParseError("empty statement".into()));
    }
    let mut resolver = Resolver { catalog, star, out: SchemaSet::new() };
    for statement in &statements {
        match statement {
            Statement::Query(query) => resolver.query(query, &[], &HashMap::new()),
            other => {
                return Err(ParseError(format!("not a query: {}", first_word(&other.to_string()))));
            }
        }
    }
    Ok(resolver.out)
}

fn first_word(s: &str) -> &str {
    s.split_whitespace().next().unwrap_or("")
}

#[derive(Debug, Clone)]
enum Source {
    /// Catalog table (canonical name).
    Base(String),
    /// Subquery or CTE with its output column names; `open` when it has a star.
    Derived { columns: Vec<String>, open: bool },
}

#[derive(Debug, Clone)]
struct Entry {
    name: String,
    source: Source,
}

type Scope = Vec<Entry>;
type CteEnv = HashMap<String, Source>;

#[derive(Debug)]
enum Reference {
    Bare(String),
    Qualified(String, String),
}

fn placeholder_query() -> Query {
    static PLACEHOLDER: OnceLock<Query> = OnceLock::new();
    PLACEHOLDER
        .get_or_init(|| {
            let mut stmts = Parser::parse_sql(&SQLiteDialect {}, "SELECT 1").expect("static SQL parses");
            match stmts.pop() {
                Some(Statement::Query(q)) => *q,
                _ => unreachable!("SELECT 1 is a query"),
            }
        })
        .clone()
}

/// Collects column references of an expression tree, lifting out nested
/// queries so they can be resolved in their own scope.
#[derive(Default)]
struct Collector {
    refs: Vec<Reference>,
    nested: Vec<Query>,
}

impl VisitorMut for Collector {
    type Break = ();

    fn pre_visit_query(&mut self, query: &mut Query) -> ControlFlow<()> {
        self.nested.push(std::mem::replace(query, placeholder_query()));
        ControlFlow::Continue(())
    }

    fn pre_visit_expr(&mut self, expr: &mut Expr) -> ControlFlow<()> {
        match expr {
            Expr::Identifier(ident) => self.refs.push(Reference::Bare(canonical_ident(&ident.value))),
            Expr::CompoundIdentifier(parts) if parts.len() >= 2 => {
                let n = parts.len();
                self.refs.push(Reference::Qualified(
                    canonical_ident(&parts[n - 2].value),
                    canonical_ident(&parts[n - 1].value),
                ));
            }
            _ => {}
        }
        ControlFlow::Continue(())
    }
}

struct Resolver<'a> {
    catalog: &'a DatabaseCatalog,
    star: StarPolicy,
    out: SchemaSet,
}

impl Resolver<'_> {
    fn query(&mut self, query: &Query, outer: &[Scope], ctes: &CteEnv) {
        let mut env = ctes.clone();
        if let Some(with) = &query.with {
            for cte in &with.cte_tables {
                self.query(&cte.query, outer, &env);
                let source = derived_source(&cte.query);
                env.insert(canonical_ident(&cte.alias.name.value), source);
            }
        }
        match query.body.as_ref() {
            SetExpr::Select(select) => {
                // ORDER BY / LIMIT of a plain SELECT see the SELECT's FROM scope.
                self.select(select, Some(query), outer, &env);
            }
            body => {
                self.set_expr(body, outer, &env);
                self.trailing_clauses(query, &Vec::new(), outer, &env);
            }
        }
    }

    fn trailing_clauses(&mut self, query: &Query, scope: &Scope, outer: &[Scope], env: &CteEnv) {
        if let Some(order_by) = &query.order_by {
            self.collect_and_resolve(&mut order_by.clone(), scope, outer, env);
        }
        if let Some(limit) = &query.limit_clause {
            self.collect_and_resolve(&mut limit.clone(), scope, outer, env);
        }
    }

    fn set_expr(&mut self, body: &SetExpr, outer: &[Scope], env: &CteEnv) {
        match body {
            SetExpr::Select(select) => self.select(select, None, outer, env),
            SetExpr::Query(q) => self.query(q, outer, env),
            SetExpr::SetOperation { left, right, .. } => {
                self.set_expr(left, outer, env);
                self.set_expr(right, outer, env);
            }
            other => {
                let mut other = other.clone();
                self.collect_and_resolve(&mut other, &Vec::new(), outer, env);
            }
        }
    }

    fn select(&mut self, select: &Select, trailing: Option<&Query>, outer: &[Scope], env: &CteEnv) {
        let mut scope = Scope::new();
        let mut join_exprs = Vec::new();
        let mut using_cols = Vec::new();
        for twj in &select.from {
            self.table_with_joins(twj, outer, env, &mut scope, &mut join_exprs, &mut using_cols);
        }
        for entry in &scope {
            if let Source::Base(table) = &entry.source {
                self.out.add_table(table);
            }
        }

        let mut body = select.clone();
        body.from.clear();
        body.projection.retain(|item| match item {
            SelectItem::Wildcard(_) => {
                for entry in &scope {
                    self.star_entry(entry);
                }
                false
            }
            SelectItem::QualifiedWildcard(SelectItemQualifiedWildcardKind::ObjectName(name), _) => {
                if let Some(last) = name.0.last().and_then(|p| p.as_ident()) {
                    let key = canonical_ident(&last.value);
                    if let Some(entry) = scope.iter().find(|e| e.name == key) {
                        self.star_entry(entry);
                    }
                }
                false
            }
            _ => true,
        });

        self.collect_and_resolve(&mut body, &scope, outer, env);
        for mut expr in join_exprs {
            self.collect_and_resolve(&mut expr, &scope, outer, env);
        }
        for col in using_cols {
            self.resolve(&Reference::Bare(col), &scope, outer);
        }
        if let Some(query) = trailing {
            self.trailing_clauses(query, &scope, outer, env);
        }
    }

    fn star_entry(&mut self, entry: &Entry) {
        if let (Source::Base(table), StarPolicy::Expand) = (&entry.source, self.star) {
            if let Some(info) = self.catalog.table(table) {
                for c in &info.columns {
                    self.out.add_column(&info.name, &c.name);
                }
            }
        }
    }

    fn table_with_joins(
        &mut self,
        twj: &TableWithJoins,
        outer: &[Scope],
        env: &CteEnv,
        scope: &mut Scope,
        join_exprs: &mut Vec<Expr>,
        using_cols: &mut Vec<String>,
    ) {
        self.table_factor(&twj.relation, outer, env, scope, join_exprs, using_cols);
        for join in &twj.joins {
            self.table_factor(&join.relation, outer, env, scope, join_exprs, using_cols);
            match join_constraint(&join.join_operator) {
                Some(JoinConstraint::On(expr)) => join_exprs.push(expr.clone()),
                Some(JoinConstraint::Using(names)) => {
                    for name in names {
                        if let Some(last) = name.0.last().and_then(|p| p.as_ident()) {
                            using_cols.push(canonical_ident(&last.value));
                        }
                    }
                }
                _ => {}
            }
        }
    }

    fn table_factor(
        &mut self,
        factor: &TableFactor,
        outer: &[Scope],
        env: &CteEnv,
        scope: &mut Scope,
        join_exprs: &mut Vec<Expr>,
        using_cols: &mut Vec<String>,
    ) {
        match factor {
            TableFactor::Table { name, alias, .. } => {
                let Some(table_name) = name.0.last().and_then(|p| p.as_ident()) else { return };
                let key = canonical_ident(&table_name.value);
                let visible = alias.as_ref().map(|a| canonical_ident(&a.name.value)).unwrap_or_else(|| key.clone());
                if let Some(source) = env.get(&key) {
                    scope.push(Entry { name: visible, source: source.clone() });
                } else if let Some(info) = self.catalog.table(&key) {
                    scope.push(Entry { name: visible, source: Source::Base(canonical_ident(&info.name)) });
                }
            }
            TableFactor::Derived { subquery, alias, .. } => {
                self.query(subquery, outer, env);
                if let Some(alias) = alias {
                    scope.push(Entry { name: canonical_ident(&alias.name.value), source: derived_source(subquery) });
                }
            }
            TableFactor::NestedJoin { table_with_joins, .. } => {
                self.table_with_joins(table_with_joins, outer, env, scope, join_exprs, using_cols);
            }
            _ => {}
        }
    }

    fn collect_and_resolve<T: VisitMut>(&mut self, node: &mut T, scope: &Scope, outer: &[Scope], env: &CteEnv) {
        let mut collector = Collector::default();
        let _ = node.visit(&mut collector);
        for reference in &collector.refs {
            self.resolve(reference, scope, outer);
        }
        if !collector.nested.is_empty() {
            let mut chain = outer.to_vec();
            chain.push(scope.clone());
            for nested in &collector.nested {
                self.query(nested, &chain, env);
            }
        }
    }

    fn resolve(&mut self, reference: &Reference, scope: &Scope, outer: &[Scope]) {
        let scopes = outer.iter().chain(std::iter::once(scope)).rev();
        match reference {
            Reference::Bare(column) => {
                for s in scopes {
                    let owners: Vec<&String> = s
                        .iter()
                        .filter_map(|e| match &e.source {
                            Source::Base(t) if self.catalog.has_column(t, column) => Some(t),
                            _ => None,
                        })
                        .collect();
                    if !owners.is_empty() {
                        for t in owners {
                            self.out.add_column(t, column);
                        }
                        return;
                    }
                    let derived_hit = s.iter().any(|e| match &e.source {
                        Source::Derived { columns, open } => *open || columns.contains(column),
                        Source::Base(_) => false,
                    });
                    if derived_hit {
                        return;
                    }
                }
            }
            Reference::Qualified(qualifier, column) => {
                for s in scopes {
                    if let Some(entry) = s.iter().find(|e| &e.name == qualifier) {
                        if let Source::Base(t) = &entry.source {
                            if self.catalog.has_column(t, column) {
                                self.out.add_column(t, column);
                            }
                        }
                        return;
                    }
                }
                if self.catalog.has_column(qualifier, column) {
                    self.out.add_column(qualifier, column);
                }
            }
        }
    }
}

fn join_constraint(op: &JoinOperator) -> Option<&JoinConstraint> {
    use JoinOperator::*;
    match op {
        Join(c) | Inner(c) | Left(c) | LeftOuter(c) | Right(c) | RightOuter(c) | FullOuter(c)
        | CrossJoin(c) | Semi(c) | LeftSemi(c) | RightSemi(c) | Anti(c) | LeftAnti(c)
        | RightAnti(c) | StraightJoin(c) => Some(c),
        AsOf { constraint, .. } => Some(constraint),
        _ => None,
    }
}

fn derived_source(query: &Query) -> Source {
    let mut columns = Vec::new();
    let mut open = false;
    let mut body = query.body.as_ref();
    // The output names of a set operation come from its leftmost branch.
    while let SetExpr::SetOperation { left, .. } = body {
        body = left;
    }
    match body {
        SetExpr::Select(select) => {
            for item in &select.projection {
                match item {
                    SelectItem::UnnamedExpr(Expr::Identifier(id)) => columns.push(canonical_ident(&id.value)),
                    SelectItem::UnnamedExpr(Expr::CompoundIdentifier(parts)) => {
                        if let Some(last) = parts.last() {
                            columns.push(canonical_ident(&last.value));
                        }
                    }
                    SelectItem::ExprWithAlias { alias, .. } => columns.push(canonical_ident(&alias.value)),
                    SelectItem::Wildcard(_) | SelectItem::QualifiedWildcard(..) => open = true,
                    _ => {}
                }
            }
        }
        _ => open = true,
    }
    Source::Derived { columns, open }
}
