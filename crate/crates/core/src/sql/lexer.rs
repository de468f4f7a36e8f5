//! A forgiving SQL lexer that never fails.
//!
//! Only identifier tokens matter to callers: bare words that are not
//! reserved keywords, plus `"quoted"`, `` `backquoted` `` and `[bracketed]`
//! identifiers. String literals, numbers, comments and punctuation are
//! skipped. Unterminated literals and comments run to the end of input.

use crate::canonical_ident;

const KEYWORDS: &[&str] = &[
    "all", "alter", "and", "as", "asc", "between", "by", "case", "cast", "collate", "create",
    "cross", "delete", "desc", "distinct", "drop", "else", "end", "escape", "except", "exists",
    "from", "full", "glob", "group", "having", "in", "inner", "insert", "intersect", "into", "is",
    "join", "left", "like", "limit", "natural", "not", "null", "offset", "on", "or", "order",
    "outer", "right", "select", "set", "table", "then", "union", "update", "using", "values",
    "when", "where", "with",
];

pub fn is_keyword(word: &str) -> bool {
    KEYWORDS.binary_search(&word.to_ascii_lowercase().as_str()).is_ok()
}

fn is_word_start(c: char) -> bool {
    c.is_alphabetic() || c == '_' || !c.is_ascii() && !c.is_whitespace()
}

fn is_word_char(c: char) -> bool {
    is_word_start(c) || c.is_ascii_digit() || c == '$'
}

/// Canonical names of all identifier tokens, in order of appearance.
pub fn identifier_tokens(sql: &str) -> Vec<String> {
    let chars: Vec<char> = sql.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    let n = chars.len();
    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
        } else if c == '-' && chars.get(i + 1) == Some(&'-') {
            while i < n && chars[i] != '\n' {
                i += 1;
            }
        } else if c == '/' && chars.get(i + 1) == Some(&'*') {
            i += 2;
            while i < n && !(chars[i] == '*' && chars.get(i + 1) == Some(&'/')) {
                i += 1;
            }
            i = (i + 2).min(n);
        } else if c == '\'' {
            i = skip_delimited(&chars, i, '\'').1;
        } else if c == '"' || c == '`' || c == '[' {
            let close = if c == '[' { ']' } else { c };
            let (body, next) = skip_delimited(&chars, i, close);
            if !body.trim().is_empty() {
                out.push(canonical_ident(&body));
            }
            i = next;
        } else if is_word_start(c) {
            let start = i;
            while i < n && is_word_char(chars[i]) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            if !is_keyword(&word) {
                out.push(canonical_ident(&word));
            }
        } else if c.is_ascii_digit() {
            while i < n && (chars[i].is_ascii_alphanumeric() || chars[i] == '.') {
                i += 1;
            }
        } else {
            i += 1;
        }
    }
    out
}

// Returns the literal body (doubled delimiters unescaped) and the index after
// the closing delimiter.
fn skip_delimited(chars: &[char], open: usize, close: char) -> (String, usize) {
    let mut body = String::new();
    let mut i = open + 1;
    while i < chars.len() {
        if chars[i] == close {
            if close != ']' && chars.get(i + 1) == Some(&close) {
                body.push(close);
                i += 2;
                continue;
            }
            return (body, i + 1);
        }
        body.push(chars[i]);
        i += 1;
    }
    (body, chars.len())
}

/// Word tokens of free text (evidence, questions): runs of word characters
/// plus delimited identifiers. Apostrophes do not open literals here.
pub fn prose_tokens(text: &str) -> Vec<String> {
    let chars: Vec<char> = text.chars().collect();
    let mut out = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        if c == '`' || c == '[' || c == '"' {
            let close = if c == '[' { ']' } else { c };
            if let Some(len) = chars[i + 1..].iter().position(|&x| x == close) {
                let body: String = chars[i + 1..i + 1 + len].iter().collect();
                if !body.trim().is_empty() {
                    out.push(canonical_ident(&body));
                }
            }
            i += 1;
        } else if is_word_char(c) || c.is_ascii_digit() {
            let start = i;
            while i < chars.len() && (is_word_char(chars[i]) || chars[i].is_ascii_digit()) {
                i += 1;
            }
            let word: String = chars[start..i].iter().collect();
            out.push(canonical_ident(&word));
        } else {
            i += 1;
        }
    }
    out
}
