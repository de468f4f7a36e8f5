use std::collections::BTreeMap;

use super::{
    CallRecord, Choice, ContextAugmentation, CorrectionRound, DatabaseContext, IssueKind, PipelineTrace, QuestionTask,
    Selection, SelectionMethod, SqlCandidate, Templates, TraceIssue,
};
use crate::catalog::{render_sections, PromptSections, SchemaDescriptions};
use crate::config::PipelineConfig;
use crate::fewshot::{render_examples, Example};
use crate::linking::{
    augment_with_evidence, backward_link, parse_forward_response, resolve_element, simplify_schema, LinkedSchema,
    SimplifiedCatalog,
};
use crate::llm::{extract_sql, extract_structured, fingerprint, ChatMessage, ChatRequest, LlmError, LlmGateway};
use crate::sql::{classify_risk, execute_sql, ExecStatus, ExecutionOutcome, Risk, SchemaSet};

const COMPONENT_FIELDS: [&str; 3] = ["elements", "conditions", "keywords"];
const NONE: &str = "(none)";

/// Runs the four steps for one question at a time.
pub struct Pipeline<'a> {
    pub gateway: &'a LlmGateway,
    pub config: &'a PipelineConfig,
    pub templates: &'a Templates,
}

pub struct Step1Output {
    pub simplified: SimplifiedCatalog,
    pub sql1: Option<SqlCandidate>,
    pub links: LinkedSchema,
}

pub struct Step2Output {
    pub augmentation: ContextAugmentation,
    pub sql2: Option<SqlCandidate>,
}

/// Collapses whitespace and drops a trailing semicolon.
pub fn normalize_sql(sql: &str) -> String {
    sql.split_whitespace().collect::<Vec<_>>().join(" ").trim_end_matches(';').trim_end().to_string()
}

fn or_none(text: &str) -> &str {
    if text.trim().is_empty() {
        NONE
    } else {
        text
    }
}

fn list_json(items: &[String]) -> String {
    serde_json::to_string(items).expect("string list serializes")
}

fn feedback(outcome: &ExecutionOutcome, rows: usize, chars: usize) -> String {
    let preview = outcome.render_preview(rows, chars);
    match outcome.status {
        ExecStatus::Error => format!("The query failed to execute.\n{preview}"),
        ExecStatus::Timeout => format!("The query did not finish in time.\n{preview}"),
        ExecStatus::Ok if outcome.row_count == 0 => format!("The query executed but returned no rows.\n{preview}"),
        ExecStatus::Ok => preview,
    }
}

impl Pipeline<'_> {
    /// Steps 1 to 4. Failures are recorded in the trace; a trace is always returned.
    pub fn run(&self, task: &QuestionTask, db: &DatabaseContext, examples: &[Example]) -> PipelineTrace {
        let mut trace = PipelineTrace::new(task);
        let s1 = self.step1_bsl(task, db, examples, &mut trace);
        trace.links = s1.links.clone();
        trace.simplified = s1.simplified.catalog.full_schema_set();
        trace.sql1 = s1.sql1.clone();

        let s2 = self.step2_cia(task, db, &s1.simplified, examples, &mut trace);
        trace.augmentation = s2.augmentation.clone();
        trace.sql2 = s2.sql2.clone();

        let sql3 = self.step3_bss(task, &s1.simplified, examples, s1.sql1, s2.sql2, &mut trace);
        trace.sql3 = sql3.clone();

        if let Some(sql3) = sql3 {
            let last = self.step4_mtsc(task, db, &s1.simplified, examples, sql3, &mut trace);
            trace.final_sql = last.sql;
        } else {
            trace.issues.push(TraceIssue {
                step: "select".into(),
                kind: IssueKind::Fallback,
                message: "no candidate SQL was produced".into(),
            });
        }
        trace
    }

    /// Step 1 only; the preliminary SQL becomes the final SQL.
    pub fn link(&self, task: &QuestionTask, db: &DatabaseContext, examples: &[Example]) -> PipelineTrace {
        let mut trace = PipelineTrace::new(task);
        let s1 = self.step1_bsl(task, db, examples, &mut trace);
        trace.links = s1.links;
        trace.simplified = s1.simplified.catalog.full_schema_set();
        trace.final_sql = s1.sql1.as_ref().map(|c| c.sql.clone()).unwrap_or_default();
        trace.sql1 = s1.sql1;
        trace
    }

    fn request(&self, tag: &str, messages: Vec<ChatMessage>) -> ChatRequest {
        ChatRequest {
            messages,
            model: self.config.model.clone(),
            temperature: self.config.temperature,
            max_tokens: self.config.max_tokens,
            request_tag: tag.to_string(),
        }
    }

    fn call(&self, tag: &str, messages: Vec<ChatMessage>, trace: &mut PipelineTrace) -> Result<String, LlmError> {
        let request = self.request(tag, messages);
        match self.gateway.chat(&request) {
            Ok(response) => {
                let record = CallRecord {
                    tag: tag.to_string(),
                    fingerprint: fingerprint(&request),
                    prompt_tokens: response.prompt_tokens,
                    completion_tokens: response.completion_tokens,
                };
                trace.token_totals.add(&crate::llm::TokenUsage::of(&response));
                trace.calls.push(record);
                Ok(response.content)
            }
            Err(e) => {
                let kind = if matches!(e, LlmError::ReplayMiss { .. }) { IssueKind::ReplayMiss } else { IssueKind::Gateway };
                trace.issues.push(TraceIssue { step: tag.to_string(), kind, message: e.to_string() });
                Err(e)
            }
        }
    }

    /// One call plus, when parsing fails, one follow-up carrying `reminder`.
    /// Failures are recorded in the trace.
    fn ask<T, E: std::fmt::Display>(
        &self,
        tag: &str,
        prompt: String,
        reminder: &str,
        trace: &mut PipelineTrace,
        parse: impl Fn(&str) -> Result<T, E>,
    ) -> Option<(T, String)> {
        let mut messages = vec![ChatMessage::system(self.templates.get("system").trim()), ChatMessage::user(prompt)];
        let reply = self.call(tag, messages.clone(), trace).ok()?;
        let first_error = match parse(&reply) {
            Ok(v) => return Some((v, reply)),
            Err(e) => e.to_string(),
        };
        messages.push(ChatMessage::assistant(reply));
        messages.push(ChatMessage::user(reminder.trim()));
        let retry = self.call(tag, messages, trace).ok()?;
        match parse(&retry) {
            Ok(v) => Some((v, retry)),
            Err(e) => {
                let message = format!("{first_error}; after reminder: {e}");
                trace.issues.push(TraceIssue { step: tag.to_string(), kind: IssueKind::Unparseable, message });
                None
            }
        }
    }

    fn execute(&self, db: &DatabaseContext, sql: String) -> SqlCandidate {
        let outcome = execute_sql(&db.db_path, &sql, self.config.timeout());
        SqlCandidate { sql, outcome }
    }

    fn sections(
        &self,
        simplified: &SimplifiedCatalog,
        descriptions: Option<&SchemaDescriptions>,
    ) -> PromptSections {
        render_sections(&simplified.catalog, &simplified.samples, descriptions, None)
            .expect("rendering without a subset cannot fail")
    }

    fn fallback(trace: &mut PipelineTrace, step: &str, message: impl Into<String>) {
        trace.issues.push(TraceIssue { step: step.into(), kind: IssueKind::Fallback, message: message.into() });
    }

    /// Forward links, preliminary SQL over the full schema, backward links and simplification.
    pub fn step1_bsl(
        &self,
        task: &QuestionTask,
        db: &DatabaseContext,
        examples: &[Example],
        trace: &mut PipelineTrace,
    ) -> Step1Output {
        let full = render_sections(&db.catalog, &db.samples, None, None).expect("full rendering cannot fail");
        let evidence = or_none(&task.evidence);
        let forward_prompt = self.templates.render(
            "forward_link",
            &[("schema", &full.schema), ("samples", &full.samples), ("question", &task.question), ("evidence", evidence)],
        );
        let forward = match self.ask("forward_link", forward_prompt, self.templates.get("reminder_json"), trace, |r| {
            parse_forward_response(r, &db.catalog)
        }) {
            Some((parsed, _)) => {
                trace.dropped_links = parsed.dropped;
                parsed.linked
            }
            None => {
                Self::fallback(trace, "forward_link", "forward linking produced nothing; using evidence matches only");
                SchemaSet::new()
            }
        };
        let forward = augment_with_evidence(&forward, &task.evidence, &db.catalog);

        let fwd_text: Vec<String> = forward
            .tables()
            .into_iter()
            .filter(|t| !forward.columns().any(|c| &c.table == t))
            .chain(forward.columns().map(ToString::to_string))
            .collect();
        let examples_text = render_examples(examples);
        let sql1_prompt = self.templates.render(
            "sql1",
            &[
                ("examples", or_none(&examples_text)),
                ("schema", &full.schema),
                ("samples", &full.samples),
                ("fwd_links", or_none(&fwd_text.join("\n"))),
                ("question", &task.question),
                ("evidence", evidence),
            ],
        );
        let sql1 = self
            .ask("sql1", sql1_prompt, self.templates.get("reminder_sql"), trace, extract_sql)
            .map(|(sql, _)| self.execute(db, sql));

        let backward = sql1
            .as_ref()
            .map(|c| backward_link(&c.sql, &db.catalog, self.config.backward_strategy))
            .unwrap_or_default();
        let links = LinkedSchema::new(forward, backward);
        let simplified =
            match simplify_schema(&db.catalog, &db.samples, &db.descriptions, &links.union, self.config.retain_keys) {
                Ok(s) => s,
                Err(e) => {
                    Self::fallback(trace, "simplify", format!("{e}; keeping the full schema"));
                    SimplifiedCatalog {
                        catalog: db.catalog.clone(),
                        samples: db.samples.clone(),
                        descriptions: db.descriptions.clone(),
                    }
                }
            };
        Step1Output { simplified, sql1, links }
    }

    /// Component generation, then SQL over the simplified schema.
    pub fn step2_cia(
        &self,
        task: &QuestionTask,
        db: &DatabaseContext,
        simplified: &SimplifiedCatalog,
        examples: &[Example],
        trace: &mut PipelineTrace,
    ) -> Step2Output {
        let sections = self.sections(simplified, Some(&simplified.descriptions));
        let evidence = or_none(&task.evidence);
        let mut augmentation = ContextAugmentation {
            descriptions: description_map(simplified),
            ..ContextAugmentation::default()
        };
        let prompt = self.templates.render(
            "components",
            &[
                ("schema", &sections.schema),
                ("samples", &sections.samples),
                ("descriptions", &sections.descriptions),
                ("question", &task.question),
                ("evidence", evidence),
            ],
        );
        match self.ask("components", prompt, self.templates.get("reminder_json"), trace, |r| {
            extract_structured(r, &COMPONENT_FIELDS)
        }) {
            Some((reply, _)) => {
                if !reply.missing.is_empty() {
                    Self::fallback(trace, "components", format!("missing fields: {}", reply.missing.join(", ")));
                }
                let mut dropped = Vec::new();
                for element in reply.get("elements") {
                    match resolve_element(element, &simplified.catalog) {
                        Some(e) if !augmentation.elements.contains(&e) => augmentation.elements.push(e),
                        Some(_) => {}
                        None => dropped.push(element.clone()),
                    }
                }
                if !dropped.is_empty() {
                    Self::fallback(trace, "components", format!("elements outside the simplified schema dropped: {}", dropped.join(", ")));
                }
                augmentation.conditions = reply.get("conditions").to_vec();
                augmentation.keywords = reply.get("keywords").to_vec();
            }
            None => Self::fallback(trace, "components", "no components; generating with descriptions only"),
        }

        let components = format!(
            "Elements: {}\nConditions: {}\nKeywords: {}",
            list_json(&augmentation.elements),
            list_json(&augmentation.conditions),
            list_json(&augmentation.keywords)
        );
        let examples_text = render_examples(examples);
        let prompt = self.templates.render(
            "sql2",
            &[
                ("examples", or_none(&examples_text)),
                ("schema", &sections.schema),
                ("samples", &sections.samples),
                ("descriptions", &sections.descriptions),
                ("components", &components),
                ("question", &task.question),
                ("evidence", evidence),
            ],
        );
        let sql2 = self
            .ask("sql2", prompt, self.templates.get("reminder_sql"), trace, extract_sql)
            .map(|(sql, _)| self.execute(db, sql));
        Step2Output { augmentation, sql2 }
    }

    /// Picks one of the two candidates using both execution results.
    pub fn step3_bss(
        &self,
        task: &QuestionTask,
        simplified: &SimplifiedCatalog,
        examples: &[Example],
        sql1: Option<SqlCandidate>,
        sql2: Option<SqlCandidate>,
        trace: &mut PipelineTrace,
    ) -> Option<SqlCandidate> {
        let only = |choice| Some(Selection { choice, method: SelectionMethod::OnlyCandidate, rationale: String::new() });
        let (c1, c2) = match (sql1, sql2) {
            (None, None) => return None,
            (Some(c), None) => {
                trace.selection = only(Choice::Sql1);
                return Some(c);
            }
            (None, Some(c)) => {
                trace.selection = only(Choice::Sql2);
                return Some(c);
            }
            (Some(a), Some(b)) => (a, b),
        };
        if c1.sql.trim() == c2.sql.trim() {
            trace.selection =
                Some(Selection { choice: Choice::Sql1, method: SelectionMethod::ShortCircuit, rationale: String::new() });
            return Some(c1);
        }

        let sections = self.sections(simplified, Some(&simplified.descriptions));
        let (rows, chars) = (self.config.preview_rows, self.config.preview_cell_chars);
        let candidates = format!(
            "SQL1:\n```sql\n{}\n```\nExecution result of SQL1:\n{}\n\nSQL2:\n```sql\n{}\n```\nExecution result of SQL2:\n{}",
            c1.sql,
            c1.outcome.render_preview(rows, chars),
            c2.sql,
            c2.outcome.render_preview(rows, chars)
        );
        let examples_text = render_examples(examples);
        let prompt = self.templates.render(
            "select",
            &[
                ("examples", or_none(&examples_text)),
                ("schema", &sections.schema),
                ("samples", &sections.samples),
                ("descriptions", &sections.descriptions),
                ("question", &task.question),
                ("evidence", or_none(&task.evidence)),
                ("candidates", &candidates),
            ],
        );
        let (choice, method, rationale) =
            match self.ask("select", prompt, self.templates.get("reminder_choice"), trace, |r| {
                parse_choice(r, &c1.sql, &c2.sql).ok_or("reply names neither candidate")
            }) {
                Some((choice, reply)) => (choice, SelectionMethod::Model, reply),
                None => {
                    Self::fallback(trace, "select", "selection unreadable; defaulting to SQL1");
                    (Choice::Sql1, SelectionMethod::Defaulted, String::new())
                }
            };
        trace.selection = Some(Selection { choice, method, rationale });
        Some(match choice {
            Choice::Sql1 => c1,
            Choice::Sql2 => c2,
        })
    }

    /// Multi-turn correction while the current query is high risk, at most N rounds.
    pub fn step4_mtsc(
        &self,
        task: &QuestionTask,
        db: &DatabaseContext,
        simplified: &SimplifiedCatalog,
        examples: &[Example],
        sql3: SqlCandidate,
        trace: &mut PipelineTrace,
    ) -> SqlCandidate {
        let mut current = sql3;
        if classify_risk(&current.outcome) == Risk::Low || self.config.correction_rounds == 0 {
            return current;
        }
        let (rows, chars) = (self.config.preview_rows, self.config.preview_cell_chars);
        let sections = self.sections(simplified, Some(&simplified.descriptions));
        let examples_text = render_examples(examples);
        let mut error = feedback(&current.outcome, rows, chars);
        let opening = self.templates.render(
            "correct",
            &[
                ("examples", or_none(&examples_text)),
                ("schema", &sections.schema),
                ("samples", &sections.samples),
                ("descriptions", &sections.descriptions),
                ("question", &task.question),
                ("evidence", or_none(&task.evidence)),
                ("candidates", &current.sql),
                ("errors", &error),
            ],
        );
        let mut messages = vec![ChatMessage::system(self.templates.get("system").trim()), ChatMessage::user(opening)];
        while classify_risk(&current.outcome) == Risk::High && trace.correction_rounds.len() < self.config.correction_rounds {
            let Ok(reply) = self.call("correct", messages.clone(), trace) else {
                Self::fallback(trace, "correct", "correction stopped early; keeping the last query");
                break;
            };
            messages.push(ChatMessage::assistant(reply.clone()));
            let next = match extract_sql(&reply) {
                Ok(sql) => self.execute(db, sql),
                Err(e) => {
                    Self::fallback(trace, "correct", format!("round {}: {e}", trace.correction_rounds.len() + 1));
                    current.clone()
                }
            };
            trace.correction_rounds.push(CorrectionRound { feedback: error.clone(), sql: next.sql.clone(), outcome: next.outcome.clone() });
            current = next;
            if classify_risk(&current.outcome) == Risk::High && trace.correction_rounds.len() < self.config.correction_rounds {
                error = feedback(&current.outcome, rows, chars);
                messages.push(ChatMessage::user(self.templates.render("correct_followup", &[("errors", &error)])));
            }
        }
        current
    }
}

fn description_map(simplified: &SimplifiedCatalog) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    for table in simplified.catalog.tables() {
        for col in &table.columns {
            let text = simplified.descriptions.column(&table.name, &col.name);
            if !text.is_empty() {
                out.insert(format!("{}.{}", crate::canonical_ident(&table.name), crate::canonical_ident(&col.name)), text.to_string());
            }
        }
    }
    out
}

/// Maps a selection reply onto one of the candidates: a quoted query wins,
/// then an explicit `SQL1`/`SQL2` label.
fn parse_choice(reply: &str, sql1: &str, sql2: &str) -> Option<Choice> {
    if let Ok(quoted) = extract_sql(reply) {
        let q = normalize_sql(&quoted);
        let (n1, n2) = (normalize_sql(sql1), normalize_sql(sql2));
        if q == n1 {
            return Some(Choice::Sql1);
        }
        if q == n2 {
            return Some(Choice::Sql2);
        }
        let (q, n1, n2) = (q.to_lowercase(), n1.to_lowercase(), n2.to_lowercase());
        if q == n1 {
            return Some(Choice::Sql1);
        }
        if q == n2 {
            return Some(Choice::Sql2);
        }
    }
    let squashed: String = reply.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    for (labels, choice) in [(["choice:sql1", "choice:sql2"], Choice::Sql1), (["choice:sql2", "choice:sql1"], Choice::Sql2)] {
        if squashed.contains(labels[0]) && !squashed.contains(labels[1]) {
            return Some(choice);
        }
    }
    let has1 = squashed.contains("sql1");
    let has2 = squashed.contains("sql2");
    match (has1, has2) {
        (true, false) => Some(Choice::Sql1),
        (false, true) => Some(Choice::Sql2),
        _ => None,
    }
}
