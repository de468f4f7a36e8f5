use std::collections::BTreeMap;
use std::path::Path;

pub const TEMPLATE_NAMES: [&str; 12] = [
    "system",
    "forward_link",
    "sql1",
    "components",
    "sql2",
    "select",
    "correct",
    "correct_followup",
    "reminder_json",
    "reminder_sql",
    "reminder_choice",
    "describe",
];

fn builtin(name: &str) -> &'static str {
    match name {
        "system" => include_str!("../../templates/system.txt"),
        "forward_link" => include_str!("../../templates/forward_link.txt"),
        "sql1" => include_str!("../../templates/sql1.txt"),
        "components" => include_str!("../../templates/components.txt"),
        "sql2" => include_str!("../../templates/sql2.txt"),
        "select" => include_str!("../../templates/select.txt"),
        "correct" => include_str!("../../templates/correct.txt"),
        "correct_followup" => include_str!("../../templates/correct_followup.txt"),
        "reminder_json" => include_str!("../../templates/reminder_json.txt"),
        "reminder_sql" => include_str!("../../templates/reminder_sql.txt"),
        "reminder_choice" => include_str!("../../templates/reminder_choice.txt"),
        "describe" => include_str!("../../templates/describe.txt"),
        other => panic!("unknown template {other}"),
    }
}

/// Prompt templates with `{slot}` placeholders.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Templates {
    texts: BTreeMap<&'static str, String>,
}

impl Default for Templates {
    fn default() -> Self {
        Self { texts: TEMPLATE_NAMES.iter().map(|&n| (n, builtin(n).to_string())).collect() }
    }
}

impl Templates {
    /// Built-ins, with any `<name>.txt` found in `dir` taking precedence.
    pub fn with_overrides(dir: &Path) -> std::io::Result<Self> {
        let mut t = Self::default();
        for name in TEMPLATE_NAMES {
            let path = dir.join(format!("{name}.txt"));
            if path.is_file() {
                t.texts.insert(name, std::fs::read_to_string(&path)?);
            }
        }
        Ok(t)
    }

    pub fn get(&self, name: &str) -> &str {
        self.texts.get(name).map(String::as_str).unwrap_or_else(|| panic!("unknown template {name}"))
    }

    pub fn render(&self, name: &str, slots: &[(&str, &str)]) -> String {
        render_template(self.get(name), slots)
    }
}

/// Single-pass substitution of `{name}` for each known slot. Unknown braces
/// and braces inside substituted values are left alone.
pub fn render_template(template: &str, slots: &[(&str, &str)]) -> String {
    let mut out = String::with_capacity(template.len());
    let mut rest = template;
    while let Some(open) = rest.find('{') {
        out.push_str(&rest[..open]);
        let after = &rest[open + 1..];
        let slot = after.find('}').and_then(|close| {
            let name = &after[..close];
            slots.iter().find(|(n, _)| *n == name).map(|(_, v)| (*v, close))
        });
        match slot {
            Some((value, close)) => {
                out.push_str(value);
                rest = &after[close + 1..];
            }
            None => {
                out.push('{');
                rest = after;
            }
        }
    }
    out.push_str(rest);
    out
}
