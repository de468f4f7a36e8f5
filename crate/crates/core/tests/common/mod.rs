//! Fixture databases, scripted model replies and the recorded replay cache
//! shared by the integration tests.
//!
//! Setting `LINKSQL_REGEN_FIXTURES=1` rewrites `tests/fixtures/replay.jsonl`
//! from the scripts below; otherwise every model call is answered from that
//! file.

#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use linksql::catalog::DescriptionSource;
use linksql::llm::{ChatRequest, LlmGateway, ReplayCache, ScriptedBackend};
use linksql::pipeline::{DatabaseContext, Difficulty, Pipeline, PipelineTrace, QuestionTask, Templates};
use linksql::PipelineConfig;

pub const TOXICOLOGY_DDL: &str = "
CREATE TABLE molecule (molecule_id TEXT PRIMARY KEY, label TEXT);
CREATE TABLE atom (atom_id TEXT PRIMARY KEY, molecule_id TEXT REFERENCES molecule(molecule_id), element TEXT);
CREATE TABLE bond (bond_id TEXT PRIMARY KEY, molecule_id TEXT REFERENCES molecule(molecule_id), bond_type TEXT);
CREATE TABLE connected (
    atom_id TEXT REFERENCES atom(atom_id),
    atom_id2 TEXT REFERENCES atom(atom_id),
    bond_id TEXT REFERENCES bond(bond_id),
    PRIMARY KEY (atom_id, atom_id2)
);
INSERT INTO molecule VALUES ('TR000', '+'), ('TR151', '-'), ('TR007', '-'), ('TR019', '+'), ('TR030', '+');
INSERT INTO atom VALUES
    ('TR000_1', 'TR000', 'c'), ('TR000_2', 'TR000', 'cl'), ('TR000_3', 'TR000', 'h'),
    ('TR151_1', 'TR151', 'cl'), ('TR151_2', 'TR151', 'o'), ('TR151_3', 'TR151', 'c'),
    ('TR007_1', 'TR007', 'n'), ('TR019_1', 'TR019', 'c'), ('TR030_1', 'TR030', 's');
INSERT INTO bond VALUES
    ('TR000_1_2', 'TR000', '-'), ('TR000_1_3', 'TR000', '-'),
    ('TR151_1_2', 'TR151', '='), ('TR151_2_3', 'TR151', '-'), ('TR019_1_1', 'TR019', '#');
INSERT INTO connected VALUES
    ('TR000_1', 'TR000_2', 'TR000_1_2'), ('TR000_1', 'TR000_3', 'TR000_1_3'),
    ('TR151_1', 'TR151_2', 'TR151_1_2'), ('TR151_2', 'TR151_3', 'TR151_2_3');
";

pub const FOOTBALL_DDL: &str = "
CREATE TABLE Country (id INTEGER PRIMARY KEY, name TEXT);
CREATE TABLE League (id INTEGER PRIMARY KEY, country_id INTEGER REFERENCES Country(id), name TEXT);
CREATE TABLE Team (id INTEGER PRIMARY KEY, team_api_id INTEGER UNIQUE, team_long_name TEXT, team_short_name TEXT);
CREATE TABLE Team_Attributes (
    id INTEGER PRIMARY KEY,
    team_api_id INTEGER REFERENCES Team(team_api_id),
    date TEXT,
    buildUpPlaySpeed INTEGER,
    chanceCreationPassing INTEGER
);
CREATE TABLE Player (
    id INTEGER PRIMARY KEY,
    player_api_id INTEGER UNIQUE,
    player_name TEXT,
    birthday TEXT,
    height REAL,
    weight INTEGER
);
CREATE TABLE Player_Attributes (
    id INTEGER PRIMARY KEY,
    player_api_id INTEGER REFERENCES Player(player_api_id),
    date TEXT,
    overall_rating INTEGER,
    potential INTEGER,
    preferred_foot TEXT,
    attacking_work_rate TEXT
);
CREATE TABLE Match (
    id INTEGER PRIMARY KEY,
    country_id INTEGER REFERENCES Country(id),
    league_id INTEGER REFERENCES League(id),
    season TEXT,
    home_team_api_id INTEGER REFERENCES Team(team_api_id),
    away_team_api_id INTEGER REFERENCES Team(team_api_id),
    home_team_goal INTEGER,
    away_team_goal INTEGER
);
INSERT INTO Country VALUES (1, 'Belgium'), (2, 'England'), (3, 'Spain');
INSERT INTO League VALUES (1, 1, 'Belgium Jupiler League'), (2, 2, 'England Premier League'), (3, 3, 'Spain LIGA BBVA');
INSERT INTO Team VALUES
    (1, 9987, 'KRC Genk', 'GEN'), (2, 9993, 'Beerschot AC', 'BAC'),
    (3, 8650, 'Liverpool', 'LIV'), (4, 8634, 'FC Barcelona', 'BAR');
INSERT INTO Team_Attributes VALUES
    (1, 9987, '2015-09-10', 58, 50), (2, 9993, '2015-09-10', 45, 60),
    (3, 8650, '2015-09-10', 66, 55), (4, 8634, '2015-09-10', 38, 70);
INSERT INTO Player VALUES
    (1, 505942, 'Aaron Appindangoye', '1992-02-29', 182.88, 187),
    (2, 155782, 'Aaron Cresswell', '1989-12-15', 170.18, 146),
    (3, 162549, 'Aaron Doran', '1991-05-13', 170.18, 163),
    (4, 30572, 'Aaron Galindo', '1982-05-08', 182.88, 198),
    (5, 23780, 'Aaron Hughes', '1979-11-08', 182.88, 154),
    (6, 27316, 'Aaron Hunt', '1986-09-04', 193.04, 161);
INSERT INTO Player_Attributes VALUES
    (1, 505942, '2016-02-18', 67, 71, 'right', 'medium'),
    (2, 155782, '2016-04-21', 74, 76, 'left', 'high'),
    (3, 162549, '2016-01-07', 65, 40, 'right', 'medium'),
    (4, 30572, '2014-09-18', 69, 40, 'left', 'low'),
    (5, 23780, '2015-10-16', 70, 70, 'right', 'medium'),
    (6, 27316, '2016-04-28', 79, 80, 'right', 'high');
INSERT INTO Match VALUES
    (1, 1, 1, '2015/2016', 9987, 9993, 3, 1),
    (2, 1, 1, '2015/2016', 9993, 9987, 0, 2),
    (3, 1, 1, '2014/2015', 9987, 9993, 1, 1),
    (4, 2, 2, '2015/2016', 8650, 8634, 2, 2),
    (5, 3, 3, '2015/2016', 8634, 8650, 4, 0);
";

pub const TOXICOLOGY: &str = "toxicology";
pub const FOOTBALL: &str = "european_football_2";

/// Builds both fixture databases in the benchmark layout under `root`.
pub fn build_databases(root: &Path) {
    for (db_id, ddl) in [(TOXICOLOGY, TOXICOLOGY_DDL), (FOOTBALL, FOOTBALL_DDL)] {
        let dir = root.join(db_id);
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join(format!("{db_id}.sqlite"));
        let _ = std::fs::remove_file(&path);
        rusqlite::Connection::open(&path).unwrap().execute_batch(ddl).unwrap();
    }
}

/// Scripted replies for one question. Each `Vec` holds successive replies
/// within one conversation (first ask, then after the reminder).
pub struct Case {
    pub id: &'static str,
    pub db_id: &'static str,
    pub question: &'static str,
    pub evidence: &'static str,
    pub difficulty: Difficulty,
    pub gold: &'static str,
    pub forward: Vec<&'static str>,
    pub sql1: Vec<&'static str>,
    pub components: Vec<&'static str>,
    pub sql2: Vec<&'static str>,
    pub select: Vec<&'static str>,
    pub correct: Vec<&'static str>,
    /// Expected final SQL, compared after whitespace normalisation.
    pub expected: &'static str,
}

impl Case {
    pub fn task(&self) -> QuestionTask {
        QuestionTask {
            question_id: self.id.to_string(),
            db_id: self.db_id.to_string(),
            question: self.question.to_string(),
            evidence: self.evidence.to_string(),
            gold_sql: Some(self.gold.to_string()),
            difficulty: Some(self.difficulty),
        }
    }
}

fn fenced(sql: &str) -> String {
    format!("```sql\n{sql}\n```")
}

pub const TR151_SQL1: &str = "SELECT label FROM molecule WHERE molecule_id = 'TR151'";
pub const TR151_SQL2: &str = "SELECT label FROM molecule WHERE molecule_id = 'TR151' AND label = '+'";
pub const POTENTIAL_SQL1: &str = "SELECT preferred_foot\nFROM Player_Attributes\nORDER BY potential ASC\nLIMIT 1";
pub const POTENTIAL_SQL2: &str =
    "SELECT preferred_foot\nFROM player_attributes\nWHERE potential = (\n   SELECT MIN(potential)\n   FROM player_attributes\n)";

const CASE_SYNTAX_BROKEN: &str = "SELECT COUNT(*) FORM atom WHERE element = 'cl'";
const CASE_SYNTAX_FIXED: &str = "SELECT COUNT(*) FROM atom WHERE element = 'cl'";

pub const EMPTY_ROUNDS: [&str; 5] = [
    "SELECT atom_id FROM atom WHERE molecule_id = 'TR999'",
    "SELECT atom_id FROM atom WHERE molecule_id LIKE 'TR999'",
    "SELECT atom_id FROM atom WHERE UPPER(molecule_id) = 'TR999'",
    "SELECT atom_id FROM atom WHERE TRIM(molecule_id) = 'TR999'",
    "SELECT atom.atom_id FROM atom JOIN molecule ON atom.molecule_id = molecule.molecule_id WHERE molecule.molecule_id = 'TR999'",
];

pub fn cases() -> Vec<Case> {
    let leak = |s: String| -> &'static str { Box::leak(s.into_boxed_str()) };
    let f = |sql: &str| leak(fenced(sql));
    let choose = |n: u8, sql: &str| leak(format!("Both results were compared.\nChoice: SQL{n}\n{}", fenced(sql)));
    vec![
        Case {
            id: "tr151",
            db_id: TOXICOLOGY,
            question: "Is molecule TR151 carcinogenic?",
            evidence: "label = '+' mean molecules are carcinogenic;",
            difficulty: Difficulty::Simple,
            gold: TR151_SQL1,
            forward: vec![r#"{"tables": ["molecule"], "columns": ["molecule.molecule_id", "molecule.label"]}"#],
            sql1: vec![f(TR151_SQL1)],
            components: vec![
                r#"{"elements": ["molecule.label", "molecule.molecule_id"], "conditions": ["molecule TR151", "carcinogenic means label = '+'"], "keywords": ["=", "AND"]}"#,
            ],
            sql2: vec![f(TR151_SQL2)],
            select: vec![choose(1, TR151_SQL1)],
            correct: vec![],
            expected: TR151_SQL1,
        },
        Case {
            id: "lowest_potential",
            db_id: FOOTBALL,
            question: "What is the preferred foot when attacking of the player with the lowest potential?",
            evidence: "preferred foot when attacking refers to preferred_foot; lowest potential refers to MIN(potential);",
            difficulty: Difficulty::Simple,
            gold: "SELECT preferred_foot FROM Player_Attributes WHERE potential = (SELECT MIN(potential) FROM Player_Attributes)",
            forward: vec![r#"["Player_Attributes.potential", "Player_Attributes.preferred_foot"]"#],
            sql1: vec![f(POTENTIAL_SQL1)],
            components: vec![
                r#"```json
{"elements": ["player_attributes.potential", "player_attributes.preferred_foot"],
 "conditions": ["preferred foot when attacking", "player with the lowest potential"],
 "keywords": ["MIN", "="]}
```"#,
            ],
            sql2: vec![f(POTENTIAL_SQL2)],
            select: vec![choose(2, POTENTIAL_SQL2)],
            correct: vec![],
            expected: POTENTIAL_SQL2,
        },
        Case {
            id: "molecule_count",
            db_id: TOXICOLOGY,
            question: "How many molecules are recorded?",
            evidence: "",
            difficulty: Difficulty::Simple,
            gold: "SELECT COUNT(molecule_id) FROM molecule",
            forward: vec![r#"["molecule.molecule_id"]"#],
            sql1: vec![f("SELECT COUNT(molecule_id) FROM molecule")],
            components: vec![r#"{"elements": ["molecule.molecule_id"], "conditions": [], "keywords": ["COUNT"]}"#],
            sql2: vec![f("SELECT COUNT(molecule_id) FROM molecule")],
            select: vec![],
            correct: vec![],
            expected: "SELECT COUNT(molecule_id) FROM molecule",
        },
        Case {
            id: "chlorine_atoms",
            db_id: TOXICOLOGY,
            question: "How many chlorine atoms are there?",
            evidence: "chlorine refers to element = 'cl'",
            difficulty: Difficulty::Simple,
            gold: CASE_SYNTAX_FIXED,
            forward: vec![r#"["atom.element", "atom.atom_id"]"#],
            sql1: vec![f(CASE_SYNTAX_BROKEN)],
            components: vec![r#"{"elements": ["atom.element"], "conditions": ["element = 'cl'"], "keywords": ["COUNT"]}"#],
            sql2: vec![f(CASE_SYNTAX_BROKEN)],
            select: vec![],
            correct: vec![f(CASE_SYNTAX_FIXED)],
            expected: CASE_SYNTAX_FIXED,
        },
        Case {
            id: "missing_molecule",
            db_id: TOXICOLOGY,
            question: "Which atoms belong to molecule TR999?",
            evidence: "",
            difficulty: Difficulty::Moderate,
            gold: "SELECT atom_id FROM atom WHERE molecule_id = 'TR999'",
            forward: vec![r#"["atom.atom_id", "atom.molecule_id"]"#],
            sql1: vec![f(EMPTY_ROUNDS[0])],
            components: vec![r#"{"elements": ["atom.atom_id", "atom.molecule_id"], "conditions": ["molecule TR999"], "keywords": ["="]}"#],
            sql2: vec![f(EMPTY_ROUNDS[0])],
            select: vec![],
            correct: EMPTY_ROUNDS.iter().map(|s| f(s)).collect(),
            expected: EMPTY_ROUNDS[4],
        },
        Case {
            id: "tr151_elements",
            db_id: TOXICOLOGY,
            question: "Which elements occur in molecule TR151?",
            evidence: "",
            difficulty: Difficulty::Moderate,
            gold: "SELECT DISTINCT element FROM atom WHERE molecule_id = 'TR151'",
            forward: vec![r#"Relevant elements: ["molecule.molecule_id", "atom.element"]"#],
            sql1: vec![f(
                "SELECT DISTINCT T2.element FROM molecule AS T1 INNER JOIN atom AS T2 ON T1.molecule_id = T2.molecule_id WHERE T1.molecule_id = 'TR151'",
            )],
            components: vec![r#"{"elements": ["atom.element", "atom.molecule_id"], "conditions": ["molecule_id = 'TR151'"], "keywords": ["DISTINCT"]}"#],
            sql2: vec![f("SELECT DISTINCT element FROM atom WHERE molecule_id = 'TR151'")],
            select: vec!["Both return the same elements; the second avoids the join. Choice: SQL2"],
            correct: vec![],
            expected: "SELECT DISTINCT element FROM atom WHERE molecule_id = 'TR151'",
        },
        Case {
            id: "carcinogenic_count",
            db_id: TOXICOLOGY,
            question: "How many molecules are carcinogenic?",
            evidence: "label = '+' means molecules are carcinogenic",
            difficulty: Difficulty::Simple,
            gold: "SELECT COUNT(molecule_id) FROM molecule WHERE label = '+'",
            forward: vec![r#"["molecule"]"#],
            sql1: vec![f("SELECT COUNT(molecule_id) FROM molecule WHERE label = '+'")],
            components: vec![r#"{"elements": ["molecule.label"], "conditions": ["label = '+'"], "keywords": ["COUNT"]}"#],
            sql2: vec![f("SELECT COUNT(*) FROM molecule WHERE label = '+'")],
            select: vec![f("SELECT COUNT(molecule_id)\nFROM molecule WHERE label = '+';")],
            correct: vec![],
            expected: "SELECT COUNT(molecule_id) FROM molecule WHERE label = '+'",
        },
        Case {
            id: "tallest_player",
            db_id: FOOTBALL,
            question: "Who is the tallest player?",
            evidence: "tallest refers to MAX(height)",
            difficulty: Difficulty::Simple,
            gold: "SELECT player_name FROM Player WHERE height = (SELECT MAX(height) FROM Player)",
            forward: vec![r#"["Player.player_name", "Player.height"]"#],
            sql1: vec![f("SELECT player_name FROM Player ORDER BY height DESC LIMIT 1")],
            components: vec![r#"{"elements": ["player.player_name", "player.height"], "conditions": ["tallest"], "keywords": ["MAX"]}"#],
            sql2: vec![f("SELECT player_name FROM Player WHERE height = (SELECT MAX(height) FROM Player)")],
            select: vec!["Hard to say, both look plausible.", "I still cannot decide between them."],
            correct: vec![],
            expected: "SELECT player_name FROM Player ORDER BY height DESC LIMIT 1",
        },
        Case {
            id: "belgian_league",
            db_id: FOOTBALL,
            question: "What is the name of the league played in Belgium?",
            evidence: "Belgium refers to Country.name = 'Belgium'",
            difficulty: Difficulty::Moderate,
            gold: "SELECT T1.name FROM League AS T1 INNER JOIN Country AS T2 ON T1.country_id = T2.id WHERE T2.name = 'Belgium'",
            forward: vec!["Sure, the league and the country tables look relevant.", r#"["League.name", "League.country_id", "Country.id", "Country.name"]"#],
            sql1: vec![f(
                "SELECT T1.name FROM League AS T1 INNER JOIN Country AS T2 ON T1.country_id = T2.id WHERE T2.name = 'Belgium'",
            )],
            components: vec![r#"{"elements": ["league.name", "country.name", "league.country_id", "country.id"], "conditions": ["country is Belgium"], "keywords": ["INNER JOIN"]}"#],
            sql2: vec![f(
                "SELECT League.name FROM League JOIN Country ON League.country_id = Country.id WHERE Country.name = 'Belgium'",
            )],
            select: vec![choose(
                1,
                "SELECT T1.name FROM League AS T1 INNER JOIN Country AS T2 ON T1.country_id = T2.id WHERE T2.name = 'Belgium'",
            )],
            correct: vec![],
            expected: "SELECT T1.name FROM League AS T1 INNER JOIN Country AS T2 ON T1.country_id = T2.id WHERE T2.name = 'Belgium'",
        },
        Case {
            id: "genk_home_goals",
            db_id: FOOTBALL,
            question: "How many goals did KRC Genk score in home matches?",
            evidence: "KRC Genk refers to team_long_name = 'KRC Genk'",
            difficulty: Difficulty::Challenging,
            gold: "SELECT SUM(T1.home_team_goal) FROM Match AS T1 INNER JOIN Team AS T2 ON T1.home_team_api_id = T2.team_api_id WHERE T2.team_long_name = 'KRC Genk'",
            forward: vec![r#"{"Match": ["home_team_goal", "home_team_api_id"], "Team": ["team_api_id", "team_long_name"]}"#],
            sql1: vec![f(
                "SELECT SUM(T1.home_team_goal) FROM Match AS T1 INNER JOIN Team AS T2 ON T1.home_team_api_id = T2.team_api_id WHERE T2.team_long_name = 'KRC Genk'",
            )],
            components: vec![r#"{"elements": ["match.home_team_goal", "team.team_long_name"], "conditions": ["home team is KRC Genk"], "keywords": ["SUM", "INNER JOIN"]}"#],
            sql2: vec![f(
                "SELECT SUM(T1.home_team_goal) FROM Match AS T1 INNER JOIN Team AS T2 ON T1.home_team_api_id = T2.team_api_id WHERE T2.team_long_name = 'KRC Genk'",
            )],
            select: vec![],
            correct: vec![],
            expected: "SELECT SUM(T1.home_team_goal) FROM Match AS T1 INNER JOIN Team AS T2 ON T1.home_team_api_id = T2.team_api_id WHERE T2.team_long_name = 'KRC Genk'",
        },
        Case {
            id: "fastest_buildup",
            db_id: FOOTBALL,
            question: "Which team has the highest build-up play speed?",
            evidence: "highest build-up play speed refers to MAX(buildUpPlaySpeed)",
            difficulty: Difficulty::Challenging,
            gold: "SELECT T2.team_long_name FROM Team_Attributes AS T1 INNER JOIN Team AS T2 ON T1.team_api_id = T2.team_api_id ORDER BY T1.buildUpPlaySpeed DESC LIMIT 1",
            forward: vec![r#"["Team_Attributes.speed", "Team_Attributes.team_api_id", "Team.team_api_id", "Team.team_long_name"]"#],
            sql1: vec![f(
                "SELECT T2.team_long_name FROM Team_Attributes AS T1 INNER JOIN Team AS T2 ON T1.team_api_id = T2.team_api_id ORDER BY T1.buildUpPlaySpeed DESC LIMIT 1",
            )],
            components: vec![r#"{"elements": ["team_attributes.buildupplayspeed", "team.team_long_name", "team.stadium"], "conditions": ["highest speed"], "keywords": ["MAX", "INNER JOIN"]}"#],
            sql2: vec![f(
                "SELECT T2.team_long_name FROM Team_Attributes AS T1 INNER JOIN Team AS T2 ON T1.team_api_id = T2.team_api_id WHERE T1.buildUpPlaySpeed = (SELECT MAX(buildUpPlaySpeed) FROM Team_Attributes)",
            )],
            select: vec![choose(
                2,
                "SELECT T2.team_long_name FROM Team_Attributes AS T1 INNER JOIN Team AS T2 ON T1.team_api_id = T2.team_api_id WHERE T1.buildUpPlaySpeed = (SELECT MAX(buildUpPlaySpeed) FROM Team_Attributes)",
            )],
            correct: vec![],
            expected: "SELECT T2.team_long_name FROM Team_Attributes AS T1 INNER JOIN Team AS T2 ON T1.team_api_id = T2.team_api_id WHERE T1.buildUpPlaySpeed = (SELECT MAX(buildUpPlaySpeed) FROM Team_Attributes)",
        },
        Case {
            id: "tr007_label",
            db_id: TOXICOLOGY,
            question: "What is the label of molecule TR007?",
            evidence: "",
            difficulty: Difficulty::Simple,
            gold: "SELECT label FROM molecule WHERE molecule_id = 'TR007'",
            forward: vec![r#"["molecule.label", "molecule.molecule_id"]"#],
            sql1: vec![f("SELECT label FROM molecule WHERE molecule_id = 'TR007'")],
            components: vec!["I think the label column matters.", "Label and id."],
            sql2: vec!["The label column answers it.", "It is in the molecule table."],
            select: vec![],
            correct: vec![],
            expected: "SELECT label FROM molecule WHERE molecule_id = 'TR007'",
        },
    ]
}

/// Reply for `request` according to the scripts, `None` when the scripts
/// have nothing for it.
pub fn scripted_reply(cases: &[Case], request: &ChatRequest) -> Option<String> {
    let prompt = &request.messages.get(1)?.content;
    let case = cases.iter().find(|c| prompt.contains(&format!("\n{}\n", c.question)))?;
    let turn = (request.messages.len() - 2) / 2;
    let replies = match request.request_tag.as_str() {
        "forward_link" => &case.forward,
        "sql1" => &case.sql1,
        "components" => &case.components,
        "sql2" => &case.sql2,
        "select" => &case.select,
        "correct" => &case.correct,
        _ => return None,
    };
    replies.get(turn).map(|s| s.to_string())
}

pub fn fixtures_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures")
}

pub fn replay_path() -> PathBuf {
    fixtures_dir().join("replay.jsonl")
}

pub fn regenerating() -> bool {
    std::env::var("LINKSQL_REGEN_FIXTURES").is_ok_and(|v| v == "1")
}

pub struct Corpus {
    pub dir: tempfile::TempDir,
    pub cases: Vec<Case>,
    pub config: PipelineConfig,
    pub templates: Templates,
}

impl Corpus {
    pub fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        build_databases(dir.path());
        Self { dir, cases: cases(), config: PipelineConfig::default(), templates: Templates::default() }
    }

    pub fn db_root(&self) -> &Path {
        self.dir.path()
    }

    pub fn context(&self, db_id: &str) -> DatabaseContext {
        let path = linksql::catalog::database_path(self.db_root(), db_id);
        DatabaseContext::from_path(&path, &DescriptionSource::None, &self.config).unwrap()
    }

    /// The replay gateway over the committed cache.
    pub fn replay_gateway(&self) -> LlmGateway {
        LlmGateway::replay(Arc::new(ReplayCache::load(&replay_path()).expect("replay fixture present")))
    }

    pub fn run_with(&self, gateway: &LlmGateway, config: &PipelineConfig, case: &Case) -> PipelineTrace {
        let pipeline = Pipeline { gateway, config, templates: &self.templates };
        pipeline.run(&case.task(), &self.context(case.db_id), &[])
    }

    /// Runs every case from the replay cache, regenerating it first when
    /// requested.
    pub fn run_all(&self) -> Vec<PipelineTrace> {
        if regenerating() {
            self.regenerate();
        }
        let gateway = self.replay_gateway();
        self.cases.iter().map(|c| self.run_with(&gateway, &self.config, c)).collect()
    }

    /// Rewrites the replay cache from the scripts.
    pub fn regenerate(&self) {
        std::fs::create_dir_all(fixtures_dir()).unwrap();
        let _ = std::fs::remove_file(replay_path());
        let cache = Arc::new(ReplayCache::open(&replay_path()).unwrap());
        let scripts = cases();
        let backend = ScriptedBackend::new(move |r: &ChatRequest| scripted_reply(&scripts, r));
        let gateway = LlmGateway::record(Box::new(backend), cache);
        for case in &self.cases {
            let trace = self.run_with(&gateway, &self.config, case);
            assert!(!trace.has_issue(linksql::pipeline::IssueKind::Gateway), "{}: {:?}", case.id, trace.issues);
        }
    }

    /// Writes the cases as a BIRD-shaped dataset file.
    pub fn write_dataset(&self, path: &Path) {
        let records: Vec<serde_json::Value> = self
            .cases
            .iter()
            .map(|c| {
                serde_json::json!({
                    "question_id": c.id,
                    "db_id": c.db_id,
                    "question": c.question,
                    "evidence": c.evidence,
                    "SQL": c.gold,
                    "difficulty": c.difficulty.label(),
                })
            })
            .collect();
        std::fs::write(path, serde_json::to_string_pretty(&records).unwrap()).unwrap();
    }
}

/// Twenty gold queries over the two fixture databases, every one with a
/// non-empty result.
pub const EX_QUESTIONS: [(&str, &str, Difficulty); 20] = [
    (TOXICOLOGY, "SELECT COUNT(*) FROM molecule", Difficulty::Simple),
    (TOXICOLOGY, "SELECT label FROM molecule WHERE molecule_id = 'TR151'", Difficulty::Simple),
    (TOXICOLOGY, "SELECT COUNT(*) FROM atom WHERE element = 'cl'", Difficulty::Simple),
    (TOXICOLOGY, "SELECT DISTINCT element FROM atom WHERE molecule_id = 'TR151'", Difficulty::Moderate),
    (TOXICOLOGY, "SELECT molecule_id FROM molecule WHERE label = '+'", Difficulty::Simple),
    (
        TOXICOLOGY,
        "SELECT T1.molecule_id, COUNT(T2.atom_id) FROM molecule AS T1 INNER JOIN atom AS T2 ON T1.molecule_id = T2.molecule_id GROUP BY T1.molecule_id",
        Difficulty::Moderate,
    ),
    (TOXICOLOGY, "SELECT bond_type, COUNT(*) FROM bond GROUP BY bond_type", Difficulty::Moderate),
    (
        TOXICOLOGY,
        "SELECT T2.label FROM bond AS T1 INNER JOIN molecule AS T2 ON T1.molecule_id = T2.molecule_id WHERE T1.bond_type = '#'",
        Difficulty::Challenging,
    ),
    (
        TOXICOLOGY,
        "SELECT COUNT(DISTINCT T1.molecule_id) FROM atom AS T1 INNER JOIN molecule AS T2 ON T1.molecule_id = T2.molecule_id WHERE T2.label = '+' AND T1.element = 'c'",
        Difficulty::Challenging,
    ),
    (TOXICOLOGY, "SELECT atom_id2 FROM connected WHERE atom_id = 'TR000_1'", Difficulty::Moderate),
    (FOOTBALL, "SELECT name FROM Country", Difficulty::Simple),
    (
        FOOTBALL,
        "SELECT preferred_foot FROM Player_Attributes WHERE potential = (SELECT MIN(potential) FROM Player_Attributes)",
        Difficulty::Simple,
    ),
    (FOOTBALL, "SELECT player_name FROM Player WHERE height = (SELECT MAX(height) FROM Player)", Difficulty::Simple),
    (
        FOOTBALL,
        "SELECT T1.name FROM League AS T1 INNER JOIN Country AS T2 ON T1.country_id = T2.id WHERE T2.name = 'Belgium'",
        Difficulty::Moderate,
    ),
    (FOOTBALL, "SELECT SUM(home_team_goal) FROM Match WHERE home_team_api_id = 9987", Difficulty::Moderate),
    (FOOTBALL, "SELECT team_long_name FROM Team WHERE team_short_name = 'LIV'", Difficulty::Simple),
    (FOOTBALL, "SELECT AVG(overall_rating) FROM Player_Attributes WHERE preferred_foot = 'left'", Difficulty::Moderate),
    (
        FOOTBALL,
        "SELECT T2.team_long_name FROM Team_Attributes AS T1 INNER JOIN Team AS T2 ON T1.team_api_id = T2.team_api_id ORDER BY T1.chanceCreationPassing DESC LIMIT 1",
        Difficulty::Challenging,
    ),
    (FOOTBALL, "SELECT season, COUNT(*) FROM Match GROUP BY season", Difficulty::Challenging),
    (
        FOOTBALL,
        "SELECT T1.player_name FROM Player AS T1 INNER JOIN Player_Attributes AS T2 ON T1.player_api_id = T2.player_api_id WHERE T2.attacking_work_rate = 'high'",
        Difficulty::Challenging,
    ),
];

/// Writes the EX questions as a BIRD-shaped file and returns its path.
pub fn write_ex_dataset(dir: &Path) -> PathBuf {
    let records: Vec<serde_json::Value> = EX_QUESTIONS
        .iter()
        .enumerate()
        .map(|(i, (db, sql, d))| {
            serde_json::json!({
                "question_id": i,
                "db_id": db,
                "question": format!("fixture question {i}"),
                "evidence": "",
                "SQL": sql,
                "difficulty": d.label(),
            })
        })
        .collect();
    let path = dir.join("ex_dev.json");
    std::fs::write(&path, serde_json::to_string_pretty(&records).unwrap()).unwrap();
    path
}
