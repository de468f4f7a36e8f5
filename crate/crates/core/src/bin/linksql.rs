use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use linksql::catalog::{database_path, DescriptionSource, GeneratedDescriptions};
use linksql::eval::{
    cost_report, evaluate_ex, evaluate_ves, load_dataset, load_predictions, recall_table, stratified_sample, Dataset,
    DatasetKind, EvalReport, PriceTable,
};
use linksql::fewshot::{build_index, load_examples, HttpEmbedder, TrigramVectorizer, Vectorizer, DEFAULT_DIMENSION};
use linksql::linking::BackwardStrategy;
use linksql::llm::{GatewayMode, HttpBackend, LlmGateway};
use linksql::pipeline::{
    bird_prediction, describe_table, generated_path, load_contexts, read_generated, run_batch, BatchMode,
    DatabaseContext, FewShot, IssueKind, PipelineTrace, Templates,
};
use linksql::PipelineConfig;

#[derive(Parser)]
#[command(name = "linksql", version, about = "Text-to-SQL with bidirectional schema linking")]
struct Cli {
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Default)]
struct Overrides {
    #[arg(long, global = true)]
    model: Option<String>,
    #[arg(long, global = true)]
    base_url: Option<String>,
    /// Environment variable holding the API key.
    #[arg(long, global = true)]
    api_key_env: Option<String>,
    #[arg(long, global = true)]
    temperature: Option<f64>,
    /// Few-shot examples per question.
    #[arg(long, global = true)]
    k: Option<usize>,
    /// Maximum self-correction rounds.
    #[arg(long, global = true)]
    rounds: Option<usize>,
    #[arg(long, global = true)]
    rows_per_table: Option<usize>,
    /// Query timeout in seconds.
    #[arg(long, global = true)]
    timeout: Option<f64>,
    #[arg(long, global = true)]
    workers: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    retain_keys: bool,
    #[arg(long, global = true, value_parser = parse_strategy)]
    backward: Option<BackwardStrategy>,
    #[arg(long, global = true, value_parser = parse_mode)]
    mode: Option<GatewayMode>,
    /// Record/replay cache file.
    #[arg(long, global = true)]
    replay: Option<PathBuf>,
    #[arg(long, global = true)]
    templates: Option<PathBuf>,
}

#[derive(Args, Clone)]
struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, default_value = "bird", value_parser = parse_kind)]
    kind: DatasetKind,
    /// Directory holding `<db_id>/<db_id>.sqlite`.
    #[arg(long)]
    db_root: PathBuf,
    /// Keep this fraction of each database's questions.
    #[arg(long)]
    sample: Option<f64>,
    #[arg(long)]
    limit: Option<usize>,
}

#[derive(Args, Clone)]
struct GenArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Training questions for few-shot selection.
    #[arg(long)]
    train: Option<PathBuf>,
    /// Embed questions with this endpoint model instead of character trigrams.
    #[arg(long)]
    embedding_model: Option<String>,
    /// Directory of generated `<db_id>.json` descriptions.
    #[arg(long)]
    descriptions: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Step 1 only: linked schemas, preliminary SQL and recall.
    Link(GenArgs),
    /// Full pipeline: traces and predictions.
    Run(GenArgs),
    /// Score predictions against gold SQL.
    Eval {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        predictions: PathBuf,
        /// Traces from `run` or `link`, for recall and cost.
        #[arg(long)]
        traces: Option<PathBuf>,
        #[arg(long)]
        ves: bool,
        #[arg(long)]
        timing_runs: Option<usize>,
        /// USD per million input tokens.
        #[arg(long)]
        price_input: Option<f64>,
        /// USD per million output tokens.
        #[arg(long)]
        price_output: Option<f64>,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate column descriptions for databases that have none.
    Describe {
        #[arg(long)]
        db_root: PathBuf,
        /// Databases to describe; all under the root by default.
        #[arg(long = "db")]
        dbs: Vec<String>,
        #[arg(long)]
        out: PathBuf,
        /// Also describe databases that ship description files.
        #[arg(long)]
        force: bool,
    },
    /// Rerun the pipeline from the replay cache only; fails on any miss.
    ReplayVerify {
        #[command(flatten)]
        gen: GenArgs,
        /// Predictions file the rerun must reproduce exactly.
        #[arg(long)]
        expect: Option<PathBuf>,
    },
}

fn parse_kind(s: &str) -> Result<DatasetKind, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<BackwardStrategy, String> {
    match s.replace('-', "_").as_str() {
        "name_match" => Ok(BackwardStrategy::NameMatch),
        "ast" => Ok(BackwardStrategy::Ast),
        _ => Err(format!("expected name_match or ast, got {s}")),
    }
}

fn parse_mode(s: &str) -> Result<GatewayMode, String> {
    match s {
        "live" => Ok(GatewayMode::Live),
        "record" => Ok(GatewayMode::Record),
        "replay" => Ok(GatewayMode::Replay),
        _ => Err(format!("expected live, record or replay, got {s}")),
    }
}

fn build_config(path: Option<&Path>, o: &Overrides) -> Result<PipelineConfig> {
    let mut c = match path {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    if let Some(v) = &o.model {
        c.model = v.clone();
    }
    if let Some(v) = &o.base_url {
        c.http.base_url = v.clone();
    }
    if let Some(v) = &o.api_key_env {
        c.http.api_key_env = v.clone();
    }
    if let Some(v) = o.temperature {
        c.temperature = v;
    }
    if let Some(v) = o.k {
        c.few_shot_k = v;
    }
    if let Some(v) = o.rounds {
        c.correction_rounds = v;
    }
    if let Some(v) = o.rows_per_table {
        c.rows_per_table = v;
    }
    if let Some(v) = o.timeout {
        c.timeout_secs = v;
    }
    if let Some(v) = o.workers {
        c.workers = v;
    }
    if let Some(v) = o.seed {
        c.seed = v;
    }
    if o.retain_keys {
        c.retain_keys = true;
    }
    if let Some(v) = o.backward {
        c.backward_strategy = v;
    }
    if let Some(v) = o.mode {
        c.mode = v;
    }
    if let Some(v) = &o.replay {
        c.replay_path = Some(v.clone());
    }
    if let Some(v) = &o.templates {
        c.templates_dir = Some(v.clone());
    }
    c.validate()?;
    Ok(c)
}

fn templates(config: &PipelineConfig) -> Result<Templates> {
    Ok(match &config.templates_dir {
        Some(dir) => Templates::with_overrides(dir).with_context(|| format!("reading templates from {}", dir.display()))?,
        None => Templates::default(),
    })
}

fn load_data(args: &DataArgs, seed: u64) -> Result<Dataset> {
    let mut ds = load_dataset(&args.dataset, args.kind, &args.db_root)?;
    if let Some(f) = args.sample {
        ds.tasks = stratified_sample(&ds.tasks, f, seed);
    }
    if let Some(n) = args.limit {
        ds.tasks.truncate(n);
    }
    Ok(ds)
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    Ok(())
}

fn write_traces(path: &Path, traces: &[PipelineTrace]) -> Result<()> {
    let mut w = BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?);
    for t in traces {
        serde_json::to_writer(&mut w, t)?;
        writeln!(w)?;
    }
    Ok(())
}

fn read_traces(path: &Path) -> Result<Vec<PipelineTrace>> {
    let file = File::open(path).with_context(|| format!("opening {}", path.display()))?;
    BufReader::new(file)
        .lines()
        .enumerate()
        .filter(|(_, l)| l.as_ref().map_or(true, |l| !l.trim().is_empty()))
        .map(|(i, l)| serde_json::from_str(&l?).with_context(|| format!("{}:{}", path.display(), i + 1)))
        .collect()
}

fn generate(config: &PipelineConfig, args: &GenArgs, mode: BatchMode) -> Result<(Dataset, Vec<PipelineTrace>, LlmGateway)> {
    let ds = load_data(&args.data, config.seed)?;
    let templates = templates(config)?;
    let gateway = config.gateway()?;
    let contexts = load_contexts(&ds.tasks, &ds.db_root, args.descriptions.as_deref(), config)?;
    let vectorizer: Box<dyn Vectorizer> = match &args.embedding_model {
        Some(m) => Box::new(HttpEmbedder { backend: HttpBackend::new(config.http.clone()), model: m.clone() }),
        None => Box::new(TrigramVectorizer { dimension: DEFAULT_DIMENSION }),
    };
    let index = match &args.train {
        Some(p) => {
            let examples = load_examples(p).with_context(|| format!("reading {}", p.display()))?;
            Some(build_index(&examples, vectorizer.as_ref())?)
        }
        None => None,
    };
    let fewshot = index.as_ref().map(|index| FewShot { index, vectorizer: vectorizer.as_ref() });
    let traces = run_batch(&ds.tasks, &contexts, &gateway, config, &templates, fewshot.as_ref(), mode);
    std::fs::create_dir_all(&args.out)?;
    write_traces(&args.out.join("traces.jsonl"), &traces)?;
    let bird: BTreeMap<&str, String> =
        traces.iter().map(|t| (t.question_id.as_str(), bird_prediction(&t.final_sql, &t.db_id))).collect();
    let plain: BTreeMap<&str, &str> = traces.iter().map(|t| (t.question_id.as_str(), t.final_sql.as_str())).collect();
    write_json(&args.out.join("predictions.json"), &bird)?;
    write_json(&args.out.join("predictions_plain.json"), &plain)?;
    let usage = gateway.usage();
    eprintln!(
        "{} questions, {} calls, {} prompt + {} completion tokens",
        traces.len(),
        usage.calls,
        usage.prompt_tokens,
        usage.completion_tokens
    );
    Ok((ds, traces, gateway))
}

fn cmd_link(config: &PipelineConfig, args: &GenArgs) -> Result<()> {
    let (ds, traces, _) = generate(config, args, BatchMode::Link)?;
    let catalogs = load_contexts(&ds.tasks, &ds.db_root, None, config)?
        .into_iter()
        .map(|(k, v)| (k, v.catalog))
        .collect();
    let table = recall_table(&traces, &ds, &catalogs)?;
    print!("{}", table.render_table());
    write_json(&args.out.join("recall.json"), &table)
}

fn cmd_eval(
    config: &PipelineConfig,
    data: &DataArgs,
    predictions: &Path,
    traces: Option<&Path>,
    ves: bool,
    prices: Option<PriceTable>,
    report_path: Option<&Path>,
) -> Result<()> {
    let ds = load_data(data, config.seed)?;
    let preds: HashMap<String, String> = load_predictions(predictions)?;
    let mut report = EvalReport::new(evaluate_ex(&preds, &ds, config.timeout()));
    print!("{}", report.ex.render_table("linksql"));
    eprintln!("{} evaluated, {} excluded", report.n_evaluated, report.n_excluded);
    if ves {
        let v = evaluate_ves(&preds, &ds, config.timing_runs, config.timeout())?;
        println!("VES {:.2}", v.ves);
        report.ves = Some(v);
    }
    if let Some(path) = traces {
        let traces = read_traces(path)?;
        let catalogs = load_contexts(&ds.tasks, &ds.db_root, None, config)?
            .into_iter()
            .map(|(k, v)| (k, v.catalog))
            .collect();
        match recall_table(&traces, &ds, &catalogs) {
            Ok(t) => {
                print!("{}", t.render_table());
                report.recall = Some(t);
            }
            Err(e) => log::warn!("recall skipped: {e}"),
        }
        let prices = prices.unwrap_or_else(|| {
            log::warn!("no price table given; costs are zero");
            PriceTable { input_per_million: 0.0, output_per_million: 0.0 }
        });
        let cost = cost_report(&traces, prices);
        print!("{}", cost.render_table("linksql"));
        report.cost = Some(cost);
    }
    if let Some(p) = report_path {
        write_json(p, &report)?;
    }
    Ok(())
}

fn all_databases(db_root: &Path) -> Result<Vec<String>> {
    let mut out: Vec<String> = std::fs::read_dir(db_root)
        .with_context(|| format!("listing {}", db_root.display()))?
        .filter_map(Result::ok)
        .filter_map(|e| e.file_name().into_string().ok())
        .filter(|name| database_path(db_root, name).is_file())
        .collect();
    out.sort();
    Ok(out)
}

fn cmd_describe(config: &PipelineConfig, db_root: &Path, dbs: &[String], out: &Path, force: bool) -> Result<()> {
    let templates = templates(config)?;
    let gateway = config.gateway()?;
    let dbs = if dbs.is_empty() { all_databases(db_root)? } else { dbs.to_vec() };
    std::fs::create_dir_all(out)?;
    let mut failures = 0;
    for db_id in dbs {
        let db_path = database_path(db_root, &db_id);
        let shipped = db_path.with_file_name("database_description");
        if shipped.is_dir() && !force {
            log::info!("{db_id}: has description files, skipped");
            continue;
        }
        let ctx = DatabaseContext::from_path(&db_path, &DescriptionSource::None, config)?;
        let path = generated_path(out, &db_id);
        let mut generated = if path.is_file() { read_generated(&path)? } else { GeneratedDescriptions::default() };
        for table in ctx.catalog.tables() {
            let done = generated.tables.contains_key(&table.name)
                || generated.columns.keys().any(|k| k.starts_with(&format!("{}.", table.name)));
            if done {
                continue;
            }
            match describe_table(&gateway, config, &templates, &ctx, &table.name) {
                Ok(Some(d)) => d.merge_into(&table.name, &mut generated),
                Ok(None) => {
                    log::warn!("{db_id}.{}: reply was not usable", table.name);
                    failures += 1;
                }
                Err(e) => {
                    log::warn!("{db_id}.{}: {e}", table.name);
                    failures += 1;
                }
            }
            write_json(&path, &generated)?;
        }
        write_json(&path, &generated)?;
        eprintln!("{db_id}: {} tables, {} columns described", generated.tables.len(), generated.columns.len());
    }
    if failures > 0 {
        bail!("{failures} tables could not be described");
    }
    Ok(())
}

fn cmd_replay_verify(config: &PipelineConfig, args: &GenArgs, expect: Option<&Path>) -> Result<()> {
    let mut config = config.clone();
    config.mode = GatewayMode::Replay;
    config.validate()?;
    let (_, traces, _) = generate(&config, args, BatchMode::Full)?;
    let misses: Vec<&str> = traces
        .iter()
        .filter(|t| t.has_issue(IssueKind::ReplayMiss))
        .map(|t| t.question_id.as_str())
        .collect();
    if !misses.is_empty() {
        bail!("replay misses in {} questions: {}", misses.len(), misses.join(", "));
    }
    if let Some(path) = expect {
        let expected = load_predictions(path)?;
        let mismatched: Vec<&str> = traces
            .iter()
            .filter(|t| {
                let want = expected.get(&t.question_id).map(|s| s.split_whitespace().collect::<Vec<_>>());
                want.as_deref() != Some(&t.final_sql.split_whitespace().collect::<Vec<_>>()[..])
            })
            .map(|t| t.question_id.as_str())
            .collect();
        if !mismatched.is_empty() {
            bail!("predictions differ from {} for: {}", path.display(), mismatched.join(", "));
        }
    }
    eprintln!("replay verified: {} questions", traces.len());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let result = build_config(cli.config.as_deref(), &cli.overrides).and_then(|config| match &cli.command {
        Command::Link(args) => cmd_link(&config, args),
        Command::Run(args) => generate(&config, args, BatchMode::Full).map(|_| ()),
        Command::Eval { data, predictions, traces, ves, timing_runs, price_input, price_output, report } => {
            let mut config = config.clone();
            if let Some(n) = timing_runs {
                config.timing_runs = *n;
                config.validate()?;
            }
            let prices = match (price_input, price_output) {
                (Some(i), Some(o)) => Some(PriceTable { input_per_million: *i, output_per_million: *o }),
                (None, None) => None,
                _ => bail!("--price-input and --price-output go together"),
            };
            cmd_eval(&config, data, predictions, traces.as_deref(), *ves, prices, report.as_deref())
        }
        Command::Describe { db_root, dbs, out, force } => cmd_describe(&config, db_root, dbs, out, *force),
        Command::ReplayVerify { gen, expect } => cmd_replay_verify(&config, gen, expect.as_deref()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
