//! Library side of the `handshake` command-line tool.

pub mod config;

use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use handshake::codec::{encode, TaggingRecord};
use handshake::data::{
    annotate_all, dataset_stats, load_schema, read_records, relation_names, truncate, BasicTokenizer, DatasetRecord,
    DatasetSplits, LoadedSplit, Mention, Numbered,
};
use handshake::decoder::decode_with_mode;
use handshake::eval::{bench_inference, subset_report, BenchConfig};
use handshake::model::{infer_batch, train, Checkpoint, TrainConfig};
use handshake::selftest;
use handshake::{Error, Mode, RelationSchema, SentenceAnnotation, Triple};
use log::{info, warn};
use serde::Serialize;
use serde_json::{json, Value};

use config::{Options, RunConfig};

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const OTHER: i32 = 1;
    pub const USAGE: i32 = 2;
    pub const IO: i32 = 3;
    pub const DATA: i32 = 4;
    pub const SCHEMA: i32 = 5;
    pub const NUMERIC: i32 = 6;
    pub const VERIFY: i32 = 7;
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Io { path: PathBuf, source: std::io::Error },
    Core(Error),
    Verify(String),
}

impl CliError {
    pub fn usage(msg: impl Into<String>) -> Self {
        CliError::Usage(msg.into())
    }

    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io { path: path.to_path_buf(), source }
    }

    pub fn code(&self) -> i32 {
        match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::Io { .. } => exit::IO,
            CliError::Verify(_) => exit::VERIFY,
            CliError::Core(e) => match e {
                Error::Io { .. } => exit::IO,
                Error::InvalidInput(_)
                | Error::InvalidIndex(_)
                | Error::Conflict(_)
                | Error::CorruptTagging(_)
                | Error::Alignment { .. }
                | Error::Parse { .. }
                | Error::Json(_) => exit::DATA,
                Error::Schema(_) => exit::SCHEMA,
                Error::Numeric { .. } | Error::Checkpoint(_) | Error::Shape(_) => exit::NUMERIC,
            },
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Verify(m) => write!(f, "verification failed: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Parser)]
#[command(name = "handshake", version, about = "Joint entity and relation extraction with handshaking tagging")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON file with option defaults; keys match the long flag names
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// More log output (repeatable)
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    pub verbose: u8,
    #[command(flatten)]
    pub options: Options,
}

#[derive(Debug, Clone, Copy, Subcommand)]
pub enum Command {
    /// Dataset records to tagging sequences (JSON Lines)
    Encode,
    /// Tagging sequences back to triples
    Decode,
    /// Split sizes, overlap patterns and triple-count buckets
    Stats,
    /// Train a model and write a checkpoint
    Train,
    /// Score a checkpoint on a dataset
    Eval,
    /// Parameter counts and inference latency
    Bench,
    /// Randomized property suites
    Selftest,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Encode => "encode",
            Command::Decode => "decode",
            Command::Stats => "stats",
            Command::Train => "train",
            Command::Eval => "eval",
            Command::Bench => "bench",
            Command::Selftest => "selftest",
        }
    }
}

/// Parses `argv` (including the program name), runs the command, and returns the exit code.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { exit::USAGE } else { exit::OK };
        }
    };
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
    match execute(&cli) {
        Ok(()) => exit::OK,
        Err(e) => {
            eprintln!("error: {e}");
            e.code()
        }
    }
}

pub fn execute(cli: &Cli) -> CliResult<()> {
    let cfg = RunConfig::resolve(cli.command.name(), &cli.options, cli.config.as_deref())?;
    match cli.command {
        Command::Encode => cmd_encode(&cfg),
        Command::Decode => cmd_decode(&cfg),
        Command::Stats => cmd_stats(&cfg),
        Command::Train => cmd_train(&cfg),
        Command::Eval => cmd_eval(&cfg),
        Command::Bench => cmd_bench(&cfg),
        Command::Selftest => cmd_selftest(&cfg),
    }
}

fn write_file(path: &Path, contents: &str) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

fn sidecar(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Report wrapped with the resolved configuration that produced it.
fn with_provenance<T: Serialize>(cfg: &RunConfig, report: &T) -> CliResult<String> {
    let doc = json!({
        "provenance": {
            "command": cfg.command,
            "version": env!("CARGO_PKG_VERSION"),
            "seed": cfg.seed(),
            "config": cfg,
        },
        "report": report,
    });
    serde_json::to_string_pretty(&doc).map_err(|e| CliError::Core(e.into()))
}

fn write_report<T: Serialize>(cfg: &RunConfig, path: &Path, report: &T) -> CliResult<()> {
    write_file(path, &with_provenance(cfg, report)?)
}

fn read_split(path: &Path) -> CliResult<Vec<Numbered<DatasetRecord>>> {
    Ok(read_records(path)?)
}

/// The `--schema` file, or relation names in first-seen order over `records`.
fn schema_for<'a>(cfg: &RunConfig, records: impl IntoIterator<Item = &'a DatasetRecord>) -> CliResult<RelationSchema> {
    match &cfg.options.schema {
        Some(path) => Ok(load_schema(path)?),
        None => {
            let names = relation_names(records);
            if names.is_empty() {
                return Err(CliError::usage("no relations in the data; pass --schema"));
            }
            warn!("no --schema given; using {} relation(s) found in the data", names.len());
            Ok(RelationSchema::new(names)?)
        }
    }
}

fn annotate_split(
    cfg: &RunConfig,
    records: &[Numbered<DatasetRecord>],
    schema: &RelationSchema,
) -> CliResult<LoadedSplit> {
    let split = annotate_all(records, cfg.standard(), schema, cfg.mode(), &BasicTokenizer)?;
    if !split.skipped.is_empty() {
        warn!("skipped {} record(s)", split.skipped.len());
    }
    Ok(split)
}

fn cmd_encode(cfg: &RunConfig) -> CliResult<()> {
    let data = cfg.required(&cfg.options.data, "data")?;
    let records = read_split(data)?;
    let schema = schema_for(cfg, records.iter().map(|(_, r)| r))?;
    let split = annotate_split(cfg, &records, &schema)?;
    let mode = cfg.mode();
    let mut lines = String::new();
    let mut conflicts = Vec::new();
    let mut self_relations = 0;
    for (i, ann) in split.annotations.iter().enumerate() {
        let enc = encode(ann, &schema, mode)?;
        if !enc.conflicts.is_empty() {
            conflicts.push(json!({ "sentence": i, "text": ann.text, "conflicts": enc.conflicts }));
        }
        self_relations += enc.self_relations.len();
        let line = json!({
            "text": ann.text,
            "tokens": ann.tokens,
            "char_spans": ann.char_spans,
            "tagging": TaggingRecord::from_tagging(&enc.tagging, &schema)?,
        });
        lines.push_str(&line.to_string());
        lines.push('\n');
    }
    let report = json!({
        "sentences": split.annotations.len(),
        "skipped": split.skipped,
        "self_relations": self_relations,
        "sentences_with_conflicts": conflicts.len(),
        "conflicts": conflicts,
    });
    println!(
        "encoded {} sentence(s), {} skipped, {} with resolved conflicts, {} self-relation(s)",
        split.annotations.len(),
        split.skipped.len(),
        conflicts.len(),
        self_relations
    );
    match &cfg.options.out {
        Some(out) => {
            write_file(out, &lines)?;
            write_report(cfg, &sidecar(out, ".report.json"), &report)?;
        }
        None => print!("{lines}"),
    }
    Ok(())
}

/// One decoded line: token spans always, surface mentions when the tokens are known.
#[derive(Serialize)]
struct DecodedLine {
    #[serde(skip_serializing_if = "Option::is_none")]
    text: Option<String>,
    spans: Vec<(Vec<usize>, String, Vec<usize>)>,
    #[serde(skip_serializing_if = "Option::is_none")]
    triple_list: Option<Vec<(Mention, String, Mention)>>,
}

fn decode_line(line: &str, mode: Mode) -> CliResult<DecodedLine> {
    let value: Value = serde_json::from_str(line).map_err(Error::from)?;
    let (record, text, char_spans) = match value.get("tagging") {
        Some(t) => {
            let record: TaggingRecord = serde_json::from_value(t.clone()).map_err(Error::from)?;
            let text = value.get("text").and_then(Value::as_str).map(str::to_string);
            let spans: Option<Vec<(usize, usize)>> = match value.get("char_spans") {
                Some(Value::Null) | None => None,
                Some(v) => Some(serde_json::from_value(v.clone()).map_err(Error::from)?),
            };
            (record, text, spans)
        }
        None => (serde_json::from_value(value).map_err(Error::from)?, None, None),
    };
    let (tagging, schema) = record.to_tagging(mode)?;
    let triples = decode_with_mode(&tagging, &schema, mode)?;
    let name = |t: &Triple| schema.name(t.relation).unwrap_or_default().to_string();
    let spans = triples
        .iter()
        .map(|t| (vec![t.subject.head(), t.subject.tail()], name(t), vec![t.object.head(), t.object.tail()]))
        .collect();
    let triple_list = match (&text, &char_spans) {
        (Some(text), Some(cs)) if cs.len() == tagging.n() => {
            let chars: Vec<char> = text.chars().collect();
            let mention = |s: handshake::TokenSpan| {
                let (start, end) = (cs[s.head()].0, cs[s.tail()].1);
                Mention::Located { text: chars[start..end].iter().collect(), char_span: [start, end] }
            };
            Some(triples.iter().map(|t| (mention(t.subject), name(t), mention(t.object))).collect())
        }
        _ => None,
    };
    Ok(DecodedLine { text, spans, triple_list })
}

fn cmd_decode(cfg: &RunConfig) -> CliResult<()> {
    let data = cfg.required(&cfg.options.data, "data")?;
    let content = fs::read_to_string(data).map_err(|e| CliError::io(data, e))?;
    let mode = cfg.mode();
    let mut out = String::new();
    let (mut sentences, mut triples) = (0, 0);
    for (i, line) in content.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let decoded = decode_line(line, mode).map_err(|e| match e {
            CliError::Core(err) => CliError::Core(Error::Parse { line: i + 1, message: err.to_string() }),
            other => other,
        })?;
        sentences += 1;
        triples += decoded.spans.len();
        out.push_str(&serde_json::to_string(&decoded).map_err(Error::from)?);
        out.push('\n');
    }
    match &cfg.options.out {
        Some(path) => {
            write_file(path, &out)?;
            write_report(cfg, &sidecar(path, ".report.json"), &json!({ "sentences": sentences, "triples": triples }))?;
            println!("decoded {triples} triple(s) from {sentences} sentence(s)");
        }
        None => print!("{out}"),
    }
    Ok(())
}

struct Splits {
    schema: RelationSchema,
    train: LoadedSplit,
    valid: LoadedSplit,
    test: LoadedSplit,
}

/// Loads whichever of `--train`, `--valid` and `--test` are given; `--data` stands in for
/// `--test`. Without `--schema`, the schema comes from all loaded records.
fn load_splits(cfg: &RunConfig) -> CliResult<Splits> {
    let o = &cfg.options;
    let test_path = o.test.as_ref().or(o.data.as_ref());
    let read = |p: Option<&PathBuf>| -> CliResult<Vec<Numbered<DatasetRecord>>> {
        p.map(|p| read_split(p)).transpose().map(Option::unwrap_or_default)
    };
    let (train, valid, test) = (read(o.train.as_ref())?, read(o.valid.as_ref())?, read(test_path)?);
    let schema = schema_for(cfg, train.iter().chain(&valid).chain(&test).map(|(_, r)| r))?;
    Ok(Splits {
        train: annotate_split(cfg, &train, &schema)?,
        valid: annotate_split(cfg, &valid, &schema)?,
        test: annotate_split(cfg, &test, &schema)?,
        schema,
    })
}

fn cmd_stats(cfg: &RunConfig) -> CliResult<()> {
    let o = &cfg.options;
    if o.train.is_none() && o.valid.is_none() && o.test.is_none() && o.data.is_none() {
        return Err(CliError::usage("`stats` requires at least one of --train, --valid, --test, --data"));
    }
    let s = load_splits(cfg)?;
    let splits = DatasetSplits { train: s.train.annotations, valid: s.valid.annotations, test: s.test.annotations };
    let report = dataset_stats(&splits, &s.schema);
    println!("{report}");
    if let Some(out) = &o.out {
        let skipped = s.train.skipped.len() + s.valid.skipped.len() + s.test.skipped.len();
        write_report(cfg, out, &json!({ "stats": report, "skipped": skipped }))?;
    }
    Ok(())
}

fn train_config(cfg: &RunConfig) -> TrainConfig {
    let d = TrainConfig::default();
    let o = &cfg.options;
    TrainConfig {
        learning_rate: o.lr.unwrap_or(d.learning_rate),
        epochs: o.epochs.unwrap_or(d.epochs),
        batch_size: o.batch_size.unwrap_or(d.batch_size),
        seed: cfg.seed(),
        optimizer: o.optimizer.map(Into::into).unwrap_or(d.optimizer),
        grad_check: o.grad_check.unwrap_or(d.grad_check),
        mode: cfg.mode(),
        stop_at_f1: None,
    }
}

fn cmd_train(cfg: &RunConfig) -> CliResult<()> {
    let o = &cfg.options;
    cfg.required(&o.train, "train")?;
    let ckpt_path = cfg.required(&o.ckpt, "ckpt")?;
    let tc = train_config(cfg);
    tc.validate()?;
    let s = load_splits(cfg)?;
    info!("training on {} sentence(s), selecting on {}", s.train.annotations.len(), s.valid.annotations.len());
    let outcome = train::<f64>(&s.train.annotations, &s.valid.annotations, &s.schema, cfg.model_config(), &tc)?;
    for r in &outcome.history {
        println!("epoch {:>4}  loss {:.6}  f1 {:.4}", r.epoch, r.loss, r.f1);
    }
    if let Some(epoch) = outcome.diverged {
        warn!("training diverged in epoch {epoch}; keeping the best finite parameters");
    }
    let ckpt = Checkpoint::new(s.schema.clone(), Some(tc), outcome.params)?;
    if let Some(dir) = ckpt_path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    ckpt.save(ckpt_path)?;
    let history = json!({
        "history": outcome.history,
        "best_epoch": outcome.best_epoch,
        "diverged": outcome.diverged,
        "grad_check": outcome.grad_check.as_ref().map(|g| json!({
            "coordinates": g.coordinates,
            "max_relative_error": g.max_relative_error,
            "passed": g.passed(),
        })),
    });
    write_report(cfg, &sidecar(ckpt_path, ".history.json"), &history)?;
    if let Some(out) = &o.out {
        write_report(cfg, out, &history)?;
    }
    println!("checkpoint written to {}", ckpt_path.display());
    if outcome.diverged.is_some() && outcome.best_epoch.is_none() {
        return Err(Error::Numeric { tensor: "loss".into() }.into());
    }
    Ok(())
}

/// Loads the checkpoint and checks any `--schema` against the one stored in it.
fn load_model(cfg: &RunConfig) -> CliResult<Checkpoint<f64>> {
    let path = cfg.required(&cfg.options.ckpt, "ckpt")?;
    let ckpt = Checkpoint::<f64>::load(path)?;
    if let Some(schema_path) = &cfg.options.schema {
        let given = load_schema(schema_path)?;
        if given != ckpt.schema {
            return Err(Error::Schema(format!(
                "--schema lists {:?}, checkpoint was trained on {:?}",
                given.names(),
                ckpt.schema.names()
            ))
            .into());
        }
    }
    Ok(ckpt)
}

fn eval_annotations(cfg: &RunConfig, schema: &RelationSchema) -> CliResult<Vec<SentenceAnnotation>> {
    let o = &cfg.options;
    let path = o
        .data
        .as_ref()
        .or(o.test.as_ref())
        .ok_or_else(|| CliError::usage(format!("`{}` requires --data", cfg.command)))?;
    let records = read_split(path)?;
    Ok(annotate_split(cfg, &records, schema)?.annotations)
}

fn cmd_eval(cfg: &RunConfig) -> CliResult<()> {
    let ckpt = load_model(cfg)?;
    let anns = eval_annotations(cfg, &ckpt.schema)?;
    let max_len = ckpt.params.config.max_len;
    let mut golds = Vec::with_capacity(anns.len());
    for a in &anns {
        let (t, dropped) = truncate(a, max_len)?;
        if dropped > 0 {
            warn!("{dropped} gold triple(s) beyond token {max_len} cannot be predicted");
        }
        golds.push(t);
    }
    let sentences: Vec<Vec<String>> = golds.iter().map(|a| a.tokens.clone()).collect();
    let preds: Vec<Vec<Triple>> = infer_batch(&sentences, &ckpt.params, &ckpt.schema, cfg.mode(), true)?
        .into_iter()
        .map(|s| s.into_iter().collect())
        .collect();
    let mut report = subset_report(&preds, &golds, cfg.match_mode())?;
    // overall scores use the untruncated gold set
    let full: Vec<&[Triple]> = anns.iter().map(|a| a.triples()).collect();
    report.overall = handshake::eval::micro_prf(&preds, &full, cfg.match_mode())?;
    if cfg.options.by_subset.unwrap_or(false) {
        println!("{report}");
    } else {
        let p = &report.overall;
        println!("match {}  precision {:.4}  recall {:.4}  f1 {:.4}", report.mode, p.precision, p.recall, p.f1);
    }
    if let Some(out) = &cfg.options.out {
        write_report(cfg, out, &report)?;
    }
    Ok(())
}

fn cmd_bench(cfg: &RunConfig) -> CliResult<()> {
    let ckpt = load_model(cfg)?;
    let anns = eval_annotations(cfg, &ckpt.schema)?;
    let d = BenchConfig::default();
    let o = &cfg.options;
    let bench = BenchConfig {
        batch_size: o.batch_size.unwrap_or(d.batch_size),
        warmup: o.warmup.unwrap_or(d.warmup),
        parallel: o.parallel.unwrap_or(d.parallel),
        mode: cfg.mode(),
    };
    let sentences: Vec<Vec<String>> = anns.iter().map(|a| a.tokens.clone()).collect();
    let (report, _) = bench_inference(&ckpt.params, &ckpt.schema, &sentences, &bench)?;
    println!("{report}");
    if let Some(out) = &o.out {
        write_report(cfg, out, &report)?;
    }
    Ok(())
}

fn cmd_selftest(cfg: &RunConfig) -> CliResult<()> {
    let o = &cfg.options;
    let results = selftest::run_all(cfg.seed(), o.cases.unwrap_or(10_000), o.instances.unwrap_or(5))?;
    let mut stdout = std::io::stdout().lock();
    for r in &results {
        let status = if r.passed() { "PASS" } else { "FAIL" };
        let _ = writeln!(
            stdout,
            "{status} {:<10} cases {:>8}  failures {:>4}  {:>6} ms  {:?}",
            r.name, r.cases, r.failures, r.millis, r.coverage
        );
        if let Some(f) = &r.first_failure {
            let _ = writeln!(stdout, "     first failure: {f}");
        }
    }
    if let Some(out) = &o.out {
        write_report(cfg, out, &results)?;
    }
    let failed: BTreeSet<&str> = results.iter().filter(|r| !r.passed()).map(|r| r.name.as_str()).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Verify(format!("suite(s) failed: {}", failed.into_iter().collect::<Vec<_>>().join(", "))))
    }
}
