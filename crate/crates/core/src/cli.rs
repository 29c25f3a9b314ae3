//! The `attrpat` command line: one subcommand per pipeline stage.
//!
//! Every subcommand reads a JSON run config and the artifacts of earlier
//! stages, and fails with exit code 3 naming the missing file rather than
//! recomputing it.

use std::collections::{BTreeMap, BTreeSet};
use std::ffi::OsString;
use std::fmt::Write as _;
use std::fs;
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::eval::{density_stats, evaluate, read_reports, top_k, write_reports, EvalConfig, ReportLine};
use crate::miner::{
    default_min_support, filter_loose, mine_frequent, pattern_file_name, write_patterns, MinerConfig,
    MAX_PATTERN_NODES,
};
use crate::model::{Model, ModelConfig, SessionInput};
use crate::retrieval::{PatternStore, RetrievalConfig};
use crate::sessions::{
    core_filter, load_catalog, parse_sessions, read_sessions, resolve_record, session_layer, split_by_day,
    write_catalog, write_sessions, ItemCatalog, Session, SessionRecord, DEFAULT_MAX_LEN,
};
use crate::training::{prepare_examples, train, TrainConfig};
use crate::{Error, Result};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_MISSING: i32 = 3;
pub const EXIT_DATA: i32 = 4;

pub const CHECKPOINT_STEM: &str = "model";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Paths {
    /// Raw session log read by `ingest`.
    pub sessions: PathBuf,
    /// Catalog and split files written by `ingest`.
    pub data_dir: PathBuf,
    pub patterns_dir: PathBuf,
    pub checkpoints_dir: PathBuf,
    pub reports_dir: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            sessions: "sessions.jsonl".into(),
            data_dir: "data".into(),
            patterns_dir: "patterns".into(),
            checkpoints_dir: "checkpoints".into(),
            reports_dir: "reports".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IngestConfig {
    pub min_days: usize,
    pub valid_days: i64,
    pub test_days: i64,
    pub max_len: usize,
}

impl Default for IngestConfig {
    fn default() -> Self {
        IngestConfig {
            min_days: 20,
            valid_days: 7,
            test_days: 7,
            max_len: DEFAULT_MAX_LEN,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MineConfig {
    pub max_nodes: usize,
    /// Derived from the training set size when absent.
    pub min_support: Option<usize>,
    pub require_cycle: bool,
}

impl Default for MineConfig {
    fn default() -> Self {
        MineConfig {
            max_nodes: MAX_PATTERN_NODES,
            min_support: None,
            require_cycle: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub paths: Paths,
    /// Attribute types used by every stage. Empty runs the model without
    /// pattern memory.
    pub attribute_types: Vec<String>,
    pub ingest: IngestConfig,
    pub miner: MineConfig,
    pub retrieval: RetrievalConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub eval: EvalConfig,
    pub seed: u64,
    pub workers: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            paths: Paths::default(),
            attribute_types: vec!["category".into()],
            ingest: IngestConfig::default(),
            miner: MineConfig::default(),
            retrieval: RetrievalConfig::default(),
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            eval: EvalConfig::default(),
            seed: 0,
            workers: 1,
        }
    }
}

impl RunConfig {
    /// Parses a config file; relative paths resolve against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| match e.kind() {
            io::ErrorKind::NotFound => Error::Config(format!("config file {} not found", path.display())),
            _ => Error::Io(e),
        })?;
        let mut cfg: RunConfig = serde_json::from_str(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [
            &mut cfg.paths.sessions,
            &mut cfg.paths.data_dir,
            &mut cfg.paths.patterns_dir,
            &mut cfg.paths.checkpoints_dir,
            &mut cfg.paths.reports_dir,
        ] {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.eval.validate()?;
        if self.workers == 0 {
            return Err(Error::Config("workers must be at least 1".into()));
        }
        if self.ingest.max_len == 0 || self.ingest.max_len > self.model.max_len {
            return Err(Error::Config(format!(
                "ingest.max_len {} must be in 1..={}",
                self.ingest.max_len, self.model.max_len
            )));
        }
        let unique: BTreeSet<&String> = self.attribute_types.iter().collect();
        if unique.len() != self.attribute_types.len() {
            return Err(Error::Config("attribute_types has duplicates".into()));
        }
        if self.miner.min_support == Some(0) || self.miner.max_nodes > MAX_PATTERN_NODES {
            return Err(Error::Config("miner.min_support must be >= 1 and max_nodes <= 4".into()));
        }
        Ok(())
    }

    fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.seed,
            ..self.train.clone()
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "attrpat", version, about = "Session recommendation with attribute pattern memory")]
pub struct Cli {
    /// Run config (JSON).
    #[arg(long, short, global = true, default_value = "attrpat.json")]
    pub config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides the number of training epochs.
    #[arg(long, global = true)]
    pub epochs: Option<usize>,
    /// Overrides the worker thread count.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Subcommand)]
pub enum Command {
    /// Filter and split the raw session log, writing the catalog and splits.
    Ingest,
    /// Mine frequent patterns per attribute type from the training split.
    Mine,
    /// Load and check the pattern stores.
    Index,
    /// Train the model, writing a checkpoint and the epoch log.
    Train,
    /// Evaluate on the test split and print the summary table.
    Eval,
    /// Score one session (a JSON line from --input or stdin).
    Recommend {
        #[arg(long, short, default_value_t = 10)]
        k: usize,
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Write graph density statistics of the training split.
    Stats,
}

/// Exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_) => EXIT_CONFIG,
        Error::MissingDependency { .. } => EXIT_MISSING,
        _ => EXIT_DATA,
    }
}

/// Parses arguments, runs the subcommand and returns the exit code.
pub fn main_with<I, T>(args: I, out: &mut (dyn Write + Send), err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
            let _ = if code == EXIT_OK { write!(out, "{e}") } else { write!(err, "{e}") };
            return code;
        }
    };
    let result = RunConfig::load(&cli.config).and_then(|mut cfg| {
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(e) = cli.epochs {
            cfg.train.epochs = e;
        }
        if let Some(w) = cli.workers {
            cfg.workers = w;
        }
        cfg.validate()?;
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.workers)
            .build()
            .map_err(|e| Error::Config(e.to_string()))?;
        pool.install(|| run(&cli.command, &cfg, out))
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            exit_code(&e)
        }
    }
}

fn missing(path: &Path, hint: &str) -> Error {
    Error::MissingDependency {
        path: path.to_owned(),
        hint: hint.into(),
    }
}

fn require(path: &Path, hint: &str) -> Result<()> {
    if path.exists() {
        Ok(())
    } else {
        Err(missing(path, hint))
    }
}

pub fn catalog_path(cfg: &RunConfig) -> PathBuf {
    cfg.paths.data_dir.join("catalog.jsonl")
}

pub fn split_path(cfg: &RunConfig, split: &str) -> PathBuf {
    cfg.paths.data_dir.join(format!("{split}.jsonl"))
}

fn load_catalog_dep(cfg: &RunConfig) -> Result<ItemCatalog> {
    let path = catalog_path(cfg);
    require(&path, "run `ingest` first")?;
    load_catalog(&path, &cfg.attribute_types)
}

fn load_split(cfg: &RunConfig, catalog: &ItemCatalog, split: &str) -> Result<Vec<Session>> {
    let path = split_path(cfg, split);
    require(&path, "run `ingest` first")?;
    read_sessions(&path, catalog)
}

fn load_stores(cfg: &RunConfig) -> Result<Vec<PatternStore>> {
    cfg.attribute_types
        .iter()
        .map(|t| {
            let path = cfg.paths.patterns_dir.join(pattern_file_name(t));
            require(&path, "run `mine` first")?;
            PatternStore::load(&cfg.paths.patterns_dir, t)
        })
        .collect()
}

fn load_model(cfg: &RunConfig) -> Result<Model> {
    let model = Model::load(&cfg.paths.checkpoints_dir, CHECKPOINT_STEM, cfg.model.clone())?;
    if model.attribute_types() != cfg.attribute_types.as_slice() {
        return Err(Error::Config(format!(
            "checkpoint was trained with attribute types {:?}, config has {:?}",
            model.attribute_types(),
            cfg.attribute_types
        )));
    }
    Ok(model)
}

/// Runs one subcommand against an already validated config.
pub fn run(command: &Command, cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<()> {
    match command {
        Command::Ingest => ingest(cfg, out),
        Command::Mine => mine(cfg, out),
        Command::Index => index(cfg, out),
        Command::Train => train_cmd(cfg, out),
        Command::Eval => eval_cmd(cfg, out),
        Command::Recommend { k, input } => {
            let line = match input {
                Some(p) => fs::read_to_string(p)?,
                None => {
                    let mut s = String::new();
                    io::stdin().read_to_string(&mut s)?;
                    s
                }
            };
            recommend(cfg, &line, *k, out)
        }
        Command::Stats => stats(cfg, out),
    }
}

pub fn ingest(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<()> {
    let raw = &cfg.paths.sessions;
    require(raw, "point paths.sessions at a session log")?;
    let (catalog, sessions) = parse_sessions(fs::File::open(raw)?, &cfg.attribute_types, cfg.ingest.max_len)?;
    let filtered = core_filter(&sessions, cfg.ingest.min_days);
    if filtered.is_empty() {
        return Err(Error::Input(format!(
            "no session survives core filtering with min_days = {}",
            cfg.ingest.min_days
        )));
    }
    let split = split_by_day(&filtered, cfg.ingest.valid_days, cfg.ingest.test_days)?;
    let keep: BTreeSet<usize> = split.train.iter().flat_map(|s| s.items.iter().copied()).collect();
    let (catalog, remap) = catalog.restrict(&keep);
    let renumber = |ss: &[Session]| -> Vec<Session> {
        ss.iter()
            .map(|s| Session {
                id: s.id.clone(),
                day: s.day,
                items: s.items.iter().map(|i| remap[i]).collect(),
            })
            .collect()
    };
    fs::create_dir_all(&cfg.paths.data_dir)?;
    write_catalog(&catalog_path(cfg), &catalog)?;
    for (name, part) in [("train", &split.train), ("valid", &split.valid), ("test", &split.test)] {
        write_sessions(&split_path(cfg, name), &renumber(part), &catalog)?;
    }
    writeln!(
        out,
        "ingested {} sessions ({} after filtering): train {}, valid {}, test {}, {} items",
        sessions.len(),
        filtered.len(),
        split.train.len(),
        split.valid.len(),
        split.test.len(),
        catalog.len()
    )?;
    Ok(())
}

pub fn mine(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<()> {
    let catalog = load_catalog_dep(cfg)?;
    let train = load_split(cfg, &catalog, "train")?;
    let miner = MinerConfig {
        max_nodes: cfg.miner.max_nodes,
        min_support: cfg.miner.min_support.unwrap_or_else(|| default_min_support(train.len())),
        require_cycle: cfg.miner.require_cycle,
        workers: cfg.workers,
    };
    fs::create_dir_all(&cfg.paths.patterns_dir)?;
    for (m, t) in cfg.attribute_types.iter().enumerate() {
        let graphs: Vec<_> = train.iter().map(|s| session_layer(&s.items, m, &catalog)).collect();
        let mined = mine_frequent(&graphs, &miner)?;
        let kept = filter_loose(&mined);
        write_patterns(&cfg.paths.patterns_dir.join(pattern_file_name(t)), &kept)?;
        writeln!(
            out,
            "{t}: {} frequent patterns, {} kept (min_support {})",
            mined.len(),
            kept.len(),
            miner.min_support
        )?;
    }
    Ok(())
}

pub fn index(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<()> {
    for store in load_stores(cfg)? {
        store.validate()?;
        writeln!(
            out,
            "{}: {} patterns over {} labels",
            store.attribute_type(),
            store.len(),
            store.label_count()
        )?;
    }
    Ok(())
}

pub fn train_cmd(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<()> {
    let catalog = load_catalog_dep(cfg)?;
    let train_sessions = load_split(cfg, &catalog, "train")?;
    let valid_sessions = load_split(cfg, &catalog, "valid")?;
    let stores = load_stores(cfg)?;
    let vocab: Vec<usize> = (0..catalog.num_attributes()).map(|m| catalog.vocab(m).len()).collect();
    let model = Model::new(
        cfg.model.clone(),
        cfg.attribute_types.clone(),
        catalog.len(),
        &vocab,
        cfg.seed,
    )?;
    let tc = cfg.train_config();
    let prep = |ss: &[Session]| {
        prepare_examples(
            ss,
            &catalog,
            &stores,
            &cfg.retrieval,
            cfg.model.max_neighbors,
            tc.prefix_expansion,
        )
    };
    let train_set = prep(&train_sessions)?;
    let valid_set = prep(&valid_sessions)?;
    let outcome = train(model, train_set, &valid_set, &tc)?;
    fs::create_dir_all(&cfg.paths.checkpoints_dir)?;
    outcome.model.save(&cfg.paths.checkpoints_dir, CHECKPOINT_STEM)?;
    let mut log = String::new();
    for e in &outcome.log {
        log.push_str(&serde_json::to_string(e)?);
        log.push('\n');
        writeln!(
            out,
            "epoch {:>3}  loss {:.4}  valid MRR@10 {:.4}  lr {:.2e}",
            e.epoch, e.train_loss, e.valid_mrr10, e.lr
        )?;
    }
    fs::write(cfg.paths.checkpoints_dir.join("metrics.jsonl"), log)?;
    writeln!(out, "kept epoch {}", outcome.best_epoch)?;
    Ok(())
}

pub fn eval_cmd(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<()> {
    let model = load_model(cfg)?;
    let catalog = load_catalog_dep(cfg)?;
    let test = load_split(cfg, &catalog, "test")?;
    let stores = load_stores(cfg)?;
    let lines = evaluate(&model, &test, &catalog, &stores, &cfg.retrieval, &cfg.eval)?;
    fs::create_dir_all(&cfg.paths.reports_dir)?;
    write_reports(&cfg.paths.reports_dir.join("eval.jsonl"), &lines)?;
    emit_report(&cfg.paths.reports_dir, out)
}

/// Parses one session line and prints the `k` best items with scores.
pub fn recommend(cfg: &RunConfig, line: &str, k: usize, out: &mut (dyn Write + Send)) -> Result<()> {
    if k == 0 {
        return Err(Error::Config("k must be at least 1".into()));
    }
    let model = load_model(cfg)?;
    let catalog = load_catalog_dep(cfg)?;
    let stores = load_stores(cfg)?;
    let line = line
        .lines()
        .find(|l| !l.trim().is_empty())
        .ok_or_else(|| Error::Input("no session line given".into()))?;
    let rec: SessionRecord = serde_json::from_str(line).map_err(|e| Error::Parse {
        line: 1,
        msg: e.to_string(),
    })?;
    let mut session = resolve_record(rec, &catalog)?;
    session.truncate_to_recent(cfg.model.max_len);
    let input = SessionInput::build(
        &session.items,
        &catalog,
        &stores,
        &cfg.retrieval,
        cfg.model.max_neighbors,
    )?;
    let scores = model.score(&input)?;
    for v in top_k(&scores, k) {
        writeln!(out, "{}\t{:.6}", catalog.item_id(v), scores[v])?;
    }
    Ok(())
}

pub fn stats(cfg: &RunConfig, out: &mut (dyn Write + Send)) -> Result<()> {
    let catalog = load_catalog_dep(cfg)?;
    let train = load_split(cfg, &catalog, "train")?;
    let mut patterns = Vec::new();
    for t in &cfg.attribute_types {
        let path = cfg.paths.patterns_dir.join(pattern_file_name(t));
        if path.exists() {
            patterns.extend(PatternStore::load(&cfg.paths.patterns_dir, t)?.patterns().iter().cloned());
        }
    }
    let report = density_stats(&train, &patterns)?;
    fs::create_dir_all(&cfg.paths.reports_dir)?;
    let json = serde_json::to_string_pretty(&report)?;
    fs::write(cfg.paths.reports_dir.join("density.json"), format!("{json}\n"))?;
    writeln!(out, "{json}")?;
    Ok(())
}

fn row_label(l: &ReportLine) -> String {
    match (&l.attribute, l.n) {
        (Some(a), _) => format!("{}:{a}", l.protocol),
        (None, Some(n)) => format!("{}:n={n}", l.protocol),
        _ => l.protocol.clone(),
    }
}

/// Metrics table: one row per protocol (qualified by attribute type or
/// horizon), one column per metric and cutoff, 4 decimals.
pub fn render_report(lines: &[ReportLine]) -> String {
    let mut ks: Vec<usize> = lines.iter().map(|l| l.k).collect::<BTreeSet<_>>().into_iter().collect();
    ks.sort_unstable();
    let mut rows: Vec<(String, BTreeMap<usize, &ReportLine>)> = Vec::new();
    for l in lines {
        let label = row_label(l);
        match rows.iter_mut().find(|(r, _)| *r == label) {
            Some((_, cells)) => {
                cells.insert(l.k, l);
            }
            None => rows.push((label, BTreeMap::from([(l.k, l)]))),
        }
    }
    let mut header = vec!["protocol".to_string()];
    for k in &ks {
        header.extend([format!("Hits@{k}"), format!("NDCG@{k}"), format!("MRR@{k}")]);
    }
    let mut table = vec![header];
    for (label, cells) in &rows {
        let mut row = vec![label.clone()];
        for k in &ks {
            match cells.get(k) {
                Some(l) => row.extend([l.hits, l.ndcg, l.mrr].map(|x| format!("{x:.4}"))),
                None => row.extend(["-", "-", "-"].map(String::from)),
            }
        }
        table.push(row);
    }
    let widths: Vec<usize> = (0..table[0].len())
        .map(|c| table.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut s = String::new();
    for row in &table {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (x, w))| if c == 0 { format!("{x:<w$}") } else { format!("{x:>w$}") })
            .collect();
        let _ = writeln!(s, "{}", cells.join("  ").trim_end());
    }
    s
}

/// Prints the table for `reports_dir/eval.jsonl` and saves it as
/// `summary.txt`.
pub fn emit_report(reports_dir: &Path, out: &mut (dyn Write + Send)) -> Result<()> {
    let lines = read_reports(&reports_dir.join("eval.jsonl"))?;
    if lines.is_empty() {
        writeln!(out, "no report lines in {}", reports_dir.display())?;
        return Ok(());
    }
    let table = render_report(&lines);
    fs::write(reports_dir.join("summary.txt"), &table)?;
    out.write_all(table.as_bytes())?;
    Ok(())
}
