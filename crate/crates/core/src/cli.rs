//! Command-line entry points: `train`, `eval`, `analyze` and `generate`.
//!
//! Human-readable reports go to stdout; every report is also emitted as a
//! JSON line, appended to `--report` when given and printed otherwise.
//! Exit codes: 0 success, 1 usage or configuration, 2 data, 3 divergence.

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone_model::ModelConfig;
use crate::data::{
    build_ad_testset, load_triples, synthetic_kg, write_ad_pairs, write_relation_meta, KindSource, LoadOptions, Split,
    SyntheticSpec, Triple, TripleStore,
};
use crate::error::{Error, Result};
use crate::eval::{ad_predict, append_jsonl, build_lca_queries, kg_completion, lca_predict, KgcOptions};
use crate::hierarchy_detect::{classify_all, format_table, krackhardt, LabeledGraph, DEFAULT_THRESHOLD};
use crate::training::{ensure_dim, load_checkpoint, save_checkpoint, train, MaskMode, TrainSchedule, Variant};

pub const THREADS_ENV: &str = "CONE_KG_THREADS";
/// Metadata file picked up from a data directory when no kind source is
/// given.
pub const META_FILE: &str = "relation_meta.tsv";

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_DIVERGENCE: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "cone-kg", version, about = "Hyperbolic cone embeddings for hierarchical knowledge graphs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model and write a checkpoint plus loss history.
    Train(TrainArgs),
    /// Evaluate a checkpoint.
    Eval(EvalArgs),
    /// Hierarchy statistics of a graph.
    Analyze(AnalyzeArgs),
    /// Write a synthetic dataset to disk.
    Generate(GenerateArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SyntheticPreset {
    /// 300 entities, two depth-4 forests, 100 sibling links, 10 % withheld.
    Default,
    /// 60 entities, two depth-3 forests, 20 sibling links, 10 % withheld.
    Small,
}

impl SyntheticPreset {
    pub fn spec(self) -> SyntheticSpec {
        match self {
            Self::Default => SyntheticSpec::default(),
            Self::Small => SyntheticSpec { entities: 60, depth: 3, sibling_links: 20, ..SyntheticSpec::default() },
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DataArgs {
    /// Directory with train.txt and optional valid.txt / test.txt.
    #[arg(long, conflicts_with = "synthetic")]
    pub data: Option<PathBuf>,
    /// Generate a synthetic graph instead of reading one.
    #[arg(long, value_enum)]
    pub synthetic: Option<SyntheticPreset>,
    /// Seed of the synthetic generator.
    #[arg(long, default_value_t = 0)]
    pub data_seed: u64,
    /// `relation<TAB>kind` metadata file.
    #[arg(long, conflicts_with = "detect_kinds")]
    pub meta: Option<PathBuf>,
    /// Classify relations by hierarchical-ness score (default threshold 1.1).
    #[arg(long, value_name = "THRESHOLD", num_args = 0..=1, default_missing_value = "1.1")]
    pub detect_kinds: Option<f64>,
}

#[derive(Debug, Clone, Args)]
pub struct ThreadArgs {
    /// Worker threads; falls back to CONE_KG_THREADS, then all cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Single worker thread.
    #[arg(long)]
    pub deterministic: bool,
}

#[derive(Debug, Clone, Args)]
pub struct TrainArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
    /// JSON file with any `RunConfig` fields; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub subspace_dim: Option<usize>,
    /// Aperture constant.
    #[arg(long)]
    pub k: Option<f64>,
    #[arg(long)]
    pub angle_weight: Option<f64>,
    #[arg(long)]
    pub adv_temperature: Option<f64>,
    #[arg(long)]
    pub neg: Option<usize>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Rotation-only warm-up epochs (default 30 % of --epochs).
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub validate_every: Option<usize>,
    #[arg(long, value_enum)]
    pub mask_mode: Option<MaskModeArg>,
    #[arg(long, value_enum)]
    pub variant: Option<VariantArg>,
    /// Checkpoint path.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Loss history (JSON lines); defaults to `<out>.history.jsonl`.
    #[arg(long)]
    pub history: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MaskModeArg {
    Overlapping,
    Orthogonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum VariantArg {
    Cone,
    Rotc,
}

#[derive(Debug, Clone, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub checkpoint: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub threads: ThreadArgs,
    /// Expected plane count; the checkpoint is refused if it differs.
    #[arg(long)]
    pub dim: Option<usize>,
    /// Seed for sampled test sets.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// JSON-lines report file (appended).
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub task: EvalTask,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SplitArg {
    Valid,
    Test,
}

#[derive(Debug, Clone, Subcommand)]
pub enum EvalTask {
    /// Filtered link prediction.
    Kgc {
        #[arg(long, value_enum, default_value = "test")]
        split: SplitArg,
        #[arg(long)]
        max_queries: Option<usize>,
    },
    /// Ancestor-descendant prediction.
    Ad {
        /// Percentage of positives that are inferred pairs.
        #[arg(long, value_parser = ["0", "50", "100"], default_value = "0")]
        inferred: String,
        /// Positive pairs; each gets one negative.
        #[arg(long, default_value_t = 1000)]
        pairs: usize,
        /// Also write the sampled pairs as TSV.
        #[arg(long)]
        write_pairs: Option<PathBuf>,
    },
    /// Lowest-common-ancestor prediction.
    Lca {
        /// Largest hierarchy gap between a query node and its LCA.
        #[arg(long, default_value_t = 3, value_parser = clap::value_parser!(u32).range(1..))]
        hops: u32,
        #[arg(long, default_value_t = 500)]
        queries: usize,
    },
}

#[derive(Debug, Clone, Args)]
pub struct AnalyzeArgs {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub report: Option<PathBuf>,
    #[command(subcommand)]
    pub task: AnalyzeTask,
}

#[derive(Debug, Clone, Subcommand)]
pub enum AnalyzeTask {
    /// Connectedness, hierarchy, efficiency and LUBedness of the whole graph.
    Krackhardt,
    /// Per-relation hierarchical-ness scores and classification.
    Relations {
        #[arg(long, default_value_t = DEFAULT_THRESHOLD)]
        threshold: f64,
        /// Write the classification as relation metadata.
        #[arg(long)]
        write_meta: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Args)]
pub struct GenerateArgs {
    #[arg(long, value_enum, default_value = "default")]
    pub preset: SyntheticPreset,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory (created if missing).
    #[arg(long)]
    pub out: PathBuf,
}

/// Every tunable of a training run. Absent fields fall through to the next
/// layer: flags, then config file, then defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dim: Option<usize>,
    pub subspace_dim: Option<usize>,
    pub k: Option<f64>,
    pub angle_weight: Option<f64>,
    pub adv_temperature: Option<f64>,
    pub negatives: Option<usize>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub lr: Option<f64>,
    pub seed: Option<u64>,
    pub pretrain_epochs: Option<usize>,
    pub pretrain_recover_factor: Option<f64>,
    pub validate_every: Option<usize>,
    pub valid_query_cap: Option<usize>,
    pub mask_mode: Option<MaskMode>,
    pub variant: Option<Variant>,
    pub threads: Option<usize>,
    pub deterministic: Option<bool>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub history: Option<PathBuf>,
}

macro_rules! overlay_fields {
    ($top:ident, $under:ident; $($f:ident),*) => {
        RunConfig { $($f: $top.$f.or($under.$f)),* }
    };
}

impl RunConfig {
    /// Field-wise `self` if present, else `under`.
    pub fn overlay(self, under: RunConfig) -> RunConfig {
        overlay_fields!(self, under; dim, subspace_dim, k, angle_weight, adv_temperature, negatives, epochs,
            batch_size, lr, seed, pretrain_epochs, pretrain_recover_factor, validate_every, valid_query_cap,
            mask_mode, variant, threads, deterministic, data, out, history)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(path)?)?)
    }

    pub fn model_config(&self) -> ModelConfig {
        let d = ModelConfig::default();
        ModelConfig {
            dim: self.dim.unwrap_or(d.dim),
            subspace_dim: self.subspace_dim.unwrap_or(d.subspace_dim),
            k: self.k.unwrap_or(d.k),
            angle_weight: self.angle_weight.unwrap_or(d.angle_weight),
            adv_temperature: self.adv_temperature.unwrap_or(d.adv_temperature),
            negatives: self.negatives.unwrap_or(d.negatives),
        }
    }

    pub fn schedule(&self) -> TrainSchedule {
        let d = TrainSchedule::default();
        TrainSchedule {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            lr: self.lr.unwrap_or(d.lr),
            seed: self.seed.unwrap_or(d.seed),
            pretrain_epochs: self.pretrain_epochs.or(d.pretrain_epochs),
            pretrain_recover_factor: self.pretrain_recover_factor.unwrap_or(d.pretrain_recover_factor),
            validate_every: self.validate_every.unwrap_or(d.validate_every),
            valid_query_cap: self.valid_query_cap.unwrap_or(d.valid_query_cap),
            mask_mode: self.mask_mode.unwrap_or(d.mask_mode),
            variant: self.variant.unwrap_or(d.variant),
            threads: resolve_threads(self.threads, self.deterministic.unwrap_or(false)),
        }
    }
}

impl TrainArgs {
    fn flags(&self) -> RunConfig {
        RunConfig {
            dim: self.dim,
            subspace_dim: self.subspace_dim,
            k: self.k,
            angle_weight: self.angle_weight,
            adv_temperature: self.adv_temperature,
            negatives: self.neg,
            epochs: self.epochs,
            batch_size: self.batch,
            lr: self.lr,
            seed: self.seed,
            pretrain_epochs: self.pretrain_epochs,
            validate_every: self.validate_every,
            mask_mode: self.mask_mode.map(|m| match m {
                MaskModeArg::Overlapping => MaskMode::Overlapping,
                MaskModeArg::Orthogonal => MaskMode::Orthogonal,
            }),
            variant: self.variant.map(|v| match v {
                VariantArg::Cone => Variant::Cone,
                VariantArg::Rotc => Variant::Rotc,
            }),
            threads: self.threads.threads,
            deterministic: self.threads.deterministic.then_some(true),
            data: self.data.data.clone(),
            out: self.out.clone(),
            history: self.history.clone(),
            ..RunConfig::default()
        }
    }
}

/// `--deterministic` wins, then the flag, then the environment; 0 means all
/// cores.
pub fn resolve_threads(flag: Option<usize>, deterministic: bool) -> usize {
    if deterministic {
        return 1;
    }
    flag.or_else(|| std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse().ok())).unwrap_or(0)
}

fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_USAGE,
        Error::Divergence { .. } => EXIT_DIVERGENCE,
        _ => EXIT_DATA,
    }
}

pub fn main() -> i32 {
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).try_init();
    run(std::env::args_os())
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match execute(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn execute(command: Command) -> Result<()> {
    match command {
        Command::Train(a) => cmd_train(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Analyze(a) => cmd_analyze(&a),
        Command::Generate(a) => cmd_generate(&a),
    }
}

/// Loads or generates the graph named by `args`.
pub fn load_data(args: &DataArgs) -> Result<TripleStore> {
    let kinds = |dir: Option<&Path>| match (&args.meta, args.detect_kinds) {
        (Some(m), _) => KindSource::Metadata(m.clone()),
        (None, Some(threshold)) => KindSource::Detect { threshold },
        (None, None) => match dir.map(|d| d.join(META_FILE)).filter(|p| p.is_file()) {
            Some(p) => KindSource::Metadata(p),
            None => KindSource::AllNonHierarchical,
        },
    };
    match (&args.data, args.synthetic) {
        (Some(dir), None) => {
            let opts = LoadOptions { kinds: kinds(Some(dir)), ..LoadOptions::default() };
            let (store, report) = load_triples(dir, &opts)?;
            if report.duplicates_dropped + report.unknown_skipped > 0 {
                log::warn!(
                    "dropped {} duplicate triples, skipped {} lines with unknown names",
                    report.duplicates_dropped,
                    report.unknown_skipped
                );
            }
            Ok(store)
        }
        (None, Some(preset)) => {
            let mut rng = ChaCha8Rng::seed_from_u64(args.data_seed);
            let mut store = synthetic_kg(&preset.spec(), &mut rng)?.store;
            match kinds(None) {
                KindSource::Metadata(path) => {
                    for (name, kind) in crate::data::read_relation_meta(&path)? {
                        let r = store.vocab.relation_id(&name).ok_or(Error::UnknownRelation(name))?;
                        store.set_kind(r, kind);
                    }
                }
                KindSource::Detect { threshold } => {
                    for row in classify_all(&store, threshold)? {
                        store.set_kind(row.relation, row.scores.kind);
                    }
                }
                KindSource::AllNonHierarchical => {}
            }
            Ok(store)
        }
        _ => Err(Error::Config("exactly one of --data or --synthetic is required".into())),
    }
}

fn init_global_pool(threads: usize) {
    // A second call in the same process keeps the first pool.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global();
}

/// Prints `text`, then emits the JSON line to `report` or stdout.
fn emit<T: Serialize>(text: &str, kind: &str, value: &T, report: Option<&Path>) -> Result<()> {
    let mut out = std::io::stdout().lock();
    write!(out, "{text}")?;
    match report {
        Some(path) => append_jsonl(path, kind, value)?,
        None => {
            let mut obj = serde_json::to_value(value)?;
            if let serde_json::Value::Object(m) = &mut obj {
                m.insert("report".into(), kind.into());
            }
            writeln!(out, "{}", serde_json::to_string(&obj)?)?;
        }
    }
    Ok(())
}

pub fn cmd_train(args: &TrainArgs) -> Result<()> {
    let file = match &args.config {
        Some(p) => RunConfig::from_file(p)?,
        None => RunConfig::default(),
    };
    let cfg = args.flags().overlay(file);
    let mut data = args.data.clone();
    if data.synthetic.is_none() {
        data.data = cfg.data.clone();
    }
    let store = load_data(&data)?;
    let model_cfg = cfg.model_config();
    let schedule = cfg.schedule();
    init_global_pool(schedule.threads);
    let out = cfg.out.clone().unwrap_or_else(|| PathBuf::from("cone.ckpt"));
    let history_path = cfg.history.clone().unwrap_or_else(|| {
        let mut s = out.clone().into_os_string();
        s.push(".history.jsonl");
        PathBuf::from(s)
    });
    log::info!(
        "training on {} entities, {} relations, {} train triples",
        store.num_entities(),
        store.vocab.num_base_relations(),
        store.train.len()
    );
    let outcome = train(&store, model_cfg, &schedule)?;
    save_checkpoint(&outcome.model, &out)?;

    let mut lines = String::new();
    for rec in &outcome.history.epochs {
        lines.push_str(&serde_json::to_string(rec)?);
        lines.push('\n');
    }
    for v in &outcome.history.validation {
        let mut obj = serde_json::to_value(v)?;
        if let serde_json::Value::Object(m) = &mut obj {
            m.insert("phase".into(), "validation".into());
        }
        lines.push_str(&serde_json::to_string(&obj)?);
        lines.push('\n');
    }
    fs::write(&history_path, lines)?;

    let last = outcome.history.epochs.last();
    println!(
        "wrote {} ({} epochs, final loss {}, best epoch {})",
        out.display(),
        outcome.history.epochs.len(),
        last.map_or("n/a".to_string(), |r| format!("{:.6}", r.loss)),
        outcome.history.best_epoch.map_or("n/a".to_string(), |e| e.to_string())
    );
    Ok(())
}

pub fn cmd_eval(args: &EvalArgs) -> Result<()> {
    let model = load_checkpoint(&args.checkpoint)?;
    ensure_dim(&model, args.dim)?;
    init_global_pool(resolve_threads(args.threads.threads, args.threads.deterministic));
    let mut store = load_data(&args.data)?;
    // Relation kinds are part of the model.
    for r in 0..store.vocab.num_base_relations() {
        if let Some(m) = model.vocab.relation_id(&store.vocab.relation(r).name) {
            store.set_kind(r, model.vocab.kind(m));
        }
    }
    let report = args.report.as_deref();
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    match &args.task {
        EvalTask::Kgc { split, max_queries } => {
            let split = match split {
                SplitArg::Valid => Split::Valid,
                SplitArg::Test => Split::Test,
            };
            let r = kg_completion(&model, &store, split, &KgcOptions { max_queries: *max_queries })?;
            emit(&r.to_string(), "kgc", &r, report)
        }
        EvalTask::Ad { inferred, pairs, write_pairs } => {
            let fraction = inferred.parse::<f64>().map_err(|e| Error::Config(e.to_string()))? / 100.0;
            let set = build_ad_testset(&store, fraction, *pairs, &mut rng)?;
            if let Some(p) = write_pairs {
                write_ad_pairs(p, &store, &set)?;
            }
            let r = ad_predict(&model, &set)?;
            emit(&r.to_string(), "ad", &r, report)
        }
        EvalTask::Lca { hops, queries } => {
            let qs = build_lca_queries(&store, *queries, *hops, &mut rng)?;
            let r = lca_predict(&model, &store, &qs)?;
            emit(&r.to_string(), "lca", &r, report)
        }
    }
}

pub fn cmd_analyze(args: &AnalyzeArgs) -> Result<()> {
    let mut store = load_data(&args.data)?;
    let report = args.report.as_deref();
    match &args.task {
        AnalyzeTask::Krackhardt => {
            let k = krackhardt(&LabeledGraph::from_store(&store))?;
            emit(&format!("{k}\n"), "krackhardt", &k, report)
        }
        AnalyzeTask::Relations { threshold, write_meta } => {
            let rows = classify_all(&store, *threshold)?;
            let hier = rows.iter().filter(|r| r.scores.kind.is_hierarchical()).count();
            let text = format!("{}{hier} of {} relations hierarchical\n", format_table(&rows), rows.len());
            emit(&text, "relations", &rows, report)?;
            if let Some(path) = write_meta {
                for row in &rows {
                    store.set_kind(row.relation, row.scores.kind);
                }
                write_relation_meta(path, &store.vocab)?;
            }
            Ok(())
        }
    }
}

fn write_split(path: &Path, store: &TripleStore, triples: &[Triple]) -> Result<()> {
    let v = &store.vocab;
    let mut s = String::new();
    for t in triples {
        s.push_str(&format!("{}\t{}\t{}\n", v.entity_name(t.head), v.relation(t.relation).name, v.entity_name(t.tail)));
    }
    fs::write(path, s)?;
    Ok(())
}

pub fn cmd_generate(args: &GenerateArgs) -> Result<()> {
    let kg = synthetic_kg(&args.preset.spec(), &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    fs::create_dir_all(&args.out)?;
    let s = &kg.store;
    write_split(&args.out.join("train.txt"), s, &s.train)?;
    write_split(&args.out.join("valid.txt"), s, &s.valid)?;
    write_split(&args.out.join("test.txt"), s, &s.test)?;
    write_relation_meta(&args.out.join(META_FILE), &s.vocab)?;
    println!(
        "wrote {} ({} entities; {}/{}/{} train/valid/test triples)",
        args.out.display(),
        s.num_entities(),
        s.train.len(),
        s.valid.len(),
        s.test.len()
    );
    Ok(())
}
