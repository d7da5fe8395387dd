//! The `postspec` command line.
//!
//! Subcommands: `specialise`, `train-map`, `apply`, `evaluate`, `pipeline`
//! and `sweep`. Options may also come from a `key=value` file given with
//! `--config`; flags on the command line take precedence over the file.
//! Every run ends with a JSON summary holding the full effective
//! configuration, written to `--summary` or to stderr.

use std::collections::HashSet;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use log::{error, info};
use serde::Serialize;
use serde_json::{json, Value};

use crate::attract_repel::{ar_specialise, retrofit_specialise, ArConfig};
use crate::constraints::{
    filter_to_vocab, holdout_filter, load_constraints_with, partition_vocab, ConstraintOptions, ConstraintSet,
};
use crate::embedding::{load_embeddings, save_embeddings, EmbeddingSpace};
use crate::error::{Error, Result};
use crate::evaluation::{depth_sweep, eval_vocabulary, evaluate_all, load_eval, EvalDataset, EvalReport};
use crate::io::write_atomically;
use crate::mapping::{
    apply_mapping, load_model, save_model, train_mapping, MapTrainConfig, ModelKind, Objective, Reduction,
};
use crate::optim::AdamConfig;
use crate::pipeline::{run_pipeline, PipelineConfig, PostProcessor};

#[derive(Debug, Clone, Parser, Serialize)]
#[command(name = "postspec", version, about = "Word-vector specialisation with post-specialisation of unseen words")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GlobalArgs {
    /// Seed for every random stream of the run.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads for read-only stages (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[arg(long, global = true, default_value = "info")]
    pub log_level: String,
    /// key=value file with default option values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Where to write the JSON run summary (default: stderr).
    #[arg(long, global = true)]
    pub summary: Option<PathBuf>,
}

#[derive(Debug, Clone, Subcommand, Serialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Specialise the seen words with ATTRACT-REPEL or retrofitting.
    Specialise(SpecialiseArgs),
    /// Learn the mapping from original to specialised vectors.
    TrainMap(TrainMapArgs),
    /// Apply a trained mapping to a vector space.
    Apply(ApplyArgs),
    /// Spearman's rho of a space on word-similarity datasets.
    Evaluate(EvaluateArgs),
    /// Specialise, learn the mapping and map the unseen words.
    Pipeline(PipelineArgs),
    /// Pipeline runs over several network depths.
    Sweep(SweepArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct VectorArgs {
    #[arg(long)]
    pub vectors: PathBuf,
    /// Read at most this many words.
    #[arg(long)]
    pub limit: Option<usize>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ConstraintArgs {
    #[arg(long)]
    pub attract: PathBuf,
    #[arg(long)]
    pub repel: PathBuf,
    /// Prefix removed from every constraint token (e.g. `en_`).
    #[arg(long)]
    pub strip_prefix: Option<String>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OptionalConstraintArgs {
    #[arg(long, requires = "repel")]
    pub attract: Option<PathBuf>,
    #[arg(long, requires = "attract")]
    pub repel: Option<PathBuf>,
    #[arg(long)]
    pub strip_prefix: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Ar,
    Retrofit,
}

/// Post-processor options shared by `specialise`, `pipeline` and `sweep`.
#[derive(Debug, Clone, Args, Serialize)]
pub struct PostProcessorArgs {
    #[arg(long, value_enum, default_value_t = Method::Ar)]
    pub method: Method,
    #[arg(long)]
    pub delta_att: Option<f64>,
    #[arg(long)]
    pub delta_rep: Option<f64>,
    #[arg(long)]
    pub lambda_reg: Option<f64>,
    /// Attract and repel mini-batch size.
    #[arg(long)]
    pub batch: Option<usize>,
    /// Retrofitting rounds.
    #[arg(long, default_value_t = 10)]
    pub retrofit_iterations: usize,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SpecialiseArgs {
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub post: PostProcessorArgs,
    /// ATTRACT-REPEL epochs.
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Adagrad step size.
    #[arg(long)]
    pub lr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KindArg {
    Linear,
    Dffn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ObjectiveArg {
    Mse,
    Mm,
    Hinge,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value_t = KindArg::Dffn)]
    pub kind: KindArg,
    /// Hidden layers of the feed-forward model.
    #[arg(long, default_value_t = 5)]
    pub hidden: usize,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
}

impl ModelArgs {
    fn kind(&self) -> ModelKind {
        match self.kind {
            KindArg::Linear => ModelKind::Linear,
            KindArg::Dffn => ModelKind::Dffn {
                hidden: self.hidden,
                width: self.width,
            },
        }
    }
}

/// Mapping training options.
#[derive(Debug, Clone, Args, Serialize)]
pub struct MapArgs {
    #[arg(long, value_enum, default_value_t = ObjectiveArg::Mm)]
    pub objective: ObjectiveArg,
    /// Negatives per example for the max-margin objective.
    #[arg(long, default_value_t = 25)]
    pub k: usize,
    #[arg(long, default_value_t = 0.6)]
    pub margin: f64,
    #[arg(long, default_value_t = 100)]
    pub epochs: usize,
    #[arg(long, default_value_t = 10)]
    pub patience: usize,
    #[arg(long, default_value_t = 0.1)]
    pub validation_fraction: f64,
    #[arg(long, default_value_t = 128)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 1e-3)]
    pub adam_lr: f64,
    #[arg(long, default_value_t = 0.9)]
    pub adam_beta1: f64,
    #[arg(long, default_value_t = 0.999)]
    pub adam_beta2: f64,
    #[arg(long, default_value_t = 1e-8)]
    pub adam_eps: f64,
    /// Sum losses over a batch instead of averaging.
    #[arg(long)]
    pub sum_reduction: bool,
}

impl MapArgs {
    fn config(&self, seed: u64) -> MapTrainConfig {
        let objective = match self.objective {
            ObjectiveArg::Mse => Objective::Mse,
            ObjectiveArg::Mm => Objective::Mm { margin: self.margin },
            ObjectiveArg::Hinge => Objective::Hinge { margin: self.margin },
        };
        MapTrainConfig {
            objective,
            k_neg: self.k,
            epochs: self.epochs,
            validation_fraction: self.validation_fraction,
            patience: self.patience,
            adam: AdamConfig {
                learning_rate: self.adam_lr,
                beta1: self.adam_beta1,
                beta2: self.adam_beta2,
                epsilon: self.adam_eps,
            },
            batch_size: self.batch_size,
            reduction: if self.sum_reduction { Reduction::Sum } else { Reduction::Mean },
            seed,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrainMapArgs {
    /// Original (distributional) vectors.
    #[arg(long)]
    pub original: PathBuf,
    /// Specialised vectors; training pairs are the seen words.
    #[arg(long)]
    pub specialised: PathBuf,
    /// Constraints defining the seen words. Without them, words whose
    /// vectors differ between the two files are used.
    #[command(flatten)]
    pub constraints: OptionalConstraintArgs,
    #[arg(long)]
    pub model_out: PathBuf,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub map: MapArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ApplyArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Keep the specialised vectors of seen words from this file and map
    /// only the unseen ones.
    #[arg(long)]
    pub specialised: Option<PathBuf>,
    #[command(flatten)]
    pub constraints: OptionalConstraintArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Tsv,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct EvaluateArgs {
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report: ReportFormat,
    /// Report file (default: stdout).
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct PipelineArgs {
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    #[arg(long)]
    pub out: PathBuf,
    /// Remove constraints mentioning any word of these datasets first.
    #[arg(long)]
    pub holdout_eval: Vec<PathBuf>,
    /// Map every word, seen ones included.
    #[arg(long)]
    pub map_all: bool,
    #[arg(long)]
    pub model_out: Option<PathBuf>,
    /// Datasets to evaluate the final space on; results go to the summary.
    #[arg(long)]
    pub dataset: Vec<PathBuf>,
    #[command(flatten)]
    pub post: PostProcessorArgs,
    #[arg(long)]
    pub ar_epochs: Option<usize>,
    #[arg(long)]
    pub ar_lr: Option<f64>,
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub map: MapArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SweepArgs {
    #[command(flatten)]
    pub vectors: VectorArgs,
    #[command(flatten)]
    pub constraints: ConstraintArgs,
    #[arg(long, required = true)]
    pub dataset: Vec<PathBuf>,
    /// Depths to try; 0 is the linear map.
    #[arg(long, value_delimiter = ',', default_value = "0,1,3,5,7")]
    pub hidden: Vec<usize>,
    #[arg(long, default_value_t = 512)]
    pub width: usize,
    #[arg(long, default_value_t = 5)]
    pub runs: usize,
    /// Hold out every word of the datasets from the constraints.
    #[arg(long)]
    pub holdout: bool,
    #[arg(long, value_enum, default_value_t = ReportFormat::Json)]
    pub report: ReportFormat,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[command(flatten)]
    pub post: PostProcessorArgs,
    #[arg(long)]
    pub ar_epochs: Option<usize>,
    #[arg(long)]
    pub ar_lr: Option<f64>,
    #[command(flatten)]
    pub map: MapArgs,
}

impl PostProcessorArgs {
    fn has_ar_flags(&self, epochs: Option<usize>, lr: Option<f64>) -> bool {
        self.delta_att.is_some()
            || self.delta_rep.is_some()
            || self.lambda_reg.is_some()
            || self.batch.is_some()
            || epochs.is_some()
            || lr.is_some()
    }

    fn ar_config(&self, epochs: Option<usize>, lr: Option<f64>, seed: u64) -> ArConfig {
        let d = ArConfig::default();
        ArConfig {
            delta_att: self.delta_att.unwrap_or(d.delta_att),
            delta_rep: self.delta_rep.unwrap_or(d.delta_rep),
            lambda_reg: self.lambda_reg.unwrap_or(d.lambda_reg),
            batch_att: self.batch.unwrap_or(d.batch_att),
            batch_rep: self.batch.unwrap_or(d.batch_rep),
            epochs: epochs.unwrap_or(d.epochs),
            learning_rate: lr.unwrap_or(d.learning_rate),
            seed,
        }
    }

    fn post_processor(&self) -> PostProcessor {
        match self.method {
            Method::Ar => PostProcessor::AttractRepel,
            Method::Retrofit => PostProcessor::Retrofit {
                iterations: self.retrofit_iterations,
            },
        }
    }
}

const SUBCOMMANDS: [&str; 6] = ["specialise", "train-map", "apply", "evaluate", "pipeline", "sweep"];

/// Finds `--config PATH` or `--config=PATH` in raw arguments.
fn config_path(argv: &[OsString]) -> Option<PathBuf> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().map(PathBuf::from);
        }
        if let Some(p) = s.strip_prefix("--config=") {
            return Some(PathBuf::from(p));
        }
    }
    None
}

/// Turns `key=value` lines into flags, skipping keys already given on the
/// command line. `true`/`false` values toggle boolean flags.
fn config_flags(text: &str, argv: &[OsString]) -> std::result::Result<Vec<OsString>, String> {
    let given: HashSet<String> = argv
        .iter()
        .filter_map(|a| {
            let s = a.to_string_lossy();
            let s = s.strip_prefix("--")?;
            Some(s.split('=').next().unwrap_or(s).to_owned())
        })
        .collect();
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| format!("config line {}: expected key=value", i + 1))?;
        let key = key.trim().trim_start_matches("--").replace('_', "-");
        let value = value.trim();
        if key == "config" || given.contains(&key) {
            continue;
        }
        match value {
            "true" => out.push(OsString::from(format!("--{key}"))),
            "false" => {}
            v => {
                out.push(OsString::from(format!("--{key}")));
                out.push(OsString::from(v));
            }
        }
    }
    Ok(out)
}

fn usage_error(msg: impl std::fmt::Display) -> clap::Error {
    Cli::command().error(ErrorKind::ValueValidation, msg)
}

/// Parses and validates arguments, merging a `--config` file if present.
/// Errors carry clap's usage exit code (2).
pub fn parse_args<I, T>(argv: I) -> std::result::Result<Cli, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let mut argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    if let Some(path) = config_path(&argv) {
        let text = fs::read_to_string(&path)
            .map_err(|e| usage_error(format!("cannot read config {}: {e}", path.display())))?;
        let extra = config_flags(&text, &argv).map_err(usage_error)?;
        if let Some(pos) = argv
            .iter()
            .position(|a| SUBCOMMANDS.contains(&a.to_string_lossy().as_ref()))
        {
            argv.splice(pos + 1..pos + 1, extra);
        }
    }
    let cli = Cli::try_parse_from(argv)?;
    validate(&cli)?;
    Ok(cli)
}

fn validate(cli: &Cli) -> std::result::Result<(), clap::Error> {
    let mut inputs: Vec<&Path> = Vec::new();
    let conflict = |method: Method, has_ar: bool| -> std::result::Result<(), clap::Error> {
        if method == Method::Retrofit && has_ar {
            return Err(Cli::command().error(
                ErrorKind::ArgumentConflict,
                "ATTRACT-REPEL options (--delta-att, --delta-rep, --lambda-reg, --batch, epochs, lr) \
                 cannot be combined with --method retrofit",
            ));
        }
        Ok(())
    };
    let opt_constraints = |c: &OptionalConstraintArgs| -> Vec<PathBuf> {
        c.attract.iter().chain(&c.repel).cloned().collect()
    };
    let mut owned: Vec<PathBuf> = Vec::new();
    match &cli.command {
        Command::Specialise(a) => {
            conflict(a.post.method, a.post.has_ar_flags(a.epochs, a.lr))?;
            inputs.extend([a.vectors.vectors.as_path(), &a.constraints.attract, &a.constraints.repel]);
        }
        Command::TrainMap(a) => {
            inputs.extend([a.original.as_path(), &a.specialised]);
            owned.extend(opt_constraints(&a.constraints));
        }
        Command::Apply(a) => {
            inputs.extend([a.model.as_path(), &a.vectors.vectors]);
            owned.extend(a.specialised.iter().cloned());
            owned.extend(opt_constraints(&a.constraints));
        }
        Command::Evaluate(a) => {
            inputs.push(&a.vectors.vectors);
            inputs.extend(a.dataset.iter().map(PathBuf::as_path));
        }
        Command::Pipeline(a) => {
            conflict(a.post.method, a.post.has_ar_flags(a.ar_epochs, a.ar_lr))?;
            inputs.extend([a.vectors.vectors.as_path(), &a.constraints.attract, &a.constraints.repel]);
            inputs.extend(a.holdout_eval.iter().map(PathBuf::as_path));
            inputs.extend(a.dataset.iter().map(PathBuf::as_path));
        }
        Command::Sweep(a) => {
            conflict(a.post.method, a.post.has_ar_flags(a.ar_epochs, a.ar_lr))?;
            inputs.extend([a.vectors.vectors.as_path(), &a.constraints.attract, &a.constraints.repel]);
            inputs.extend(a.dataset.iter().map(PathBuf::as_path));
        }
    }
    for p in inputs.into_iter().chain(owned.iter().map(PathBuf::as_path)) {
        if !p.exists() {
            return Err(usage_error(format!("input file {} does not exist", p.display())));
        }
    }
    Ok(())
}

/// What a subcommand reports back for the summary.
#[derive(Default)]
struct Outcome {
    metrics: Value,
    outputs: Vec<PathBuf>,
}

fn load_cs(args: &ConstraintArgs) -> Result<ConstraintSet> {
    let opts = ConstraintOptions {
        strip_prefix: args.strip_prefix.clone(),
    };
    load_constraints_with(&args.attract, &args.repel, &opts).map(|(cs, _)| cs)
}

fn load_optional_cs(args: &OptionalConstraintArgs) -> Result<Option<ConstraintSet>> {
    match (&args.attract, &args.repel) {
        (Some(a), Some(r)) => load_cs(&ConstraintArgs {
            attract: a.clone(),
            repel: r.clone(),
            strip_prefix: args.strip_prefix.clone(),
        })
        .map(Some),
        _ => Ok(None),
    }
}

fn load_datasets(paths: &[PathBuf]) -> Result<Vec<EvalDataset>> {
    paths.iter().map(load_eval).collect()
}

/// Row indices into `original` of the seen words: constraint words when
/// constraints are given, otherwise words whose vectors differ in
/// `specialised`.
fn seen_rows(original: &EmbeddingSpace, specialised: &EmbeddingSpace, cs: Option<&ConstraintSet>) -> Vec<usize> {
    match cs {
        Some(cs) => partition_vocab(&filter_to_vocab(cs, original), original)
            .seen
            .into_iter()
            .filter(|&i| specialised.contains(&original.words()[i]))
            .collect(),
        None => (0..original.len())
            .filter(|&i| {
                specialised
                    .vector(&original.words()[i])
                    .is_some_and(|v| v != original.row(i))
            })
            .collect(),
    }
}

fn run_specialise(a: &SpecialiseArgs, seed: u64) -> Result<Outcome> {
    let space = load_embeddings(&a.vectors.vectors, a.vectors.limit)?;
    let cs = filter_to_vocab(&load_cs(&a.constraints)?, &space);
    let part = partition_vocab(&cs, &space);
    let (out, ar) = match a.post.method {
        Method::Ar => {
            let r = ar_specialise(&space, &cs, &a.post.ar_config(a.epochs, a.lr, seed))?;
            (r.space, Some(r.report))
        }
        Method::Retrofit => (retrofit_specialise(&space, &cs, a.post.retrofit_iterations)?, None),
    };
    save_embeddings(&out, &a.out)?;
    Ok(Outcome {
        metrics: json!({
            "vocabulary": space.len(),
            "seen": part.seen.len(),
            "coverage": part.coverage(),
            "attract_pairs": cs.attract.len(),
            "repel_pairs": cs.repel.len(),
            "attract_repel": ar,
        }),
        outputs: vec![a.out.clone()],
    })
}

fn run_train_map(a: &TrainMapArgs, seed: u64) -> Result<Outcome> {
    let original = load_embeddings(&a.original, None)?;
    let specialised = load_embeddings(&a.specialised, None)?;
    if original.dim() != specialised.dim() {
        return Err(Error::DimensionMismatch {
            expected: original.dim(),
            found: specialised.dim(),
        });
    }
    let cs = load_optional_cs(&a.constraints)?;
    let rows = seen_rows(&original, &specialised, cs.as_ref());
    let inputs = original.select(&rows);
    let targets: Vec<usize> = inputs
        .words()
        .iter()
        .map(|w| specialised.index_of(w).expect("seen words are in both spaces"))
        .collect();
    let targets = specialised.select(&targets);
    let trained = train_mapping(inputs.vectors(), targets.vectors(), a.model.kind(), &a.map.config(seed))?;
    save_model(&trained.model, &a.model_out)?;
    Ok(Outcome {
        metrics: json!({ "training_pairs": rows.len(), "training": trained.report }),
        outputs: vec![a.model_out.clone()],
    })
}

fn run_apply(a: &ApplyArgs) -> Result<Outcome> {
    let model = load_model(&a.model)?;
    let space = load_embeddings(&a.vectors.vectors, a.vectors.limit)?;
    let (out, mapped) = match &a.specialised {
        None => (apply_mapping(&model, &space)?, space.len()),
        Some(path) => {
            let specialised = load_embeddings(path, None)?;
            let cs = load_optional_cs(&a.constraints)?;
            let seen = seen_rows(&space, &specialised, cs.as_ref());
            let seen_set: HashSet<usize> = seen.iter().copied().collect();
            let unseen: Vec<usize> = (0..space.len()).filter(|i| !seen_set.contains(i)).collect();
            let mapped = apply_mapping(&model, &space.select(&unseen))?;
            let kept: Vec<usize> = seen
                .iter()
                .map(|&i| specialised.index_of(&space.words()[i]).expect("seen words are in both spaces"))
                .collect();
            let out = space
                .with_rows_replaced(&unseen, mapped.vectors())?
                .with_rows_replaced(&seen, specialised.select(&kept).vectors())?;
            (out, unseen.len())
        }
    };
    save_embeddings(&out, &a.out)?;
    Ok(Outcome {
        metrics: json!({ "vocabulary": out.len(), "mapped": mapped }),
        outputs: vec![a.out.clone()],
    })
}

fn tsv_reports(reports: &[EvalReport]) -> String {
    let mut s = String::from("dataset\trho\tcovered\ttotal\n");
    for r in reports {
        s.push_str(&format!("{}\t{:.6}\t{}\t{}\n", r.dataset, r.rho, r.covered, r.total));
    }
    s
}

fn emit(text: &str, out: Option<&Path>) -> Result<()> {
    match out {
        Some(p) => write_atomically(p, |f| f.write_all(text.as_bytes())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn run_evaluate(a: &EvaluateArgs) -> Result<Outcome> {
    let space = load_embeddings(&a.vectors.vectors, a.vectors.limit)?;
    let datasets = load_datasets(&a.dataset)?;
    let mut reports = evaluate_all(&space, &datasets)?;
    for r in &mut reports {
        r.config = Some(a.vectors.vectors.display().to_string());
    }
    let text = match a.report {
        ReportFormat::Json => {
            let rows: Vec<Value> = reports
                .iter()
                .map(|r| json!({"dataset": r.dataset, "rho": r.rho, "covered": r.covered, "total": r.total, "config": r.config}))
                .collect();
            serde_json::to_string_pretty(&rows).expect("serialisable") + "\n"
        }
        ReportFormat::Tsv => tsv_reports(&reports),
    };
    emit(&text, a.out.as_deref())?;
    Ok(Outcome {
        metrics: json!({ "reports": reports }),
        outputs: a.out.iter().cloned().collect(),
    })
}

fn pipeline_config(
    post: &PostProcessorArgs,
    ar_epochs: Option<usize>,
    ar_lr: Option<f64>,
    model: ModelKind,
    map: &MapArgs,
    seed: u64,
) -> PipelineConfig {
    PipelineConfig {
        post_processor: post.post_processor(),
        ar: post.ar_config(ar_epochs, ar_lr, seed),
        model,
        map: map.config(seed),
        map_all: false,
    }
}

fn run_pipeline_cmd(a: &PipelineArgs, seed: u64) -> Result<Outcome> {
    let space = load_embeddings(&a.vectors.vectors, a.vectors.limit)?;
    let mut cs = load_cs(&a.constraints)?;
    let mut removed = 0;
    if !a.holdout_eval.is_empty() {
        let held = load_datasets(&a.holdout_eval)?;
        let (kept, n) = holdout_filter(&cs, &eval_vocabulary(&held));
        info!("hold-out: removed {n} constraint pair(s) mentioning evaluation words");
        cs = kept;
        removed = n;
    }
    let mut cfg = pipeline_config(&a.post, a.ar_epochs, a.ar_lr, a.model.kind(), &a.map, seed);
    cfg.map_all = a.map_all;
    let out = run_pipeline(&space, &cs, &cfg)?;
    let evals = evaluate_all(&out.space, &load_datasets(&a.dataset)?)?;

    // Nothing is written until every stage has succeeded.
    if let Some(p) = &a.model_out {
        save_model(&out.model, p)?;
    }
    save_embeddings(&out.space, &a.out)?;
    let mut outputs = vec![a.out.clone()];
    outputs.extend(a.model_out.iter().cloned());
    Ok(Outcome {
        metrics: json!({
            "holdout_removed_pairs": removed,
            "pipeline": out.report,
            "evaluation": evals,
        }),
        outputs,
    })
}

fn run_sweep(a: &SweepArgs, seed: u64) -> Result<Outcome> {
    let space = load_embeddings(&a.vectors.vectors, a.vectors.limit)?;
    let datasets = load_datasets(&a.dataset)?;
    let mut cs = load_cs(&a.constraints)?;
    if a.holdout {
        cs = holdout_filter(&cs, &eval_vocabulary(&datasets)).0;
    }
    let cfg = pipeline_config(&a.post, a.ar_epochs, a.ar_lr, ModelKind::Linear, &a.map, seed);
    let rows = depth_sweep(&space, &cs, &datasets, &a.hidden, a.width, a.runs, &cfg)?;
    let text = match a.report {
        ReportFormat::Json => serde_json::to_string_pretty(&rows).expect("serialisable") + "\n",
        ReportFormat::Tsv => {
            let mut s = String::from("hidden\tdataset\tmean\tmin\tmax\n");
            for r in &rows {
                for c in &r.cells {
                    s.push_str(&format!("{}\t{}\t{:.6}\t{:.6}\t{:.6}\n", r.hidden, c.dataset, c.mean, c.min, c.max));
                }
            }
            s
        }
    };
    emit(&text, a.out.as_deref())?;
    Ok(Outcome {
        metrics: json!({ "sweep": rows }),
        outputs: a.out.iter().cloned().collect(),
    })
}

fn execute(cli: &Cli) -> Result<Outcome> {
    let seed = cli.global.seed;
    match &cli.command {
        Command::Specialise(a) => run_specialise(a, seed),
        Command::TrainMap(a) => run_train_map(a, seed),
        Command::Apply(a) => run_apply(a),
        Command::Evaluate(a) => run_evaluate(a),
        Command::Pipeline(a) => run_pipeline_cmd(a, seed),
        Command::Sweep(a) => run_sweep(a, seed),
    }
}

/// Executes a parsed command and returns the process exit code: 0 when every
/// requested output was written, 1 otherwise.
pub fn run(cli: &Cli) -> i32 {
    let _ = env_logger::Builder::new()
        .parse_filters(&cli.global.log_level)
        .format_timestamp_millis()
        .try_init();
    if let Some(n) = cli.global.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("could not configure {n} threads: {e}");
        }
    }
    let start = Instant::now();
    let result = execute(cli);
    let elapsed = start.elapsed().as_secs_f64();
    let (code, outcome, err) = match result {
        Ok(o) => (0, o, None),
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            (1, Outcome::default(), Some(e.to_string()))
        }
    };
    let summary = json!({
        "tool": "postspec",
        "version": env!("CARGO_PKG_VERSION"),
        "seed": cli.global.seed,
        "config": cli,
        "elapsed_secs": elapsed,
        "exit_code": code,
        "error": err,
        "metrics": outcome.metrics,
        "outputs": outcome.outputs,
    });
    let text = serde_json::to_string_pretty(&summary).expect("serialisable") + "\n";
    match &cli.global.summary {
        Some(p) => {
            if let Err(e) = write_atomically(p, |f| f.write_all(text.as_bytes())) {
                eprintln!("error: {e}");
                return 1;
            }
        }
        None => eprint!("{text}"),
    }
    code
}

/// Entry point of the `postspec` binary.
pub fn main() -> i32 {
    match parse_args(std::env::args_os()) {
        Ok(cli) => run(&cli),
        Err(e) => {
            let code = e.exit_code();
            let _ = e.print();
            code
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_keys_become_flags_unless_given() {
        let argv: Vec<OsString> = ["postspec", "specialise", "--epochs", "3"].iter().map(OsString::from).collect();
        let flags = config_flags("epochs=5\n# note\nlr = 0.1\nmap_all=true\nx=false\n", &argv).unwrap();
        let flags: Vec<String> = flags.iter().map(|f| f.to_string_lossy().into_owned()).collect();
        assert_eq!(flags, ["--lr", "0.1", "--map-all"]);
    }

    #[test]
    fn malformed_config_line() {
        assert!(config_flags("epochs\n", &[]).is_err());
    }

    #[test]
    fn finds_config_path() {
        let argv: Vec<OsString> = ["p", "--config=a.cfg"].iter().map(OsString::from).collect();
        assert_eq!(config_path(&argv), Some(PathBuf::from("a.cfg")));
    }
}
