//! `slotfill`: train slot-filling models on engagement logs, tag queries,
//! rank products and evaluate the results.
//!
//! Exit codes: 0 success, 1 usage error, 2 data or runtime error.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use slotfill_core::cusdss::RejectionTerm;
use slotfill_core::ranking::{Bm25Params, RankMode};
use slotfill_core::synthgen::{self, SynthConfig};
use slotfill_core::{cusd, cusdss, msd, usd, RandomSource};

use slotfill_cli::persist::{self, LoadedModel, ModelKind, ModelType};
use slotfill_cli::pipeline::{self, PreparedModel, UnobservedOptions};

#[derive(Parser)]
#[command(
    name = "slotfill",
    about = "Distant-supervised slot filling for e-commerce search queries",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model on an engagement log
    Train(TrainArgs),
    /// Tag queries with slot keys
    Annotate(AnnotateArgs),
    /// Rank catalog products per query
    Rank(RankArgs),
    /// Evaluate tagging or retrieval output
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Generate a synthetic corpus from a planted model
    Synth(SynthArgs),
}

#[derive(Args)]
struct TrainArgs {
    /// Model family
    #[arg(long, value_enum)]
    model: ModelType,
    /// engagement.jsonl input
    #[arg(long)]
    input: PathBuf,
    /// Output model file
    #[arg(long)]
    out: PathBuf,
    /// Gibbs sweeps
    #[arg(long, default_value_t = 1000)]
    iters: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Emission prior
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    /// Transition prior (msd)
    #[arg(long, default_value_t = 10_000.0)]
    zeta: f64,
    /// Category prior (cusd, cusdss)
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    /// Category-slot prior (cusd, cusdss)
    #[arg(long, default_value_t = 1.0)]
    beta: f64,
    /// Number of product categories; defaults to 60 for cusd, 100 for cusdss
    #[arg(long)]
    num_categories: Option<usize>,
    /// Slot selection probability (cusdss)
    #[arg(long, default_value_t = 0.7)]
    gamma: f64,
    /// Minimum corpus frequency of every query word
    #[arg(long, default_value_t = 50)]
    min_word_freq: u64,
    /// Minimum number of records a slot must appear in
    #[arg(long, default_value_t = 50)]
    min_slot_freq: u64,
}

#[derive(Args)]
struct AnnotateArgs {
    /// Trained model file
    #[arg(long)]
    model: PathBuf,
    /// Queries (JSONL)
    #[arg(long)]
    queries: PathBuf,
    /// Output tags.jsonl (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    /// Candidate sets are supplied per query in the input
    #[arg(long)]
    observed: bool,
    /// Top-t slots per key and word when enumerating candidate sets
    #[arg(long, default_value_t = 1)]
    top_t: usize,
    /// Co-occurrence weight; defaults to 1.0 (msd), 0.15 (cusd), 0 (cusdss)
    #[arg(long)]
    mu: Option<f64>,
    /// Guard on the number of enumerated candidate sets
    #[arg(long, default_value_t = 50_000)]
    max_sets: usize,
    /// Block-Gibbs iterations per query (cusdss)
    #[arg(long, default_value_t = 100)]
    infer_iters: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Worker threads over queries
    #[arg(long, default_value_t = 1)]
    threads: usize,
    /// Scoring of rejected candidates in the cusdss selection prior
    #[arg(long, value_enum, default_value = "one-minus-negated")]
    rejection_term: RejectionArg,
}

#[derive(Args)]
struct RankArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    catalog: PathBuf,
    #[arg(long)]
    queries: PathBuf,
    /// slots, bm25 or fused
    #[arg(long)]
    mode: String,
    #[arg(long, default_value_t = 1.2)]
    k1: f64,
    #[arg(long, default_value_t = 0.75)]
    b: f64,
    /// Output rankings.jsonl (stdout when omitted)
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value_t = 1)]
    top_t: usize,
    #[arg(long)]
    mu: Option<f64>,
    #[arg(long, default_value_t = 50_000)]
    max_sets: usize,
    #[arg(long, default_value_t = 100)]
    infer_iters: u32,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    threads: usize,
    #[arg(long, value_enum, default_value = "one-minus-negated")]
    rejection_term: RejectionArg,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Compare predicted tags with gold annotations
    Tagging(EvalTaggingArgs),
    /// Score rankings against purchase judgments
    Retrieval(EvalRetrievalArgs),
}

#[derive(Args)]
struct EvalTaggingArgs {
    #[arg(long)]
    pred: PathBuf,
    #[arg(long)]
    gold: PathBuf,
    /// Emit the q-accuracy-by-length breakdown as CSV instead of the report
    #[arg(long)]
    by_length: bool,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct EvalRetrievalArgs {
    #[arg(long)]
    rankings: PathBuf,
    #[arg(long)]
    judgments: PathBuf,
    #[arg(long, default_value_t = 10)]
    k: usize,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// SynthConfig JSON file
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
enum RejectionArg {
    OneMinusNegated,
    Negated,
}

impl From<RejectionArg> for RejectionTerm {
    fn from(arg: RejectionArg) -> Self {
        match arg {
            RejectionArg::OneMinusNegated => RejectionTerm::OneMinusNegated,
            RejectionArg::Negated => RejectionTerm::Negated,
        }
    }
}

fn train(args: TrainArgs) -> Result<()> {
    let corpus =
        pipeline::load_training_corpus(&args.input, args.min_word_freq, args.min_slot_freq)?;
    let rng = RandomSource::from_seed(args.seed);
    let kind = match args.model {
        ModelType::Usd => ModelKind::Usd(usd::train(&corpus, args.delta, args.iters, &rng)),
        ModelType::Msd => ModelKind::Msd(msd::train(
            &corpus, args.delta, args.zeta, args.iters, &rng,
        )),
        ModelType::Cusd => ModelKind::Cusd(cusd::train(
            &corpus,
            cusd::CusdParams {
                delta: args.delta,
                alpha: args.alpha,
                beta: args.beta,
                num_categories: args.num_categories.unwrap_or(60),
            },
            args.iters,
            &rng,
        )),
        ModelType::Cusdss => ModelKind::Cusdss(cusdss::train(
            &corpus,
            cusdss::CusdssParams {
                delta: args.delta,
                alpha: args.alpha,
                beta: args.beta,
                gamma: args.gamma,
                num_categories: args.num_categories.unwrap_or(100),
            },
            args.iters,
            &rng,
        )),
    };
    let model = LoadedModel {
        registry: corpus.registry,
        kind,
        seed: args.seed,
        iterations: args.iters,
    };
    std::fs::write(&args.out, persist::save_model(&model))
        .with_context(|| format!("writing {}", args.out.display()))?;
    Ok(())
}

fn annotate(args: AnnotateArgs) -> Result<()> {
    let model = PreparedModel::new(persist::load_model(&pipeline::read_to_string(
        &args.model,
    )?)?);
    let opts = UnobservedOptions {
        top_t: args.top_t,
        mu: args.mu,
        max_sets: args.max_sets,
        infer_iters: args.infer_iters,
        rejection: args.rejection_term.into(),
    };
    pipeline::annotate(
        &model,
        &args.queries,
        args.observed,
        &opts,
        args.infer_iters,
        args.seed,
        args.threads,
        args.out.as_ref(),
    )
}

fn rank(args: RankArgs) -> Result<()> {
    let mode: RankMode = args.mode.parse()?;
    let model = PreparedModel::new(persist::load_model(&pipeline::read_to_string(
        &args.model,
    )?)?);
    let catalog =
        slotfill_core::ranking::load_catalog(pipeline::open_lines(&args.catalog)?, model.registry())?;
    let opts = UnobservedOptions {
        top_t: args.top_t,
        mu: args.mu,
        max_sets: args.max_sets,
        infer_iters: args.infer_iters,
        rejection: args.rejection_term.into(),
    };
    pipeline::rank(
        &model,
        &catalog,
        &args.queries,
        mode,
        Bm25Params {
            k1: args.k1,
            b: args.b,
        },
        &opts,
        args.seed,
        args.threads,
        args.out.as_ref(),
    )
}

fn synth(args: SynthArgs) -> Result<()> {
    let config: SynthConfig = serde_json::from_str(&pipeline::read_to_string(&args.config)?)
        .with_context(|| format!("parsing {}", args.config.display()))?;
    let data = synthgen::generate(&config)?;
    data.write_to_dir(&args.out_dir)?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train(args) => train(args),
        Command::Annotate(args) => annotate(args),
        Command::Rank(args) => rank(args),
        Command::Eval(EvalCommand::Tagging(args)) => {
            pipeline::eval_tagging(&args.pred, &args.gold, args.by_length, args.out.as_ref())
        }
        Command::Eval(EvalCommand::Retrieval(args)) => pipeline::eval_retrieval(
            &args.rankings,
            &args.judgments,
            args.k,
            args.out.as_ref(),
        ),
        Command::Synth(args) => synth(args),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
