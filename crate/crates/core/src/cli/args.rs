use std::path::PathBuf;

use clap::error::ErrorKind;
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};

use crate::dataio::DataFormat;
use crate::trainer::{Execution, MergeMode, TrainerConfig};

#[derive(Debug, Parser)]
#[command(name = "nnxp", version, about = "Exemplar-parallel MNIST training and benchmarking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train a 784-hidden-10 network and report per-epoch accuracy.
    Train(Flags),
    /// Evaluate a saved model on the test set.
    Eval(Flags),
    /// Time epochs across a list of worker counts.
    Bench(Flags),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Idx,
    Csv,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum MergeArg {
    Avg,
    Sum,
}

#[derive(Debug, Args)]
struct Flags {
    /// Worker count; for `bench`, a comma-separated list such as 1,2,4,8,16.
    #[arg(long, default_value = "1")]
    workers: String,
    #[arg(long, default_value_t = 1)]
    epochs: usize,
    /// Examples per worker batch.
    #[arg(long, default_value_t = 100)]
    worker_batch: usize,
    /// Learning rate.
    #[arg(long, default_value_t = 0.8)]
    eta: f64,
    /// Elastic-net regularization strength.
    #[arg(long, default_value_t = 0.0000001)]
    lambda: f64,
    #[arg(long, default_value_t = 0.5)]
    elu_alpha: f64,
    /// Hidden layer width.
    #[arg(long, default_value_t = 100)]
    hidden: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// Directory holding the MNIST IDX (optionally .gz) or CSV files.
    #[arg(long)]
    data_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "idx")]
    format: FormatArg,
    /// Combine a round's deltas by their mean (avg) or sum.
    #[arg(long, value_enum, default_value = "avg")]
    merge: MergeArg,
    /// Merge deltas in batch order so seeded runs are reproducible.
    #[arg(long, default_value_t = true, action = clap::ArgAction::Set)]
    deterministic: bool,
    /// Write the model here after every epoch.
    #[arg(long)]
    save: Option<PathBuf>,
    /// Start from (train) or evaluate (eval) this saved model.
    #[arg(long)]
    load: Option<PathBuf>,
    /// Per-epoch metrics CSV path.
    #[arg(long)]
    metrics: Option<PathBuf>,
    /// Independent trainings per worker count (bench only).
    #[arg(long, default_value_t = 3)]
    repetitions: usize,
    /// Use only the first N training examples.
    #[arg(long)]
    train_limit: Option<usize>,
    /// Use only the first N test examples.
    #[arg(long)]
    test_limit: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SubcommandKind {
    Train,
    Eval,
    Bench,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub subcommand: SubcommandKind,
    pub data_dir: PathBuf,
    pub format: DataFormat,
    pub trainer: TrainerConfig,
    pub hidden: usize,
    /// Parsed `--workers` list; a single entry for train/eval.
    pub worker_counts: Vec<usize>,
    pub repetitions: usize,
    pub train_limit: Option<usize>,
    pub test_limit: Option<usize>,
    pub save: Option<PathBuf>,
    pub load: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

fn usage(kind: ErrorKind, msg: impl std::fmt::Display) -> clap::Error {
    Cli::command().error(kind, msg)
}

pub fn parse_args<I, T>(argv: I) -> Result<RunConfig, clap::Error>
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = Cli::try_parse_from(argv)?;
    let (subcommand, f) = match cli.command {
        Command::Train(f) => (SubcommandKind::Train, f),
        Command::Eval(f) => (SubcommandKind::Eval, f),
        Command::Bench(f) => (SubcommandKind::Bench, f),
    };

    let worker_counts = f
        .workers
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<Vec<_>, _>>()
        .map_err(|e| usage(ErrorKind::ValueValidation, format!("invalid --workers {:?}: {e}", f.workers)))?;
    if worker_counts.contains(&0) {
        return Err(usage(ErrorKind::ValueValidation, "--workers must be >= 1"));
    }
    if subcommand != SubcommandKind::Bench && worker_counts.len() != 1 {
        return Err(usage(ErrorKind::ValueValidation, "--workers takes a list only for bench"));
    }

    let data_dir = f
        .data_dir
        .ok_or_else(|| usage(ErrorKind::MissingRequiredArgument, "--data-dir is required"))?;
    if subcommand == SubcommandKind::Eval && f.load.is_none() {
        return Err(usage(ErrorKind::MissingRequiredArgument, "eval requires --load"));
    }
    if f.hidden < 1 {
        return Err(usage(ErrorKind::ValueValidation, "--hidden must be >= 1"));
    }
    if f.repetitions < 1 {
        return Err(usage(ErrorKind::ValueValidation, "--repetitions must be >= 1"));
    }

    let trainer = TrainerConfig {
        eta: f.eta,
        lambda: f.lambda,
        elu_alpha: f.elu_alpha,
        worker_batch: f.worker_batch,
        workers: worker_counts[0],
        epochs: f.epochs,
        seed: f.seed,
        merge_mode: match f.merge {
            MergeArg::Avg => MergeMode::AverageSync,
            MergeArg::Sum => MergeMode::SumSync,
        },
        deterministic_order: f.deterministic,
        execution: Execution::Threads,
    };
    trainer
        .validate()
        .map_err(|e| usage(ErrorKind::ValueValidation, e))?;

    Ok(RunConfig {
        subcommand,
        data_dir,
        format: match f.format {
            FormatArg::Idx => DataFormat::Idx,
            FormatArg::Csv => DataFormat::Csv,
        },
        trainer,
        hidden: f.hidden,
        worker_counts,
        repetitions: f.repetitions,
        train_limit: f.train_limit,
        test_limit: f.test_limit,
        save: f.save,
        load: f.load,
        metrics: f.metrics,
    })
}
