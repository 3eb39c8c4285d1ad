//! Command-line driver: `train`, `eval` and `bench`.

mod args;
pub mod persist;

use std::io::Write;
use std::path::Path;

pub use args::{parse_args, RunConfig, SubcommandKind};
pub use persist::{load_connectome, save_connectome};

use crate::bench::{self, EpochRecord, SweepPlan};
use crate::connectome::Connectome;
use crate::dataio::{self, DataFormat, Dataset, CLASSES, PIXELS};
use crate::error::{Error, Result};
use crate::trainer;

fn load_test_set(dir: &Path, format: DataFormat) -> Result<Dataset> {
    match format {
        DataFormat::Idx => {
            let find = |stem: &str| {
                dataio::find_idx_file(dir, stem).ok_or_else(|| {
                    Error::Io(std::io::Error::new(
                        std::io::ErrorKind::NotFound,
                        format!("{stem}[.gz] not found in {}", dir.display()),
                    ))
                })
            };
            dataio::load_idx(find("t10k-images-idx3-ubyte")?, find("t10k-labels-idx1-ubyte")?)
        }
        DataFormat::Csv => dataio::load_csv(dir.join("mnist_test.csv")),
    }
}

fn limit(ds: Dataset, n: Option<usize>) -> Dataset {
    match n {
        Some(n) => ds.truncated(n),
        None => ds,
    }
}

fn check_mnist_shape(c: &Connectome) -> Result<()> {
    if c.input_size() != PIXELS || c.output_size() != CLASSES {
        return Err(Error::Topology(format!(
            "model has layers {:?}, expected {PIXELS} inputs and {CLASSES} outputs",
            c.layer_sizes()
        )));
    }
    Ok(())
}

/// Metrics rows for a single training run, in the bench CSV layout.
pub fn render_metrics(records: &[EpochRecord]) -> String {
    let mut out = String::from(bench::CSV_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn run(config: &RunConfig, out: &mut impl Write) -> Result<()> {
    match config.subcommand {
        SubcommandKind::Train => run_train(config, out),
        SubcommandKind::Eval => run_eval(config, out),
        SubcommandKind::Bench => run_bench(config, out),
    }
}

fn run_train(config: &RunConfig, out: &mut impl Write) -> Result<()> {
    if config.trainer.epochs == 0 {
        if let Some(path) = &config.metrics {
            std::fs::write(path, render_metrics(&[]))?;
        }
        return Ok(());
    }
    let (train_set, test_set) = dataio::load_mnist_dir(&config.data_dir, config.format)?;
    let train_set = limit(train_set, config.train_limit);
    let test_set = limit(test_set, config.test_limit);
    let master = match &config.load {
        Some(path) => load_connectome(path)?,
        None => Connectome::init(&[PIXELS, config.hidden, CLASSES], config.trainer.elu_alpha, config.trainer.seed)?,
    };
    check_mnist_shape(&master)?;

    let report = trainer::train_with(master, &train_set, &test_set, &config.trainer, |rec, c| {
        writeln!(
            out,
            "epoch={} workers={} duration_s={:.2} train_accuracy={:.4} test_accuracy={:.4}",
            rec.epoch, rec.worker_count, rec.duration_seconds, rec.train_accuracy, rec.test_accuracy
        )?;
        if let Some(path) = &config.save {
            save_connectome(c, path)?;
        }
        Ok(())
    })?;
    if let Some(path) = &config.metrics {
        std::fs::write(path, render_metrics(&report.epochs))?;
    }
    Ok(())
}

fn run_eval(config: &RunConfig, out: &mut impl Write) -> Result<()> {
    let path = config.load.as_ref().ok_or_else(|| Error::Config("eval requires --load".into()))?;
    let model = load_connectome(path)?;
    check_mnist_shape(&model)?;
    let test_set = limit(load_test_set(&config.data_dir, config.format)?, config.test_limit);
    let acc = trainer::evaluate(&model, &test_set)?;
    writeln!(out, "test_accuracy={acc:.4}")?;
    Ok(())
}

fn run_bench(config: &RunConfig, out: &mut impl Write) -> Result<()> {
    let (train_set, test_set) = dataio::load_mnist_dir(&config.data_dir, config.format)?;
    let train_set = limit(train_set, config.train_limit);
    let test_set = limit(test_set, config.test_limit);
    let plan = SweepPlan {
        repetitions: config.repetitions,
        ..SweepPlan::new(
            vec![PIXELS, config.hidden, CLASSES],
            config.trainer.clone(),
            config.worker_counts.clone(),
        )
    };
    let result = bench::run_sweep(&train_set, &test_set, &plan)?;
    match &config.metrics {
        Some(path) => bench::emit_csv(&result, path)?,
        None => write!(out, "{}", bench::render_csv(&result))?,
    }
    write!(out, "{}", bench::summary_table(&result))?;
    Ok(())
}

/// Parses `argv`, runs the subcommand and returns the process exit status.
pub fn main_with_args<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let config = match parse_args(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(&config, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
