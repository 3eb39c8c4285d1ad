//! Epoch-timing sweeps across worker counts, speedup, and CSV output.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::connectome::Connectome;
use crate::dataio::Dataset;
use crate::error::{Error, Result};
use crate::trainer::{self, TrainerConfig};

pub const CSV_HEADER: &str = "workers,epoch,rep,duration_seconds,train_accuracy,test_accuracy";

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub worker_count: usize,
    pub epoch: usize,
    pub repetition: usize,
    /// Wall-clock time of the epoch body, excluding evaluation.
    pub duration_seconds: f64,
    pub train_accuracy: f64,
    pub test_accuracy: f64,
}

impl EpochRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{:.2},{:.4},{:.4}",
            self.worker_count,
            self.epoch,
            self.repetition,
            self.duration_seconds,
            self.train_accuracy,
            self.test_accuracy
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub records: Vec<EpochRecord>,
    pub baseline_median_seconds: f64,
}

impl SweepResult {
    /// Builds a result from raw records; a `worker_count = 1` group is required.
    pub fn from_records(records: Vec<EpochRecord>) -> Result<Self> {
        let baseline = median(records.iter().filter(|r| r.worker_count == 1).map(|r| r.duration_seconds))
            .ok_or(Error::MissingBaseline)?;
        Ok(SweepResult {
            records,
            baseline_median_seconds: baseline,
        })
    }

    pub fn worker_counts(&self) -> Vec<usize> {
        let mut counts: Vec<usize> = self.records.iter().map(|r| r.worker_count).collect();
        counts.sort_unstable();
        counts.dedup();
        counts
    }

    pub fn median_duration(&self, worker_count: usize) -> Result<f64> {
        median(
            self.records
                .iter()
                .filter(|r| r.worker_count == worker_count)
                .map(|r| r.duration_seconds),
        )
        .ok_or(Error::UnknownWorkerCount(worker_count))
    }
}

/// Median of the values; `None` when empty.
pub fn median(values: impl IntoIterator<Item = f64>) -> Option<f64> {
    let mut v: Vec<f64> = values.into_iter().collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Some(if v.len().is_multiple_of(2) { (v[mid - 1] + v[mid]) / 2.0 } else { v[mid] })
}

#[derive(Debug, Clone)]
pub struct SweepPlan {
    pub layer_sizes: Vec<usize>,
    pub template: TrainerConfig,
    pub worker_counts: Vec<usize>,
    pub repetitions: usize,
}

impl SweepPlan {
    pub fn new(layer_sizes: Vec<usize>, template: TrainerConfig, worker_counts: Vec<usize>) -> Self {
        SweepPlan {
            layer_sizes,
            template,
            worker_counts,
            repetitions: 3,
        }
    }
}

/// Trains once per (worker count, repetition) from identical seeds, recording every epoch.
/// Sweeps always merge in completion order.
pub fn run_sweep(train_set: &Dataset, test_set: &Dataset, plan: &SweepPlan) -> Result<SweepResult> {
    if !plan.worker_counts.contains(&1) {
        return Err(Error::MissingBaseline);
    }
    if plan.repetitions < 1 {
        return Err(Error::Config("repetitions must be >= 1".into()));
    }
    let mut records = Vec::new();
    for &workers in &plan.worker_counts {
        let config = TrainerConfig {
            workers,
            deterministic_order: false,
            ..plan.template.clone()
        };
        config.validate()?;
        for rep in 0..plan.repetitions {
            let master = Connectome::init(&plan.layer_sizes, config.elu_alpha, config.seed)?;
            let report = trainer::train(master, train_set, test_set, &config)?;
            records.extend(report.epochs.into_iter().map(|r| EpochRecord { repetition: rep, ..r }));
        }
    }
    SweepResult::from_records(records)
}

/// Median single-worker epoch time over median epoch time at `worker_count`.
pub fn speedup(result: &SweepResult, worker_count: usize) -> Result<f64> {
    let target = result.median_duration(worker_count)?;
    Ok(result.baseline_median_seconds / target)
}

pub fn render_csv(result: &SweepResult) -> String {
    let mut rows: Vec<&EpochRecord> = result.records.iter().collect();
    rows.sort_by_key(|r| (r.worker_count, r.repetition, r.epoch));
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&r.csv_row());
        out.push('\n');
    }
    out
}

pub fn emit_csv(result: &SweepResult, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, render_csv(result))?;
    Ok(())
}

/// Plain-text table: one line per worker count.
pub fn summary_table(result: &SweepResult) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{:>8} {:>12} {:>8} {:>10}", "workers", "median_s", "speedup", "test_acc");
    for w in result.worker_counts() {
        let med = result.median_duration(w).unwrap_or(f64::NAN);
        let sp = speedup(result, w).unwrap_or(f64::NAN);
        let acc = median(
            result
                .records
                .iter()
                .filter(|r| r.worker_count == w)
                .map(|r| r.test_accuracy),
        )
        .unwrap_or(f64::NAN);
        let _ = writeln!(out, "{w:>8} {med:>12.2} {sp:>8.2} {acc:>10.4}");
    }
    out
}
