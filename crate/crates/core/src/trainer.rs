//! Exemplar-parallel training.
//!
//! Each epoch is shuffled and cut into consecutive worker batches. A round
//! hands up to `workers` batches to the workers, all against the same master
//! snapshot. Each worker runs plain SGD on a private copy and returns its net
//! delta. The coordinator merges the deltas, applies them to the master and
//! starts the next round from the updated weights.

use std::sync::mpsc;
use std::sync::Arc;
use std::thread;
use std::time::{Duration, Instant};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bench::EpochRecord;
use crate::connectome::{Connectome, WeightDelta, Workspace};
use crate::dataio::{Dataset, Example};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MergeMode {
    /// Component-wise mean of the worker deltas.
    AverageSync,
    /// Component-wise sum of the worker deltas.
    SumSync,
}

/// How the workers of a round are executed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Execution {
    /// One OS thread per worker.
    Threads,
    /// Workers run one after another on the calling thread.
    Inline,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainerConfig {
    pub eta: f64,
    pub lambda: f64,
    pub elu_alpha: f64,
    pub worker_batch: usize,
    pub workers: usize,
    pub epochs: usize,
    pub seed: u64,
    pub merge_mode: MergeMode,
    /// Merge deltas in ascending batch index instead of completion order.
    pub deterministic_order: bool,
    pub execution: Execution,
}

impl Default for TrainerConfig {
    fn default() -> Self {
        TrainerConfig {
            eta: 0.8,
            lambda: 1e-7,
            elu_alpha: 0.5,
            worker_batch: 100,
            workers: 1,
            epochs: 1,
            seed: 1,
            merge_mode: MergeMode::AverageSync,
            deterministic_order: true,
            execution: Execution::Threads,
        }
    }
}

impl TrainerConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if !(self.eta > 0.0 && self.eta.is_finite()) {
            return fail(format!("eta must be > 0, got {}", self.eta));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return fail(format!("lambda must be >= 0, got {}", self.lambda));
        }
        if !(self.elu_alpha > 0.0 && self.elu_alpha.is_finite()) {
            return fail(format!("elu alpha must be > 0, got {}", self.elu_alpha));
        }
        if self.worker_batch < 1 {
            return fail("worker batch must be >= 1".into());
        }
        if self.workers < 1 {
            return fail("workers must be >= 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub examples_seen: usize,
    pub rounds: usize,
    pub batches: usize,
    pub duration: Duration,
}

#[derive(Debug, Clone)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub connectome: Connectome,
}

/// Deterministic permutation of `0..n` for the given seed and epoch.
pub fn shuffle_epoch(dataset: &Dataset, seed: u64, epoch: usize) -> Result<Vec<usize>> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stream 0 belongs to weight initialization
    rng.set_stream(epoch as u64 + 1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    order.shuffle(&mut rng);
    Ok(order)
}

/// Sequential SGD over `batch` on a private copy of `snapshot`; returns the
/// net delta (final weights minus snapshot weights).
pub fn worker_run<'a>(
    snapshot: &Connectome,
    batch: impl IntoIterator<Item = &'a Example>,
    config: &TrainerConfig,
) -> Result<WeightDelta> {
    let mut local = snapshot.clone();
    let mut ws = Workspace::new(&local);
    let mut seen = 0;
    for ex in batch {
        local.sgd_step(&mut ws, &ex.pixels, &ex.target, config.eta, config.lambda)?;
        seen += 1;
    }
    if seen == 0 {
        return Err(Error::EmptyDataset);
    }
    let weights: Vec<Vec<f64>> = local
        .weights()
        .iter()
        .zip(snapshot.weights())
        .map(|(after, before)| after.iter().zip(before).map(|(a, b)| a - b).collect())
        .collect();
    if weights.iter().flatten().any(|d| !d.is_finite()) {
        return Err(Error::Diverged);
    }
    Ok(WeightDelta { weights })
}

pub fn merge_deltas(deltas: &[WeightDelta], mode: MergeMode) -> Result<WeightDelta> {
    let (first, rest) = deltas.split_first().ok_or(Error::NoDeltas)?;
    let mut acc = first.clone();
    for d in rest {
        if !acc.same_shape(d) {
            return Err(Error::ShapeMismatch);
        }
        for (a, b) in acc.weights.iter_mut().zip(&d.weights) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += y;
            }
        }
    }
    if mode == MergeMode::AverageSync {
        let n = deltas.len() as f64;
        for x in acc.weights.iter_mut().flatten() {
            *x /= n;
        }
    }
    Ok(acc)
}

/// Batch `k` of an epoch covers `order[k*b .. min((k+1)*b, n)]`.
fn batch_ranges(n: usize, worker_batch: usize) -> Vec<std::ops::Range<usize>> {
    (0..n)
        .step_by(worker_batch)
        .map(|start| start..(start + worker_batch).min(n))
        .collect()
}

type Job = (usize, Arc<Connectome>, std::ops::Range<usize>);

/// One epoch of synchronous merge rounds.
pub fn train_epoch(
    master: Connectome,
    dataset: &Dataset,
    config: &TrainerConfig,
    epoch: usize,
) -> Result<(Connectome, EpochStats)> {
    config.validate()?;
    let start = Instant::now();
    let order = shuffle_epoch(dataset, config.seed, epoch)?;
    let batches = batch_ranges(order.len(), config.worker_batch);
    let order_ref: &[usize] = &order;
    let batch_examples = move |range: std::ops::Range<usize>| {
        order_ref[range].iter().map(move |&i| &dataset.examples[i])
    };

    let mut master = Arc::new(master);
    let mut rounds = 0;

    match config.execution {
        Execution::Inline => {
            for (round_idx, round) in batches.chunks(config.workers).enumerate() {
                let mut deltas = Vec::with_capacity(round.len());
                for (k, range) in round.iter().enumerate() {
                    let batch = round_idx * config.workers + k;
                    let d = worker_run(&master, batch_examples(range.clone()), config).map_err(|e| {
                        Error::Worker {
                            batch,
                            source: Box::new(e),
                        }
                    })?;
                    deltas.push(d);
                }
                let merged = merge_deltas(&deltas, config.merge_mode)?;
                Arc::make_mut(&mut master).apply_delta_in_place(&merged)?;
                rounds += 1;
            }
        }
        Execution::Threads => {
            thread::scope(|scope| -> Result<()> {
                let (result_tx, result_rx) = mpsc::channel::<(usize, Result<WeightDelta>)>();
                let mut job_txs = Vec::with_capacity(config.workers);
                for _ in 0..config.workers {
                    let (job_tx, job_rx) = mpsc::channel::<Job>();
                    job_txs.push(job_tx);
                    let result_tx = result_tx.clone();
                    let batch_examples = &batch_examples;
                    scope.spawn(move || {
                        for (batch, snapshot, range) in job_rx {
                            let res = worker_run(&snapshot, batch_examples(range), config);
                            drop(snapshot);
                            if result_tx.send((batch, res)).is_err() {
                                break;
                            }
                        }
                    });
                }
                drop(result_tx);

                for (round_idx, round) in batches.chunks(config.workers).enumerate() {
                    for (k, range) in round.iter().enumerate() {
                        let batch = round_idx * config.workers + k;
                        job_txs[k]
                            .send((batch, Arc::clone(&master), range.clone()))
                            .expect("worker thread exited early");
                    }
                    let mut results = Vec::with_capacity(round.len());
                    for _ in 0..round.len() {
                        let (batch, res) = result_rx.recv().expect("worker thread exited early");
                        let d = res.map_err(|e| Error::Worker {
                            batch,
                            source: Box::new(e),
                        })?;
                        results.push((batch, d));
                    }
                    if config.deterministic_order {
                        results.sort_by_key(|(batch, _)| *batch);
                    }
                    let deltas: Vec<WeightDelta> = results.into_iter().map(|(_, d)| d).collect();
                    let merged = merge_deltas(&deltas, config.merge_mode)?;
                    Arc::make_mut(&mut master).apply_delta_in_place(&merged)?;
                    rounds += 1;
                }
                // closing the job channels lets the workers exit before the scope joins them
                drop(job_txs);
                Ok(())
            })?;
        }
    }

    let stats = EpochStats {
        examples_seen: order.len(),
        rounds,
        batches: batches.len(),
        duration: start.elapsed(),
    };
    let master = Arc::try_unwrap(master).unwrap_or_else(|shared| (*shared).clone());
    Ok((master, stats))
}

/// Fraction of examples whose prediction equals the label.
pub fn evaluate(c: &Connectome, dataset: &Dataset) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut ws = Workspace::new(c);
    let mut correct = 0usize;
    for ex in &dataset.examples {
        if c.predict_with(&mut ws, &ex.pixels)? == ex.label {
            correct += 1;
        }
    }
    Ok(correct as f64 / dataset.len() as f64)
}

pub fn train(master: Connectome, train_set: &Dataset, test_set: &Dataset, config: &TrainerConfig) -> Result<TrainReport> {
    train_with(master, train_set, test_set, config, |_, _| Ok(()))
}

/// Like [`train`], calling `on_epoch` after every evaluated epoch.
pub fn train_with(
    master: Connectome,
    train_set: &Dataset,
    test_set: &Dataset,
    config: &TrainerConfig,
    mut on_epoch: impl FnMut(&EpochRecord, &Connectome) -> Result<()>,
) -> Result<TrainReport> {
    config.validate()?;
    for ds in [train_set, test_set] {
        if let Some(ex) = ds.examples.first() {
            if ex.pixels.len() != master.input_size() {
                return Err(Error::LengthMismatch {
                    expected: master.input_size(),
                    actual: ex.pixels.len(),
                });
            }
        }
    }
    let mut connectome = master;
    let mut epochs = Vec::with_capacity(config.epochs);
    for epoch in 0..config.epochs {
        let (next, stats) = train_epoch(connectome, train_set, config, epoch)?;
        connectome = next;
        let record = EpochRecord {
            worker_count: config.workers,
            epoch,
            repetition: 0,
            duration_seconds: stats.duration.as_secs_f64(),
            train_accuracy: evaluate(&connectome, train_set)?,
            test_accuracy: evaluate(&connectome, test_set)?,
        };
        on_epoch(&record, &connectome)?;
        epochs.push(record);
    }
    Ok(TrainReport { epochs, connectome })
}
