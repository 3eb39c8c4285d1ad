//! Test-only oracles shared by the integration suites.
#![allow(dead_code)]

use std::path::PathBuf;

use nnxp::mathcore::quadratic_loss;
use nnxp::trainer::{merge_deltas, shuffle_epoch, worker_run};
use nnxp::{Connectome, Dataset, TrainerConfig};

/// Data term of the quadratic loss at the given weights.
pub fn loss_at(c: &Connectome, input: &[f64], targets: &[f64]) -> f64 {
    let trace = c.forward(input).unwrap();
    quadratic_loss(targets, trace.output(), &[], 0.0).unwrap()
}

/// Central finite differences of the loss, perturbing one weight at a time.
pub fn fd_gradient(c: &Connectome, input: &[f64], targets: &[f64], h: f64) -> Vec<Vec<f64>> {
    let sizes = c.layer_sizes().to_vec();
    let alpha = c.elu_alpha();
    let base = c.weights().to_vec();
    let mut out = Vec::with_capacity(base.len());
    for l in 0..base.len() {
        let mut layer = Vec::with_capacity(base[l].len());
        for k in 0..base[l].len() {
            let mut plus = base.clone();
            plus[l][k] += h;
            let mut minus = base.clone();
            minus[l][k] -= h;
            let lp = loss_at(&Connectome::from_parts(sizes.clone(), plus, alpha).unwrap(), input, targets);
            let lm = loss_at(&Connectome::from_parts(sizes.clone(), minus, alpha).unwrap(), input, targets);
            layer.push((lp - lm) / (2.0 * h));
        }
        out.push(layer);
    }
    out
}

/// `|a − b| / max(|a|, |b|, floor)`.
pub fn rel_err(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

/// Single-threaded re-enactment of one epoch of synchronous rounds: every
/// batch of a round starts from the same snapshot, deltas merge in batch order.
pub fn simulate_rounds(master: &Connectome, ds: &Dataset, cfg: &TrainerConfig, epoch: usize) -> Connectome {
    let order = shuffle_epoch(ds, cfg.seed, epoch).unwrap();
    let batches: Vec<&[usize]> = order.chunks(cfg.worker_batch).collect();
    let mut current = master.clone();
    for round in batches.chunks(cfg.workers) {
        let snapshot = current.clone();
        let deltas: Vec<_> = round
            .iter()
            .map(|b| worker_run(&snapshot, b.iter().map(|&i| &ds.examples[i]), cfg).unwrap())
            .collect();
        current = current.apply_delta(&merge_deltas(&deltas, cfg.merge_mode).unwrap()).unwrap();
    }
    current
}

pub fn max_weight_diff(a: &Connectome, b: &Connectome) -> f64 {
    a.flat_weights()
        .zip(b.flat_weights())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// MNIST directory: `$NNXP_MNIST_DIR`, else `data/mnist` at the workspace root.
pub fn mnist_dir() -> PathBuf {
    std::env::var_os("NNXP_MNIST_DIR")
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../data/mnist"))
}
