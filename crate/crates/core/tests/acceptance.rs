//! Acceptance suite. Prints one line per criterion and exits nonzero if any fails.
//!
//! MNIST is read from `$NNXP_MNIST_DIR` or `data/mnist` at the workspace root
//! (see `scripts/fetch_mnist.sh`). Set `NNXP_SPEEDUP_FULL=1` to time the speedup
//! sweep on the full training set with the stricter floor.

#![allow(clippy::needless_range_loop)]

mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, ExitCode};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use nnxp::bench::{self, SweepPlan};
use nnxp::cli::persist::{self, encoded_len};
use nnxp::dataio::{self, DataFormat};
use nnxp::mathcore::softmax;
use nnxp::trainer::{self, train_epoch, TrainReport};
use nnxp::{Connectome, Dataset, Execution, TrainerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use common::{fd_gradient, max_weight_diff, mnist_dir, rel_err, simulate_rounds};

const DEFAULT_TOPOLOGY: [usize; 3] = [784, 100, 10];

enum Outcome {
    Pass(String),
    Fail(String),
    NotApplicable(String),
}

type Check = fn() -> Outcome;

fn verdict(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn mnist() -> Result<&'static (Dataset, Dataset), String> {
    static DATA: OnceLock<Result<(Dataset, Dataset), String>> = OnceLock::new();
    DATA.get_or_init(|| {
        let dir = mnist_dir();
        dataio::load_mnist_dir(&dir, DataFormat::Idx).map_err(|e| {
            format!("MNIST unavailable at {} ({e}); run scripts/fetch_mnist.sh or set NNXP_MNIST_DIR", dir.display())
        })
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn config(workers: usize, epochs: usize) -> TrainerConfig {
    TrainerConfig { workers, epochs, ..TrainerConfig::default() }
}

fn mnist_run(workers: usize) -> Result<&'static TrainReport, String> {
    static ONE: OnceLock<Result<TrainReport, String>> = OnceLock::new();
    static FOUR: OnceLock<Result<TrainReport, String>> = OnceLock::new();
    static SIXTEEN: OnceLock<Result<TrainReport, String>> = OnceLock::new();
    let cell = match workers {
        1 => &ONE,
        4 => &FOUR,
        16 => &SIXTEEN,
        _ => unreachable!(),
    };
    cell.get_or_init(|| {
        let (train_set, test_set) = mnist()?;
        let cfg = config(workers, 2);
        let master = Connectome::init(&DEFAULT_TOPOLOGY, cfg.elu_alpha, cfg.seed).map_err(|e| e.to_string())?;
        trainer::train(master, train_set, test_set, &cfg).map_err(|e| e.to_string())
    })
    .as_ref()
    .map_err(Clone::clone)
}

fn accuracies(r: &TrainReport) -> String {
    r.epochs
        .iter()
        .map(|e| format!("epoch {}: {:.4}", e.epoch + 1, e.test_accuracy))
        .collect::<Vec<_>>()
        .join(", ")
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    let mut worst: f64 = 0.0;
    let mut compared = 0;
    for net in 0..20 {
        let init = Connectome::init(&[4, 3, 2], 0.5, net).unwrap();
        let weights = init
            .weights()
            .iter()
            .map(|l| l.iter().map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect();
        let c = Connectome::from_parts(vec![4, 3, 2], weights, 0.5).unwrap();
        let input: Vec<f64> = (0..4).map(|_| rng.gen_range(0.0..255.0)).collect();
        let label = rng.gen_range(0..2);
        let targets: Vec<f64> = (0..2).map(|k| if k == label { 1.0 } else { 0.0 }).collect();

        let trace = c.forward(&input).unwrap();
        let exact = c.gradient(&trace, &targets).unwrap();
        let delta = c.backward(&trace, &targets, 0.8, 0.0).unwrap();
        let fd = fd_gradient(&c, &input, &targets, 1e-5);
        for l in 0..fd.len() {
            let step = 0.8 * c.layer_gain(l);
            for k in 0..fd[l].len() {
                worst = worst
                    .max(rel_err(exact.weights[l][k], -fd[l][k], 1e-3))
                    .max(rel_err(delta.weights[l][k] / step, -fd[l][k], 1e-3));
                compared += 2;
            }
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst < 1e-6 && elapsed < Duration::from_secs(5),
        format!("{compared} comparisons, max rel err {worst:.2e}, {:.2}s", elapsed.as_secs_f64()),
    )
}

fn softmax_properties() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let (mut worst_sum, mut worst_shift) = (0.0f64, 0.0f64);
    let mut non_finite = 0;
    for i in 0..1000 {
        let n = rng.gen_range(1..=32);
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-50.0..50.0)).collect();
        let s = softmax(&v).unwrap();
        worst_sum = worst_sum.max((s.iter().sum::<f64>() - 1.0).abs());
        let c = rng.gen_range(-1000.0..1000.0);
        let shifted = softmax(&v.iter().map(|x| x + c).collect::<Vec<_>>()).unwrap();
        worst_shift = s.iter().zip(&shifted).map(|(a, b)| (a - b).abs()).fold(worst_shift, f64::max);

        let extreme: Vec<f64> = (0..n)
            .map(|k| match (i + k) % 4 {
                0 => f64::MAX,
                1 => -f64::MAX,
                2 => rng.gen_range(-1.0..1.0) * 1e308,
                _ => f64::MIN_POSITIVE,
            })
            .collect();
        let e = softmax(&extreme).unwrap();
        if e.iter().any(|x| !x.is_finite()) {
            non_finite += 1;
        }
    }
    let elapsed = start.elapsed();
    verdict(
        worst_sum <= 1e-12 && worst_shift <= 1e-12 && non_finite == 0 && elapsed < Duration::from_secs(1),
        format!(
            "sum err {worst_sum:.1e}, shift err {worst_shift:.1e}, {non_finite} non-finite, {:.3}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn sequential_equivalence() -> Outcome {
    let (train_set, _) = match mnist() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e),
    };
    let start = Instant::now();
    let subset = train_set.truncated(1000);
    let cfg = TrainerConfig { execution: Execution::Threads, deterministic_order: true, ..config(4, 2) };
    let mut threaded = Connectome::init(&DEFAULT_TOPOLOGY, cfg.elu_alpha, cfg.seed).unwrap();
    let mut simulated = threaded.clone();
    let mut worst: f64 = 0.0;
    for epoch in 0..cfg.epochs {
        threaded = train_epoch(threaded, &subset, &cfg, epoch).unwrap().0;
        simulated = simulate_rounds(&simulated, &subset, &cfg, epoch);
        worst = worst.max(max_weight_diff(&threaded, &simulated));
    }
    let elapsed = start.elapsed();
    verdict(
        worst <= 1e-12 && elapsed < Duration::from_secs(30),
        format!("max weight diff {worst:.1e} over {} epochs, {:.2}s", cfg.epochs, elapsed.as_secs_f64()),
    )
}

fn accuracy_one_worker() -> Outcome {
    match mnist_run(1) {
        Ok(r) => verdict(
            r.epochs[0].test_accuracy >= 0.91 && r.epochs[1].test_accuracy >= 0.93,
            format!("{} (floors 0.91, 0.93)", accuracies(r)),
        ),
        Err(e) => Outcome::Fail(e),
    }
}

fn accuracy_sixteen_workers() -> Outcome {
    match mnist_run(16) {
        Ok(r) => verdict(r.epochs[1].test_accuracy >= 0.88, format!("{} (floor 0.88)", accuracies(r))),
        Err(e) => Outcome::Fail(e),
    }
}

/// Distinct (package, core) pairs in /proc/cpuinfo, else the logical CPU count.
fn physical_cores() -> usize {
    let logical = std::thread::available_parallelism().map_or(1, |n| n.get());
    let Ok(info) = fs::read_to_string("/proc/cpuinfo") else {
        return logical;
    };
    let mut cores = std::collections::BTreeSet::new();
    let mut package = "";
    for line in info.lines() {
        if let Some((key, value)) = line.split_once(':') {
            match key.trim() {
                "physical id" => package = value.trim(),
                "core id" => {
                    cores.insert((package.to_string(), value.trim().to_string()));
                }
                _ => {}
            }
        }
    }
    if cores.is_empty() {
        logical
    } else {
        cores.len()
    }
}

fn speedup() -> Outcome {
    let (train_set, test_set) = match mnist() {
        Ok(d) => d,
        Err(e) => return Outcome::Fail(e),
    };
    let full = std::env::var("NNXP_SPEEDUP_FULL").is_ok_and(|v| v == "1");
    let (train_set, floor) = if full { (train_set.clone(), 1.8) } else { (train_set.truncated(6000), 1.5) };
    let plan = SweepPlan::new(DEFAULT_TOPOLOGY.to_vec(), config(1, 1), vec![1, 2, 4]);
    let result = match bench::run_sweep(&train_set, &test_set.truncated(1000), &plan) {
        Ok(r) => r,
        Err(e) => return Outcome::Fail(e.to_string()),
    };
    let medians: Vec<f64> = [1, 2, 4].iter().map(|&w| result.median_duration(w).unwrap()).collect();
    let s4 = bench::speedup(&result, 4).unwrap();
    let cores = physical_cores();
    let monotone = [1usize, 2, 4]
        .iter()
        .zip(&medians)
        .collect::<Vec<_>>()
        .windows(2)
        .filter(|w| *w[1].0 <= cores)
        .all(|w| *w[1].1 <= *w[0].1 * 1.1);
    let detail = format!(
        "{} examples, medians 1/2/4 = {:.2}/{:.2}/{:.2}s, speedup(4) = {s4:.2} (floor {floor}), {cores} physical core(s)",
        train_set.len(),
        medians[0],
        medians[1],
        medians[2]
    );
    if cores < 4 {
        Outcome::NotApplicable(format!("{detail}; requires >= 4 physical cores"))
    } else {
        verdict(s4 >= floor && monotone, format!("{detail}, monotone within 10%: {monotone}"))
    }
}

fn degradation() -> Outcome {
    match (mnist_run(1), mnist_run(4)) {
        (Ok(one), Ok(four)) => {
            let (a1, a4) = (one.epochs[1].test_accuracy, four.epochs[1].test_accuracy);
            verdict((a4 - a1).abs() <= 0.05, format!("1 worker {a1:.4}, 4 workers {a4:.4}, gap {:.4} (max 0.05)", (a4 - a1).abs()))
        }
        (Err(e), _) | (_, Err(e)) => Outcome::Fail(e),
    }
}

fn persistence() -> Outcome {
    let c = match mnist_run(1) {
        Ok(r) => r.connectome.clone(),
        Err(_) => Connectome::init(&DEFAULT_TOPOLOGY, 0.5, 8).unwrap(),
    };
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("model.nnxp");
    persist::save_connectome(&c, &path).unwrap();
    let size = fs::metadata(&path).unwrap().len() as usize;
    let back = persist::load_connectome(&path).unwrap();
    let identical = back.layer_sizes() == c.layer_sizes()
        && back.elu_alpha().to_bits() == c.elu_alpha().to_bits()
        && back.flat_weights().zip(c.flat_weights()).all(|(a, b)| a.to_bits() == b.to_bits());
    verdict(
        identical && size == 636_112 && encoded_len(&DEFAULT_TOPOLOGY) == 636_112,
        format!("bit-identical: {identical}, file size {size} bytes (expected 636112)"),
    )
}

/// Metrics CSV with the wall-clock column blanked.
fn without_durations(csv: &str) -> String {
    csv.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            if f.len() > 3 {
                f[3] = "-";
            }
            f.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

fn cli_run(dir: &Path, workers: usize, tag: &str) -> Result<(Vec<u8>, String), String> {
    let model = dir.join(format!("{tag}.nnxp"));
    let metrics = dir.join(format!("{tag}.csv"));
    let out = Command::new(env!("CARGO_BIN_EXE_nnxp"))
        .arg("train")
        .arg("--data-dir")
        .arg(mnist_dir())
        .args(["--workers", &workers.to_string(), "--epochs", "1", "--seed", "5", "--deterministic", "true"])
        .arg("--save")
        .arg(&model)
        .arg("--metrics")
        .arg(&metrics)
        .output()
        .map_err(|e| e.to_string())?;
    if !out.status.success() {
        return Err(String::from_utf8_lossy(&out.stderr).trim().to_string());
    }
    let weights = fs::read(&model).map_err(|e| e.to_string())?;
    let csv = fs::read_to_string(&metrics).map_err(|e| e.to_string())?;
    Ok((weights, csv))
}

fn determinism() -> Outcome {
    if let Err(e) = mnist() {
        return Outcome::Fail(e);
    }
    let dir = tempfile::tempdir().unwrap();
    let mut details = Vec::new();
    let mut ok = true;
    for workers in [1, 4] {
        let a = cli_run(dir.path(), workers, &format!("w{workers}a"));
        let b = cli_run(dir.path(), workers, &format!("w{workers}b"));
        match (a, b) {
            (Ok((wa, ca)), Ok((wb, cb))) => {
                let same_weights = wa == wb;
                let same_csv = without_durations(&ca) == without_durations(&cb);
                ok &= same_weights && same_csv;
                details.push(format!("{workers} worker(s): weights equal {same_weights}, metrics equal {same_csv}"));
            }
            (Err(e), _) | (_, Err(e)) => return Outcome::Fail(e),
        }
    }
    verdict(ok, details.join("; "))
}

fn main() -> ExitCode {
    let checks: [(&str, Check); 9] = [
        ("1 gradient correctness", gradient_correctness),
        ("2 softmax properties", softmax_properties),
        ("3 sequential equivalence", sequential_equivalence),
        ("4 MNIST accuracy, 1 worker", accuracy_one_worker),
        ("5 MNIST accuracy, 16 workers", accuracy_sixteen_workers),
        ("6 speedup", speedup),
        ("7 multi-worker degradation", degradation),
        ("8 persistence", persistence),
        ("9 determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let (tag, detail) = match check() {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::NotApplicable(d) => ("N/A ", d),
        };
        println!("[{tag}] {name}: {detail}");
    }
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        println!("{failed} criterion/criteria failed");
        ExitCode::FAILURE
    }
}
