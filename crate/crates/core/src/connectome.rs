//! Network state over flat weight arrays and single-example propagation.
//!
//! Weights between layer `l` and `l + 1` live in one flat array of length
//! `(n_l + 1) * n_{l+1}`. Entry `i * n_{l+1} + j` connects source unit `i` to
//! destination unit `j`; source index `n_l` is the bias unit (activation 1).
//!
//! Every layer's values (including the raw input) are divided by
//! `layer size + 1` before its activation function runs.
//!
//! The training update does not shrink the error signal by those divisors on
//! the way back. Each layer's step is the exact loss gradient times a layer
//! gain, the product of the divisors of every layer downstream of the
//! weights (see [`Connectome::layer_gain`]). [`Connectome::gradient`] returns
//! the unscaled gradient.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::mathcore::{self, ActivationKind};

/// Half-width of the uniform weight initialization range.
pub const INIT_RANGE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Connectome {
    layer_sizes: Vec<usize>,
    weights: Vec<Vec<f64>>,
    elu_alpha: f64,
}

/// Per-layer values cached by [`Connectome::forward`] for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerTrace {
    pub pre_activation: Vec<Vec<f64>>,
    pub activated: Vec<Vec<f64>>,
}

impl LayerTrace {
    pub fn output(&self) -> &[f64] {
        self.activated.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

/// Weight update in `apply_delta` convention: `w⁺ = w + Δw`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightDelta {
    pub weights: Vec<Vec<f64>>,
}

impl WeightDelta {
    pub fn zeros_like(c: &Connectome) -> Self {
        WeightDelta {
            weights: c.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().flatten().all(|&d| d == 0.0)
    }

    pub fn negated(&self) -> Self {
        WeightDelta {
            weights: self
                .weights
                .iter()
                .map(|w| w.iter().map(|d| -d).collect())
                .collect(),
        }
    }

    pub fn same_shape(&self, other: &WeightDelta) -> bool {
        self.weights.len() == other.weights.len()
            && self
                .weights
                .iter()
                .zip(&other.weights)
                .all(|(a, b)| a.len() == b.len())
    }
}

fn check_topology(layer_sizes: &[usize]) -> Result<()> {
    if layer_sizes.len() < 2 {
        return Err(Error::Topology(format!(
            "need at least 2 layers, got {}",
            layer_sizes.len()
        )));
    }
    if layer_sizes.iter().any(|&n| n < 1) {
        return Err(Error::Topology("layer sizes must be >= 1".into()));
    }
    Ok(())
}

/// Scratch buffers for allocation-free repeated SGD steps.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    trace: LayerTrace,
    /// `deltas[l]` is the error signal of layer `l + 1` w.r.t. its raw sums.
    deltas: Vec<Vec<f64>>,
}

impl Workspace {
    pub(crate) fn new(c: &Connectome) -> Self {
        let zeros = |sizes: &[usize]| sizes.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        Workspace {
            trace: LayerTrace {
                pre_activation: zeros(&c.layer_sizes),
                activated: zeros(&c.layer_sizes),
            },
            deltas: zeros(&c.layer_sizes[1..]),
        }
    }
}

impl Connectome {
    /// Random network with every weight drawn from U[-0.1, 0.1].
    pub fn init(layer_sizes: &[usize], elu_alpha: f64, seed: u64) -> Result<Self> {
        check_topology(layer_sizes)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights = layer_sizes
            .windows(2)
            .map(|pair| {
                (0..(pair[0] + 1) * pair[1])
                    .map(|_| rng.gen_range(-INIT_RANGE..=INIT_RANGE))
                    .collect()
            })
            .collect();
        Ok(Connectome {
            layer_sizes: layer_sizes.to_vec(),
            weights,
            elu_alpha,
        })
    }

    /// Builds a connectome from explicit weights, validating every invariant.
    pub fn from_parts(layer_sizes: Vec<usize>, weights: Vec<Vec<f64>>, elu_alpha: f64) -> Result<Self> {
        check_topology(&layer_sizes)?;
        if !(elu_alpha > 0.0 && elu_alpha.is_finite()) {
            return Err(Error::Topology(format!("elu alpha must be > 0, got {elu_alpha}")));
        }
        if weights.len() != layer_sizes.len() - 1 {
            return Err(Error::ShapeMismatch);
        }
        for (pair, w) in layer_sizes.windows(2).zip(&weights) {
            if w.len() != (pair[0] + 1) * pair[1] {
                return Err(Error::ShapeMismatch);
            }
            if w.iter().any(|x| !x.is_finite()) {
                return Err(Error::Diverged);
            }
        }
        Ok(Connectome {
            layer_sizes,
            weights,
            elu_alpha,
        })
    }

    pub fn layer_sizes(&self) -> &[usize] {
        &self.layer_sizes
    }

    pub fn weights(&self) -> &[Vec<f64>] {
        &self.weights
    }

    pub fn elu_alpha(&self) -> f64 {
        self.elu_alpha
    }

    pub fn input_size(&self) -> usize {
        self.layer_sizes[0]
    }

    pub fn output_size(&self) -> usize {
        *self.layer_sizes.last().unwrap()
    }

    pub fn activation(&self, layer: usize) -> ActivationKind {
        if layer == 0 {
            ActivationKind::Identity
        } else if layer + 1 == self.layer_sizes.len() {
            ActivationKind::SoftMax
        } else {
            ActivationKind::Elu
        }
    }

    /// All weights in layer order, flattened.
    pub fn flat_weights(&self) -> impl Iterator<Item = f64> + '_ {
        self.weights.iter().flatten().copied()
    }

    pub fn forward(&self, input: &[f64]) -> Result<LayerTrace> {
        let mut ws = Workspace::new(self);
        self.forward_into(input, &mut ws.trace)?;
        Ok(ws.trace)
    }

    fn forward_into(&self, input: &[f64], trace: &mut LayerTrace) -> Result<()> {
        if input.len() != self.input_size() {
            return Err(Error::LengthMismatch {
                expected: self.input_size(),
                actual: input.len(),
            });
        }
        let scale = (self.layer_sizes[0] + 1) as f64;
        for ((pre, act), &x) in trace.pre_activation[0]
            .iter_mut()
            .zip(trace.activated[0].iter_mut())
            .zip(input)
        {
            *pre = x / scale;
            *act = mathcore::identity(*pre);
        }

        for l in 1..self.layer_sizes.len() {
            let n_out = self.layer_sizes[l];
            let w = &self.weights[l - 1];
            let (before, after) = trace.activated.split_at_mut(l);
            let source = &before[l - 1];
            let pre = &mut trace.pre_activation[l];
            pre.fill(0.0);
            for (i, &a) in source.iter().enumerate() {
                if a == 0.0 {
                    continue;
                }
                let row = &w[i * n_out..(i + 1) * n_out];
                for (p, &wij) in pre.iter_mut().zip(row) {
                    *p += a * wij;
                }
            }
            let bias = &w[source.len() * n_out..];
            let scale = (n_out + 1) as f64;
            for (p, &b) in pre.iter_mut().zip(bias) {
                *p = (*p + b) / scale;
            }

            let act = &mut after[0];
            match self.activation(l) {
                ActivationKind::Identity => act.copy_from_slice(pre),
                ActivationKind::Elu => {
                    for (a, &p) in act.iter_mut().zip(pre.iter()) {
                        *a = mathcore::elu(self.elu_alpha, p);
                    }
                }
                ActivationKind::SoftMax => {
                    act.copy_from_slice(pre);
                    mathcore::softmax_in_place(act)?;
                }
            }
        }
        Ok(())
    }

    /// Error signals per non-input layer: the negative loss gradient with
    /// respect to each unit's raw (unscaled) sum, using the pre-update weights.
    fn error_signals(&self, trace: &LayerTrace, targets: &[f64], deltas: &mut [Vec<f64>]) -> Result<()> {
        let last = self.layer_sizes.len() - 1;
        if targets.len() != self.output_size() {
            return Err(Error::LengthMismatch {
                expected: self.output_size(),
                actual: targets.len(),
            });
        }
        if trace.activated.len() != self.layer_sizes.len()
            || trace
                .activated
                .iter()
                .zip(&self.layer_sizes)
                .any(|(a, &n)| a.len() != n)
        {
            return Err(Error::ShapeMismatch);
        }

        let out = &trace.activated[last];
        let out_delta = &mut deltas[last - 1];
        for ((d, &t), &o) in out_delta.iter_mut().zip(targets).zip(out) {
            *d = t - o;
        }
        // softmax Jacobian-vector product: diagonal term plus cross terms
        let weighted: f64 = out_delta.iter().zip(out).map(|(e, s)| e * s).sum();
        let scale = (self.layer_sizes[last] + 1) as f64;
        for (d, &s) in out_delta.iter_mut().zip(out) {
            let diag = *d * mathcore::softmax_deriv(s);
            let cross = s * (*d * s - weighted);
            *d = (diag + cross) / scale;
        }

        for l in (1..last).rev() {
            let n = self.layer_sizes[l];
            let n_next = self.layer_sizes[l + 1];
            let w = &self.weights[l];
            let (lower, upper) = deltas.split_at_mut(l);
            let next = &upper[0];
            let cur = &mut lower[l - 1];
            let scale = (n + 1) as f64;
            for i in 0..n {
                let row = &w[i * n_next..(i + 1) * n_next];
                let back: f64 = row.iter().zip(next).map(|(w, d)| w * d).sum();
                let local = match self.activation(l) {
                    ActivationKind::Elu => mathcore::elu_deriv(self.elu_alpha, trace.pre_activation[l][i]),
                    _ => mathcore::identity_deriv(trace.pre_activation[l][i]),
                };
                cur[i] = back * local / scale;
            }
        }
        Ok(())
    }

    /// Product of the pre-activation divisors of layers `l + 1 ..= L`, the
    /// factor between the training step on `weights[l]` and the exact gradient.
    pub fn layer_gain(&self, l: usize) -> f64 {
        self.layer_sizes[l + 1..].iter().map(|&n| (n + 1) as f64).product()
    }

    fn apply_gains(&self, deltas: &mut [Vec<f64>]) {
        for (l, d) in deltas.iter_mut().enumerate() {
            let gain = self.layer_gain(l);
            for x in d.iter_mut() {
                *x *= gain;
            }
        }
    }

    /// Negative gradient of the data term of the quadratic loss,
    /// `−∂L/∂w`, for every weight.
    pub fn gradient(&self, trace: &LayerTrace, targets: &[f64]) -> Result<WeightDelta> {
        let mut deltas: Vec<Vec<f64>> = self.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        self.error_signals(trace, targets, &mut deltas)?;
        Ok(self.outer_updates(trace, &deltas, 1.0, 0.0))
    }

    /// Δw for every connection: `η·(δ_j·φ(x_i) − λ·(sgn(w_ij) + w_ij))`, where
    /// `δ_j` is the unit's exact error signal times the layer gain.
    pub fn backward(&self, trace: &LayerTrace, targets: &[f64], eta: f64, lambda: f64) -> Result<WeightDelta> {
        let mut deltas: Vec<Vec<f64>> = self.layer_sizes[1..].iter().map(|&n| vec![0.0; n]).collect();
        self.error_signals(trace, targets, &mut deltas)?;
        self.apply_gains(&mut deltas);
        Ok(self.outer_updates(trace, &deltas, eta, lambda))
    }

    fn outer_updates(&self, trace: &LayerTrace, deltas: &[Vec<f64>], eta: f64, lambda: f64) -> WeightDelta {
        let weights = self
            .weights
            .iter()
            .enumerate()
            .map(|(l, w)| {
                let n_out = self.layer_sizes[l + 1];
                let source = &trace.activated[l];
                let dst = &deltas[l];
                w.iter()
                    .enumerate()
                    .map(|(k, &wij)| {
                        let i = k / n_out;
                        let a = if i == source.len() { 1.0 } else { source[i] };
                        update_term(eta, lambda, dst[k % n_out], a, wij)
                    })
                    .collect()
            })
            .collect();
        WeightDelta { weights }
    }

    pub fn apply_delta(&self, d: &WeightDelta) -> Result<Connectome> {
        let mut next = self.clone();
        next.apply_delta_in_place(d)?;
        Ok(next)
    }

    pub(crate) fn apply_delta_in_place(&mut self, d: &WeightDelta) -> Result<()> {
        if d.weights.len() != self.weights.len()
            || d.weights.iter().zip(&self.weights).any(|(a, b)| a.len() != b.len())
        {
            return Err(Error::ShapeMismatch);
        }
        for (w, dw) in self.weights.iter_mut().zip(&d.weights) {
            for (x, &dx) in w.iter_mut().zip(dw) {
                *x += dx;
            }
        }
        if self.flat_weights().any(|x| !x.is_finite()) {
            return Err(Error::Diverged);
        }
        Ok(())
    }

    /// One in-place SGD step. Numerically identical to
    /// `forward` + `backward` + `apply_delta`, without the allocations.
    pub(crate) fn sgd_step(&mut self, ws: &mut Workspace, input: &[f64], targets: &[f64], eta: f64, lambda: f64) -> Result<()> {
        self.forward_into(input, &mut ws.trace)?;
        self.error_signals(&ws.trace, targets, &mut ws.deltas)?;
        self.apply_gains(&mut ws.deltas);
        for (l, w) in self.weights.iter_mut().enumerate() {
            let n_out = self.layer_sizes[l + 1];
            let source = &ws.trace.activated[l];
            let dst = &ws.deltas[l];
            for (i, row) in w.chunks_exact_mut(n_out).enumerate() {
                let a = if i == source.len() { 1.0 } else { source[i] };
                for (wij, &d) in row.iter_mut().zip(dst) {
                    *wij += update_term(eta, lambda, d, a, *wij);
                }
            }
        }
        Ok(())
    }

    /// Index of the largest output; ties go to the lowest index.
    pub fn predict(&self, input: &[f64]) -> Result<usize> {
        let trace = self.forward(input)?;
        Ok(argmax(trace.output()))
    }

    pub(crate) fn predict_with(&self, ws: &mut Workspace, input: &[f64]) -> Result<usize> {
        self.forward_into(input, &mut ws.trace)?;
        Ok(argmax(ws.trace.output()))
    }
}

#[inline]
fn update_term(eta: f64, lambda: f64, delta: f64, source: f64, w: f64) -> f64 {
    eta * (delta * source - lambda * (mathcore::sgn(w) + w))
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// `δ_i = t_i − φ(x_i)`.
pub fn output_error(targets: &[f64], activated_outputs: &[f64]) -> Result<Vec<f64>> {
    if targets.len() != activated_outputs.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            actual: activated_outputs.len(),
        });
    }
    Ok(targets.iter().zip(activated_outputs).map(|(t, o)| t - o).collect())
}
