//! Scalar and vector math: activations and their derivatives, the elastic-net
//! penalty, and the quadratic loss.
//!
//! Everything here is a pure function over `f64`.

use crate::error::{Error, Result};

/// Activation applied to a whole layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActivationKind {
    Identity,
    Elu,
    SoftMax,
}

#[inline]
pub fn identity(x: f64) -> f64 {
    x
}

#[inline]
pub fn identity_deriv(_x: f64) -> f64 {
    1.0
}

/// Exponential linear unit: `x` for `x >= 0`, `alpha * (e^x - 1)` otherwise.
#[inline]
pub fn elu(alpha: f64, x: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x.exp_m1()
    }
}

/// Derivative of [`elu`]. At exactly zero this returns `alpha`, not 1.
#[inline]
pub fn elu_deriv(alpha: f64, x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x == 0.0 {
        alpha
    } else {
        elu(alpha, x) + alpha
    }
}

/// Max-shifted softmax. Never overflows for finite input.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    let mut out = v.to_vec();
    softmax_in_place(&mut out)?;
    Ok(out)
}

pub fn softmax_in_place(v: &mut [f64]) -> Result<()> {
    if v.is_empty() {
        return Err(Error::EmptySoftmax);
    }
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        // x - max is <= 0, but can still overflow to -inf for |x| near f64::MAX
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
    Ok(())
}

/// Diagonal term of the softmax Jacobian, expressed in the activated value.
#[inline]
pub fn softmax_deriv(activated: f64) -> f64 {
    (1.0 - activated) * activated
}

#[inline]
pub fn sgn(w: f64) -> f64 {
    if w > 0.0 {
        1.0
    } else if w < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[inline]
pub fn elastic_net_penalty(w: f64, lambda: f64) -> f64 {
    lambda * (w.abs() + w * w)
}

#[inline]
pub fn elastic_net_grad(w: f64, lambda: f64) -> f64 {
    lambda * (sgn(w) + 2.0 * w)
}

/// `½·Σ(t − out)² + λ·½·Σ(|w| + w²)`, always nonnegative.
pub fn quadratic_loss(
    targets: &[f64],
    outputs: &[f64],
    all_weights: &[f64],
    lambda: f64,
) -> Result<f64> {
    if targets.len() != outputs.len() {
        return Err(Error::LengthMismatch {
            expected: targets.len(),
            actual: outputs.len(),
        });
    }
    let data: f64 = targets
        .iter()
        .zip(outputs)
        .map(|(t, o)| (t - o) * (t - o))
        .sum();
    let penalty: f64 = if lambda == 0.0 {
        0.0
    } else {
        all_weights.iter().map(|w| w.abs() + w * w).sum()
    };
    Ok(0.5 * data + lambda * 0.5 * penalty)
}
