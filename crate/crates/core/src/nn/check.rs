//! Finite-difference verification of the analytic gradients.
//!
//! These helpers are part of the library surface (not just the unit tests)
//! so the end-to-end verification suite can re-run the same comparison on
//! freshly randomized instances.

use crate::nn::loss::Loss;
use crate::nn::lstm::DropoutMasks;
use crate::nn::network::LstmNetwork;

/// Flat gradient of `loss(forward(inputs), target)` from backpropagation.
pub fn analytic_gradient(
    network: &LstmNetwork,
    inputs: &[f64],
    target: &[f64],
    loss: Loss,
    masks: &DropoutMasks,
) -> Vec<f64> {
    let (out, cache) = network.forward(inputs, masks);
    let d_out = loss.gradient(&out, target);
    network.backward(&cache, &d_out).flatten()
}

/// The same gradient by central differences (h = 1e-5) on the flat
/// parameter vector, using identical dropout masks for every evaluation.
pub fn numeric_gradient(
    network: &LstmNetwork,
    inputs: &[f64],
    target: &[f64],
    loss: Loss,
    masks: &DropoutMasks,
) -> Vec<f64> {
    const H: f64 = 1e-5;
    let mut probe = network.clone();
    let base = probe.flat_params();
    let mut grad = Vec::with_capacity(base.len());
    let mut params = base.clone();
    for j in 0..base.len() {
        params[j] = base[j] + H;
        probe.set_flat_params(&params).unwrap();
        let plus = loss.value(&probe.forward(inputs, masks).0, target);
        params[j] = base[j] - H;
        probe.set_flat_params(&params).unwrap();
        let minus = loss.value(&probe.forward(inputs, masks).0, target);
        params[j] = base[j];
        grad.push((plus - minus) / (2.0 * H));
    }
    grad
}

/// Largest elementwise gap, measured against `max(|a|, |b|, 1e-3)` so that
/// near-zero gradients compare absolutely instead of blowing up the ratio.
pub fn max_relative_gap(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "gradient length mismatch");
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(1e-3))
        .fold(0.0, f64::max)
}
