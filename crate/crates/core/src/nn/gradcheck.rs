//! Central finite-difference reference for the analytic gradients. Runs in
//! `f64` and only ever calls the forward pass.

use crate::nn::loss::log_softmax;
use crate::nn::network::Network;
use crate::tensor::Tensor;

/// Denominator floor for the relative error, so components that are zero on
/// both sides compare by absolute difference.
pub const REL_FLOOR: f64 = 1e-3;

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_FLOOR)
}

/// Weighted cross-entropy computed from the forward pass alone.
pub fn forward_loss(net: &Network<f64>, batch: &Tensor<f64>, targets: &[usize], weights: &[f64]) -> f64 {
    (0..targets.len())
        .map(|i| {
            let logits = net.forward_sample(batch.row(i)).expect("batch shape checked by caller");
            -weights[i] * log_softmax(&logits)[targets[i]]
        })
        .sum()
}

/// Numerical gradient of [`forward_loss`] for every parameter, step `h`.
pub fn numeric_gradient(net: &Network<f64>, batch: &Tensor<f64>, targets: &[usize], weights: &[f64], h: f64) -> Vec<Vec<f64>> {
    let mut probe = net.clone();
    let mut out = Vec::with_capacity(net.params().len());
    for pi in 0..net.params().len() {
        let mut g = Vec::with_capacity(net.params()[pi].len());
        for j in 0..net.params()[pi].len() {
            let orig = net.params()[pi].data()[j];
            probe.params_mut()[pi].data_mut()[j] = orig + h;
            let up = forward_loss(&probe, batch, targets, weights);
            probe.params_mut()[pi].data_mut()[j] = orig - h;
            let down = forward_loss(&probe, batch, targets, weights);
            probe.params_mut()[pi].data_mut()[j] = orig;
            g.push((up - down) / (2.0 * h));
        }
        out.push(g);
    }
    out
}

/// Largest relative error between analytic and numeric gradients.
pub fn max_relative_error(analytic: &[Tensor<f64>], numeric: &[Vec<f64>]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .flat_map(|(a, n)| a.data().iter().zip(n).map(|(&a, &n)| relative_error(a, n)))
        .fold(0.0, f64::max)
}
