use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::nn::network::Network;
use crate::tensor::{Scalar, Tensor};

/// Max-shifted softmax. Callers must pass finite values; see [`checked_softmax`].
pub fn softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let exps: Vec<T> = logits.iter().map(|&v| (v - max).exp()).collect();
    let total: T = exps.iter().copied().sum();
    exps.into_iter().map(|e| e / total).collect()
}

pub fn log_softmax<T: Scalar>(logits: &[T]) -> Vec<T> {
    let max = logits.iter().copied().fold(T::neg_infinity(), T::max);
    let lse = logits.iter().map(|&v| (v - max).exp()).sum::<T>().ln() + max;
    logits.iter().map(|&v| v - lse).collect()
}

pub fn checked_softmax(logits: &[f64]) -> Result<Vec<f64>> {
    if logits.is_empty() {
        return Err(Error::Numeric("softmax of an empty vector".into()));
    }
    if let Some(bad) = logits.iter().find(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite logit {bad}")));
    }
    Ok(softmax(logits))
}

/// `sum_s weights[s] * CE(forward(x_s), targets[s])` and its exact parameter
/// gradients. Per-sample work runs in parallel; the reduction is sequential in
/// sample order so results do not depend on the thread count.
pub fn weighted_ce_grad<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    targets: &[usize],
    weights: &[T],
) -> Result<(T, Vec<Tensor<T>>)> {
    let (terms, grads) = weighted_ce_terms(net, batch, targets, weights)?;
    Ok((terms.into_iter().fold(T::zero(), |a, v| a + v), grads))
}

/// Like [`weighted_ce_grad`] but returns each sample's weighted loss.
pub fn weighted_ce_terms<T: Scalar>(
    net: &Network<T>,
    batch: &Tensor<T>,
    targets: &[usize],
    weights: &[T],
) -> Result<(Vec<T>, Vec<Tensor<T>>)> {
    let [c, h, w] = net.architecture().input;
    let b = batch.shape().first().copied().unwrap_or(0);
    batch.expect_shape(&[b, c, h, w])?;
    if targets.len() != b || weights.len() != b {
        return Err(Error::Shape {
            expected: vec![b],
            actual: vec![targets.len(), weights.len()],
        });
    }
    let classes = net.num_outputs();
    if let Some(&label) = targets.iter().find(|&&t| t >= classes) {
        return Err(Error::Label { label, classes });
    }

    let per_sample: Vec<(T, Vec<Vec<T>>)> = (0..b)
        .into_par_iter()
        .map(|i| {
            if weights[i] == T::zero() {
                return (T::zero(), Vec::new());
            }
            net.sample_ce_grad(batch.row(i), targets[i], weights[i])
        })
        .collect();

    let mut terms = Vec::with_capacity(b);
    let mut grads: Vec<Vec<T>> = net.params().iter().map(|p| vec![T::zero(); p.len()]).collect();
    for (loss, g) in per_sample {
        terms.push(loss);
        for (acc, gi) in grads.iter_mut().zip(g) {
            for (a, v) in acc.iter_mut().zip(gi) {
                *a = *a + v;
            }
        }
    }
    let grads = net
        .params()
        .iter()
        .zip(grads)
        .map(|(p, g)| Tensor::new(p.shape().to_vec(), g))
        .collect::<Result<_>>()?;
    Ok((terms, grads))
}
