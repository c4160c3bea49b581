use serde::{Deserialize, Serialize};

use crate::backdoor::{Assignment, TaintPlan};
use crate::error::{Error, Result};
use crate::nn::log_softmax;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LossConfig {
    /// Weight of the matched-trigger term.
    pub lambda1: f64,
    /// Weight of the mismatched-trigger term.
    pub lambda2: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda1: 0.1,
            lambda2: 0.1,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda1", self.lambda1), ("lambda2", self.lambda2)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} = {v} must be finite and non-negative")));
            }
        }
        Ok(())
    }

    /// Per-sample `(target, weight)` for the weighted cross-entropy that
    /// reproduces [`bosc_loss`].
    pub fn sample_weight(&self, a: Assignment) -> f64 {
        match a {
            Assignment::Clean | Assignment::Mixup { .. } => 1.0,
            Assignment::Matched(_) => self.lambda1,
            Assignment::Mismatched(_) => self.lambda2,
        }
    }
}

/// The three terms of the loss; mixup samples count as clean.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub clean: f64,
    /// Already multiplied by `lambda1`.
    pub matched: f64,
    /// Already multiplied by `lambda2`.
    pub mismatched: f64,
}

impl LossBreakdown {
    pub fn total(&self) -> f64 {
        self.clean + self.matched + self.mismatched
    }
}

/// Summed cross-entropy over the clean, matched and mismatched subsets of a
/// planned batch, given one logit row per sample.
pub fn bosc_loss(logits: &[Vec<f64>], plan: &TaintPlan, cfg: &LossConfig) -> Result<LossBreakdown> {
    if logits.len() != plan.len() {
        return Err(Error::Shape {
            expected: vec![plan.len()],
            actual: vec![logits.len()],
        });
    }
    let mut out = LossBreakdown::default();
    for ((row, &a), &target) in logits.iter().zip(&plan.assignments).zip(&plan.labels) {
        if target >= row.len() {
            return Err(Error::Label {
                label: target,
                classes: row.len(),
            });
        }
        let ce = -log_softmax(row)[target];
        match a {
            Assignment::Clean | Assignment::Mixup { .. } => out.clean += ce,
            Assignment::Matched(_) => out.matched += cfg.lambda1 * ce,
            Assignment::Mismatched(_) => out.mismatched += cfg.lambda2 * ce,
        }
    }
    Ok(out)
}
