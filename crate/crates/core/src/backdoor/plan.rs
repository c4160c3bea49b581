//! Per-batch taint plan: which samples get their own class's trigger, which
//! get a mismatched trigger, which get mixup, and their effective labels.

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionConfig {
    /// Trigger blend strength.
    pub alpha: f64,
    /// Fraction of each batch tainted with matched triggers, and again with
    /// mismatched triggers.
    pub gamma: f64,
    /// Mixup perturbation strength.
    pub beta: f64,
    /// Fraction of each batch perturbed with mixup.
    pub eta: f64,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        InjectionConfig {
            alpha: 0.1,
            gamma: 0.1,
            beta: 0.15,
            eta: 0.1,
        }
    }
}

impl InjectionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("gamma", self.gamma), ("beta", self.beta), ("eta", self.eta)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if 2.0 * self.gamma + self.eta >= 1.0 {
            return Err(Error::Config(format!(
                "2*gamma + eta = {} must be below 1",
                2.0 * self.gamma + self.eta
            )));
        }
        Ok(())
    }

    /// Sizes of the matched (and mismatched) and mixup subsets for a batch.
    pub fn subset_sizes(&self, batch: usize) -> (usize, usize) {
        // The epsilon keeps e.g. 0.29 * 100 from flooring to 28.
        let floor = |f: f64| (f * batch as f64 + 1e-9).floor() as usize;
        (floor(self.gamma), floor(self.eta))
    }

    /// Smallest batch for which every non-zero fraction selects at least one sample.
    pub fn min_batch(&self) -> usize {
        (1..=10_000)
            .find(|&b| {
                let (t, m) = self.subset_sizes(b);
                (self.gamma == 0.0 || t > 0) && (self.eta == 0.0 || m > 0)
            })
            .unwrap_or(usize::MAX)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Assignment {
    Clean,
    /// Tainted with the trigger of its own class; relabeled to the backdoor class.
    Matched(usize),
    /// Tainted with the trigger of another class; label kept.
    Mismatched(usize),
    /// Perturbed with the clean image of batch member `partner`; label kept.
    Mixup { partner: usize },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TaintPlan {
    pub assignments: Vec<Assignment>,
    /// Training target per sample: the backdoor index `N` for matched samples,
    /// the true class otherwise.
    pub labels: Vec<usize>,
}

impl TaintPlan {
    pub fn clean(labels: &[usize]) -> Self {
        TaintPlan {
            assignments: vec![Assignment::Clean; labels.len()],
            labels: labels.to_vec(),
        }
    }

    pub fn len(&self) -> usize {
        self.assignments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignments.is_empty()
    }

    pub fn count(&self, pred: impl Fn(&Assignment) -> bool) -> usize {
        self.assignments.iter().filter(|a| pred(a)).count()
    }
}

/// Draws a taint plan for a batch with 0-based true labels in `0..num_classes`.
pub fn plan_batch_taint<R: Rng + ?Sized>(
    labels: &[usize],
    num_classes: usize,
    cfg: &InjectionConfig,
    rng: &mut R,
) -> Result<TaintPlan> {
    cfg.validate()?;
    let b = labels.len();
    if b == 0 {
        return Err(Error::Config("cannot plan an empty batch".into()));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
        return Err(Error::Label {
            label: bad,
            classes: num_classes,
        });
    }
    let (n_taint, n_mix) = cfg.subset_sizes(b);
    if (cfg.gamma > 0.0 && n_taint == 0) || (cfg.eta > 0.0 && n_mix == 0) {
        return Err(Error::Config(format!(
            "batch of {b} is too small for gamma = {}, eta = {} (need at least {})",
            cfg.gamma,
            cfg.eta,
            cfg.min_batch()
        )));
    }
    if n_taint > 0 && num_classes < 2 {
        return Err(Error::Config("mismatched triggers need at least two classes".into()));
    }

    let mut order: Vec<usize> = (0..b).collect();
    order.shuffle(rng);
    let mut plan = TaintPlan::clean(labels);
    for &i in &order[..n_taint] {
        plan.assignments[i] = Assignment::Matched(labels[i]);
        plan.labels[i] = num_classes;
    }
    for &i in &order[n_taint..2 * n_taint] {
        // Uniform over the other N-1 triggers.
        let mut k = rng.gen_range(0..num_classes - 1);
        if k >= labels[i] {
            k += 1;
        }
        plan.assignments[i] = Assignment::Mismatched(k);
    }
    let mut mixed = 0;
    for &i in &order[2 * n_taint..] {
        if mixed == n_mix {
            break;
        }
        let partners: Vec<usize> = (0..b).filter(|&j| labels[j] != labels[i]).collect();
        if let Some(&partner) = partners.choose(rng) {
            plan.assignments[i] = Assignment::Mixup { partner };
            mixed += 1;
        }
    }
    Ok(plan)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn labels(b: usize, n: usize) -> Vec<usize> {
        (0..b).map(|i| i % n).collect()
    }

    fn check_invariants(plan: &TaintPlan, labels: &[usize], n: usize, cfg: &InjectionConfig) -> std::result::Result<(), TestCaseError> {
        let (n_taint, n_mix) = cfg.subset_sizes(labels.len());
        prop_assert_eq!(plan.count(|a| matches!(a, Assignment::Matched(_))), n_taint);
        prop_assert_eq!(plan.count(|a| matches!(a, Assignment::Mismatched(_))), n_taint);
        prop_assert_eq!(plan.count(|a| matches!(a, Assignment::Mixup { .. })), n_mix);
        for (i, a) in plan.assignments.iter().enumerate() {
            match *a {
                Assignment::Matched(k) => {
                    prop_assert_eq!(k, labels[i]);
                    prop_assert_eq!(plan.labels[i], n);
                }
                Assignment::Mismatched(k) => {
                    prop_assert!(k != labels[i] && k < n);
                    prop_assert_eq!(plan.labels[i], labels[i]);
                }
                Assignment::Mixup { partner } => {
                    prop_assert!(labels[partner] != labels[i]);
                    prop_assert_eq!(plan.labels[i], labels[i]);
                }
                Assignment::Clean => prop_assert_eq!(plan.labels[i], labels[i]),
            }
        }
        Ok(())
    }

    #[test]
    fn default_fractions_on_twenty_samples() {
        let cfg = InjectionConfig::default();
        let l = labels(20, 5);
        let plan = plan_batch_taint(&l, 5, &cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        assert_eq!(plan.count(|a| matches!(a, Assignment::Matched(_))), 2);
        assert_eq!(plan.count(|a| matches!(a, Assignment::Mismatched(_))), 2);
        assert_eq!(plan.count(|a| matches!(a, Assignment::Mixup { .. })), 2);
        assert_eq!(plan.count(|a| *a == Assignment::Clean), 14);
    }

    #[test]
    fn zero_fractions_give_a_clean_batch() {
        let cfg = InjectionConfig {
            gamma: 0.0,
            eta: 0.0,
            ..Default::default()
        };
        let l = labels(7, 3);
        let plan = plan_batch_taint(&l, 3, &cfg, &mut ChaCha8Rng::seed_from_u64(2)).unwrap();
        assert_eq!(plan, TaintPlan::clean(&l));
    }

    #[test]
    fn too_small_batch_is_a_config_error() {
        let cfg = InjectionConfig::default();
        let err = plan_batch_taint(&labels(5, 5), 5, &cfg, &mut ChaCha8Rng::seed_from_u64(3)).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
        assert_eq!(cfg.min_batch(), 10);
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        let cfg = InjectionConfig {
            gamma: 0.4,
            eta: 0.2,
            ..Default::default()
        };
        assert!(plan_batch_taint(&labels(20, 2), 2, &cfg, &mut ChaCha8Rng::seed_from_u64(4)).is_err());
    }

    #[test]
    fn single_class_batch_skips_mixup() {
        let cfg = InjectionConfig {
            gamma: 0.0,
            ..Default::default()
        };
        let plan = plan_batch_taint(&[1; 20], 3, &cfg, &mut ChaCha8Rng::seed_from_u64(5)).unwrap();
        assert_eq!(plan.count(|a| matches!(a, Assignment::Mixup { .. })), 0);
    }

    #[test]
    fn exhaustive_small_plans() {
        let cfg = InjectionConfig::default();
        for seed in 0..200 {
            let l = labels(10 + (seed as usize % 30), 4);
            let plan = plan_batch_taint(&l, 4, &cfg, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
            check_invariants(&plan, &l, 4, &cfg).unwrap();
        }
    }

    proptest! {
        #[test]
        fn plan_invariants_hold(
            b in 10usize..80,
            n in 2usize..8,
            gamma in 0.0f64..0.3,
            eta in 0.0f64..0.3,
            seed in any::<u64>(),
        ) {
            let cfg = InjectionConfig { gamma, eta, ..Default::default() };
            prop_assume!(cfg.validate().is_ok() && b >= cfg.min_batch());
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let l: Vec<usize> = (0..b).map(|_| rand::Rng::gen_range(&mut rng, 0..n)).collect();
            prop_assume!(l.iter().any(|&x| x != l[0]));
            let plan = plan_batch_taint(&l, n, &cfg, &mut rng).unwrap();
            check_invariants(&plan, &l, n, &cfg)?;
        }
    }
}
