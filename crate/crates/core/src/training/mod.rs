//! The training loop for both the backdoor-tainted classifier and the plain
//! baseline, plus the post-training behavioral check.

mod augment;
mod loss;

pub use augment::{augment, flip_horizontal, AugmentConfig};
pub use loss::{bosc_loss, LossBreakdown, LossConfig};

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backdoor::{inject_trigger, mixup_perturb, plan_batch_taint, Assignment, InjectionConfig, TriggerSet};
use crate::data::{compute_stats, Dataset, Sample, Truth};
use crate::error::{Error, Result};
use crate::inference::{probe, tentative_prediction};
use crate::model::{Classifier, Mode, ModelConfig};
use crate::nn::{lr_schedule, weighted_ce_terms, Adam, AdamConfig, Network};
use crate::tensor::{Tensor, TensorF};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub base_lr: f64,
    pub injection: InjectionConfig,
    pub loss: LossConfig,
    pub augment: AugmentConfig,
    pub seed: u64,
    pub mode: Mode,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 15,
            batch_size: 32,
            base_lr: 1e-4,
            injection: InjectionConfig::default(),
            loss: LossConfig::default(),
            augment: AugmentConfig::default(),
            seed: 0,
            mode: Mode::Bosc,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be at least 1".into()));
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return Err(Error::Config(format!("learning rate {} must be positive", self.base_lr)));
        }
        self.injection.validate()?;
        self.loss.validate()?;
        self.augment.validate()?;
        let min = self.effective_injection().min_batch();
        if self.batch_size < min {
            return Err(Error::Config(format!(
                "batch size {} is too small for the taint fractions (need at least {min})",
                self.batch_size
            )));
        }
        Ok(())
    }

    /// The baseline never taints or mixes.
    pub fn effective_injection(&self) -> InjectionConfig {
        match self.mode {
            Mode::Bosc => self.injection,
            Mode::Baseline => InjectionConfig {
                gamma: 0.0,
                eta: 0.0,
                ..self.injection
            },
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-batch value of each loss term.
    pub clean_loss: f64,
    pub matched_loss: Option<f64>,
    pub mismatched_loss: Option<f64>,
    pub val_accuracy: Option<f64>,
}

/// Fraction of in-set samples obeying each expected behavior: clean input
/// predicts the true class; every mismatched trigger keeps the true class;
/// the matched trigger switches to the backdoor class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Compliance {
    pub samples: usize,
    pub clean: f64,
    pub mismatched: f64,
    pub matched: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub mode: Mode,
    pub seed: u64,
    pub epochs: Vec<EpochStats>,
    pub compliance: Option<Compliance>,
    pub threads: usize,
    pub wall_clock_secs: f64,
}

impl TrainReport {
    pub fn epochs_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut out = String::from("epoch,lr,clean_loss,matched_loss,mismatched_loss,val_accuracy\n");
        for e in &self.epochs {
            out.push_str(&format!(
                "{},{},{},{},{},{}\n",
                e.epoch,
                e.lr,
                e.clean_loss,
                opt(e.matched_loss),
                opt(e.mismatched_loss),
                opt(e.val_accuracy)
            ));
        }
        out
    }
}

fn in_set_label(s: &Sample, n: usize) -> Result<usize> {
    match s.truth {
        Truth::InSet(k) if k < n => Ok(k),
        Truth::InSet(k) => Err(Error::Config(format!("{}: class {k} but the model has {n} classes", s.id))),
        Truth::OutOfSet => Err(Error::Config(format!("{}: out-of-set sample in a training split", s.id))),
    }
}

/// Trains a classifier with `num_classes` in-set classes on `data.train`.
/// `triggers` is required in bosc mode and ignored by the baseline.
pub fn train(
    data: &Dataset,
    num_classes: usize,
    model: &ModelConfig,
    cfg: &TrainConfig,
    triggers: Option<&TriggerSet>,
) -> Result<(Classifier, TrainReport)> {
    let started = Instant::now();
    cfg.validate()?;
    let n = num_classes;
    if data.train.is_empty() {
        return Err(Error::Config("training split is empty".into()));
    }
    let labels: Vec<usize> = data.train.iter().map(|s| in_set_label(s, n)).collect::<Result<_>>()?;
    for s in &data.val {
        in_set_label(s, n)?;
    }
    if let Some(missing) = (0..n).find(|k| !labels.contains(k)) {
        return Err(Error::Config(format!(
            "class {} has no training samples ({n} classes expected)",
            missing + 1
        )));
    }
    let shape: [usize; 3] = data.train[0]
        .image
        .shape()
        .try_into()
        .map_err(|_| Error::Config("training images must be [c, h, w]".into()))?;
    for s in &data.train {
        s.image.expect_shape(&shape)?;
    }
    let triggers = match cfg.mode {
        Mode::Bosc => {
            let t = triggers.ok_or_else(|| Error::Config("bosc mode needs a trigger set".into()))?;
            if t.len() != n {
                return Err(Error::Config(format!("{} triggers for {n} classes", t.len())));
            }
            if t.shape() != shape {
                return Err(Error::Shape {
                    expected: shape.to_vec(),
                    actual: t.shape().to_vec(),
                });
            }
            Some(t)
        }
        Mode::Baseline => None,
    };

    let injection = cfg.effective_injection();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let stats = compute_stats(&data.train)?;
    let mut net: Network<f32> = Network::init(model.architecture(shape, n)?, &mut rng)?;
    let mut adam = Adam::new(AdamConfig::default(), net.params());
    let min_batch = injection.min_batch();

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = lr_schedule(epoch, cfg.base_lr);
        order.shuffle(&mut rng);
        let mut sums = LossBreakdown::default();
        let mut batches = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < min_batch {
                continue;
            }
            let seeds: Vec<u64> = chunk.iter().map(|_| rng.gen()).collect();
            let clean: Vec<TensorF> = chunk
                .par_iter()
                .zip(&seeds)
                .map(|(&i, &s)| augment(&data.train[i].image, &mut ChaCha8Rng::seed_from_u64(s), &cfg.augment))
                .collect::<Result<_>>()?;
            let batch_labels: Vec<usize> = chunk.iter().map(|&i| labels[i]).collect();
            let plan = plan_batch_taint(&batch_labels, n, &injection, &mut rng)?;

            let mut inputs = Vec::with_capacity(chunk.len());
            let mut weights = Vec::with_capacity(chunk.len());
            for (i, &a) in plan.assignments.iter().enumerate() {
                let x = match a {
                    Assignment::Clean => clean[i].clone(),
                    Assignment::Matched(k) | Assignment::Mismatched(k) => {
                        let t = triggers.expect("taint only planned in bosc mode");
                        inject_trigger(&clean[i], t.get(k), injection.alpha)?
                    }
                    Assignment::Mixup { partner } => mixup_perturb(&clean[i], &clean[partner], injection.beta)?,
                };
                inputs.push(stats.normalize(&x)?);
                weights.push(cfg.loss.sample_weight(a) as f32);
            }
            let batch = Tensor::stack(&inputs)?;
            let (terms, grads) = weighted_ce_terms(&net, &batch, &plan.labels, &weights)?;
            for (&a, &t) in plan.assignments.iter().zip(&terms) {
                let t = f64::from(t);
                match a {
                    Assignment::Clean | Assignment::Mixup { .. } => sums.clean += t,
                    Assignment::Matched(_) => sums.matched += t,
                    Assignment::Mismatched(_) => sums.mismatched += t,
                }
            }
            if terms.iter().any(|t| !t.is_finite()) {
                return Err(Error::Numeric(format!("non-finite loss in epoch {epoch}")));
            }
            adam.step(net.params_mut(), &grads, lr)?;
            batches += 1;
        }
        if batches == 0 {
            return Err(Error::Config(format!(
                "no batch of at least {min_batch} samples in a {}-sample training split",
                data.train.len()
            )));
        }
        let mean = |v: f64| v / batches as f64;
        let tainted = cfg.mode == Mode::Bosc && injection.gamma > 0.0;
        let partial = Classifier {
            network: net.clone(),
            stats: stats.clone(),
            num_classes: n,
            alpha: injection.alpha,
            mode: cfg.mode,
            trigger_digest: None,
        };
        epochs.push(EpochStats {
            epoch,
            lr,
            clean_loss: mean(sums.clean),
            matched_loss: tainted.then(|| mean(sums.matched)),
            mismatched_loss: tainted.then(|| mean(sums.mismatched)),
            val_accuracy: validation_accuracy(&partial, &data.val)?,
        });
    }

    let clf = Classifier {
        network: net,
        stats,
        num_classes: n,
        alpha: injection.alpha,
        mode: cfg.mode,
        trigger_digest: triggers.map(TriggerSet::digest),
    };
    let compliance = match triggers {
        Some(t) if !data.val.is_empty() => Some(behavioral_compliance(&clf, t, &data.val)?),
        _ => None,
    };
    let report = TrainReport {
        mode: cfg.mode,
        seed: cfg.seed,
        epochs,
        compliance,
        threads: rayon::current_num_threads(),
        wall_clock_secs: started.elapsed().as_secs_f64(),
    };
    Ok((clf, report))
}

/// Closed-set accuracy of the tentative prediction on clean in-set samples.
pub fn validation_accuracy(clf: &Classifier, samples: &[Sample]) -> Result<Option<f64>> {
    if samples.is_empty() {
        return Ok(None);
    }
    let correct: Vec<bool> = samples
        .par_iter()
        .map(|s| {
            let y = in_set_label(s, clf.num_classes)?;
            let logits: Vec<f64> = clf.logits(&s.image)?.into_iter().map(f64::from).collect();
            Ok(tentative_prediction(&logits, clf.num_classes) == y)
        })
        .collect::<Result<_>>()?;
    Ok(Some(correct.iter().filter(|&&c| c).count() as f64 / samples.len() as f64))
}

pub fn behavioral_compliance(clf: &Classifier, triggers: &TriggerSet, samples: &[Sample]) -> Result<Compliance> {
    let n = clf.num_classes;
    if samples.is_empty() {
        return Err(Error::Evaluation("no samples to check".into()));
    }
    let flags: Vec<[bool; 3]> = samples
        .par_iter()
        .map(|s| {
            let y = in_set_label(s, n)?;
            let p = probe(clf, triggers, &s.image, None)?;
            let argmax = |row: &[f64]| tentative_prediction(row, n + 1);
            let clean = argmax(&p.clean) == y;
            let mismatched = (0..n).filter(|&k| k != y).all(|k| argmax(p.matrix.row(k)) == y);
            let matched = argmax(p.matrix.row(y)) == n;
            Ok([clean, mismatched, matched])
        })
        .collect::<Result<_>>()?;
    let rate = |j: usize| flags.iter().filter(|f| f[j]).count() as f64 / flags.len() as f64;
    Ok(Compliance {
        samples: flags.len(),
        clean: rate(0),
        mismatched: rate(1),
        matched: rate(2),
    })
}
