//! Trigger-probing inference: tentative prediction, the output matrix, the
//! rejection scores and the accept/reject decision.

mod dump;
mod score;

pub use dump::{read_score_dump, write_score_dump, DumpRow};
pub use score::{aggregate_prediction, decide, score, tentative_prediction, Decision, OutputMatrix, ScoreKind};

use rayon::prelude::*;

use crate::backdoor::{inject_trigger, TriggerSet};
use crate::data::{process_image, ProcessingOp, Sample, Truth};
use crate::error::{Error, Result};
use crate::model::Classifier;
use crate::tensor::TensorF;

#[derive(Clone, Debug, PartialEq)]
pub struct EvalRecord {
    pub sample_id: String,
    pub truth: Truth,
    /// Tentative prediction, 0-based in-set class.
    pub y_star: usize,
    pub xi: f64,
    pub kind: ScoreKind,
}

/// Everything the scores need for one sample: clean logits and the output matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Probe {
    pub clean: Vec<f64>,
    pub matrix: OutputMatrix,
    pub y_star: usize,
}

impl Probe {
    pub fn score(&self, kind: ScoreKind) -> Result<f64> {
        score(kind, &self.matrix, &self.clean, self.y_star)
    }
}

/// Row `i` holds the logits of `x` tainted with trigger `i`.
pub fn build_output_matrix(clf: &Classifier, x: &TensorF, triggers: &TriggerSet) -> Result<OutputMatrix> {
    if triggers.len() != clf.num_classes {
        return Err(Error::Config(format!(
            "{} triggers for a {}-class model",
            triggers.len(),
            clf.num_classes
        )));
    }
    let mut values = Vec::with_capacity(clf.num_classes * (clf.num_classes + 1));
    for t in triggers.iter() {
        let tainted = inject_trigger(x, t, clf.alpha)?;
        values.extend(clf.logits(&tainted)?.into_iter().map(f64::from));
    }
    OutputMatrix::new(clf.num_classes, values)
}

/// Probes one image; `op` is applied before any trigger is injected.
pub fn probe(clf: &Classifier, triggers: &TriggerSet, x: &TensorF, op: Option<ProcessingOp>) -> Result<Probe> {
    let processed;
    let x = match op {
        Some(op) => {
            processed = process_image(x, op)?;
            &processed
        }
        None => x,
    };
    let clean: Vec<f64> = clf.logits(x)?.into_iter().map(f64::from).collect();
    if clean.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite logits".into()));
    }
    let y_star = tentative_prediction(&clean, clf.num_classes);
    let matrix = build_output_matrix(clf, x, triggers)?;
    Ok(Probe { clean, matrix, y_star })
}

/// Probes every sample in parallel; results keep the input order.
pub fn probe_samples(
    clf: &Classifier,
    triggers: &TriggerSet,
    samples: &[Sample],
    op: Option<ProcessingOp>,
) -> Vec<Result<Probe>> {
    samples
        .par_iter()
        .map(|s| probe(clf, triggers, &s.image, op).map_err(|e| Error::Evaluation(format!("{}: {e}", s.id))))
        .collect()
}

/// Records for one score kind from previously computed probes.
pub fn records_from_probes(samples: &[Sample], probes: &[Probe], kind: ScoreKind) -> Result<Vec<EvalRecord>> {
    if samples.len() != probes.len() {
        return Err(Error::Evaluation(format!("{} samples but {} probes", samples.len(), probes.len())));
    }
    samples
        .iter()
        .zip(probes)
        .map(|(s, p)| {
            Ok(EvalRecord {
                sample_id: s.id.clone(),
                truth: s.truth,
                y_star: p.y_star,
                xi: p.score(kind)?,
                kind,
            })
        })
        .collect()
}

#[derive(Debug, Default)]
pub struct Classified {
    pub records: Vec<EvalRecord>,
    pub decisions: Vec<Decision>,
    /// Samples that could not be evaluated, with the reason.
    pub failures: Vec<(String, Error)>,
}

pub fn classify_dataset(
    clf: &Classifier,
    triggers: &TriggerSet,
    samples: &[Sample],
    kind: ScoreKind,
    nu: f64,
    op: Option<ProcessingOp>,
) -> Result<Classified> {
    clf.check_triggers(triggers)?;
    let mut out = Classified::default();
    for (s, p) in samples.iter().zip(probe_samples(clf, triggers, samples, op)) {
        match p.and_then(|p| Ok((p.y_star, p.score(kind)?))) {
            Ok((y_star, xi)) => {
                out.decisions.push(decide(y_star, xi, nu));
                out.records.push(EvalRecord {
                    sample_id: s.id.clone(),
                    truth: s.truth,
                    y_star,
                    xi,
                    kind,
                });
            }
            Err(e) => out.failures.push((s.id.clone(), e)),
        }
    }
    Ok(out)
}
