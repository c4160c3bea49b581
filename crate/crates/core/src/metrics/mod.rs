//! Open-set evaluation: ROC and OSCR sweeps, areas, EER, threshold
//! calibration and the confusion matrix with a reject column.
//!
//! Out-of-set is the positive event. A sample counts as rejected at `nu`
//! when `xi < nu`; thresholds are swept at the midpoints between distinct
//! scores plus two infinite sentinels, so no score ever equals a threshold.

mod confusion;

pub use confusion::{confusion_with_rejection, ConfusionMatrix};

use serde::{Deserialize, Serialize};

use crate::data::Truth;
use crate::error::{Error, Result};
use crate::inference::EvalRecord;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurvePoint {
    pub nu: f64,
    pub fpr: f64,
    pub tpr: f64,
    pub fnr: f64,
    pub ccr: f64,
}

fn check_records(records: &[EvalRecord]) -> Result<(usize, usize)> {
    let known = records.iter().filter(|r| r.truth != Truth::OutOfSet).count();
    let unknown = records.len() - known;
    if known == 0 || unknown == 0 {
        return Err(Error::Evaluation(format!(
            "need in-set and out-of-set records, got {known} and {unknown}"
        )));
    }
    if let Some(r) = records.iter().find(|r| !r.xi.is_finite()) {
        return Err(Error::Evaluation(format!("{}: non-finite score", r.sample_id)));
    }
    Ok((known, unknown))
}

/// Thresholds in increasing order: `-inf`, the midpoints between
/// consecutive distinct scores, `+inf`.
fn sweep_thresholds(records: &[EvalRecord]) -> Vec<f64> {
    let mut xs: Vec<f64> = records.iter().map(|r| r.xi).collect();
    xs.sort_by(f64::total_cmp);
    xs.dedup();
    let mut out = Vec::with_capacity(xs.len() + 1);
    out.push(f64::NEG_INFINITY);
    out.extend(xs.windows(2).map(|w| w[0] + (w[1] - w[0]) / 2.0));
    out.push(f64::INFINITY);
    out
}

/// Rates at one threshold.
pub fn point_at(records: &[EvalRecord], nu: f64) -> Result<CurvePoint> {
    let (known, unknown) = check_records(records)?;
    Ok(point_counts(records, nu, known, unknown))
}

fn point_counts(records: &[EvalRecord], nu: f64, known: usize, unknown: usize) -> CurvePoint {
    let (mut fp, mut tp, mut cc) = (0usize, 0usize, 0usize);
    for r in records {
        match r.truth {
            Truth::InSet(y) => {
                if r.xi < nu {
                    fp += 1;
                } else if r.y_star == y {
                    cc += 1;
                }
            }
            Truth::OutOfSet => {
                if r.xi < nu {
                    tp += 1;
                }
            }
        }
    }
    let tpr = tp as f64 / unknown as f64;
    CurvePoint {
        nu,
        fpr: fp as f64 / known as f64,
        tpr,
        fnr: 1.0 - tpr,
        ccr: cc as f64 / known as f64,
    }
}

/// Full threshold sweep, sorted by increasing `nu` (so FPR and TPR rise from
/// 0 to 1). Each point also carries the CCR.
pub fn roc_curve(records: &[EvalRecord]) -> Result<Vec<CurvePoint>> {
    let (known, unknown) = check_records(records)?;
    let mut sorted: Vec<(f64, Truth, bool)> = records.iter().map(|r| (r.xi, r.truth, r.truth.in_set() == Some(r.y_star))).collect();
    sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
    // Single pass: advance a cursor through the sorted scores.
    let mut points = Vec::new();
    let (mut fp, mut tp, mut rejected_correct) = (0usize, 0usize, 0usize);
    let total_correct = sorted.iter().filter(|s| s.2).count();
    let mut i = 0;
    for nu in sweep_thresholds(records) {
        while i < sorted.len() && sorted[i].0 < nu {
            match sorted[i].1 {
                Truth::InSet(_) => {
                    fp += 1;
                    if sorted[i].2 {
                        rejected_correct += 1;
                    }
                }
                Truth::OutOfSet => tp += 1,
            }
            i += 1;
        }
        let tpr = tp as f64 / unknown as f64;
        points.push(CurvePoint {
            nu,
            fpr: fp as f64 / known as f64,
            tpr,
            fnr: 1.0 - tpr,
            ccr: (total_correct - rejected_correct) as f64 / known as f64,
        });
    }
    Ok(points)
}

/// The same sweep ordered by increasing FNR, for plotting CCR against FNR.
pub fn oscr_curve(records: &[EvalRecord]) -> Result<Vec<CurvePoint>> {
    let mut points = roc_curve(records)?;
    points.reverse();
    Ok(points)
}

/// Trapezoidal area of `y` over `x`; `x` must be non-decreasing.
pub fn area_under(points: &[CurvePoint], x: fn(&CurvePoint) -> f64, y: fn(&CurvePoint) -> f64) -> Result<f64> {
    let mut area = 0.0;
    for w in points.windows(2) {
        let (x0, x1) = (x(&w[0]), x(&w[1]));
        if x1 < x0 || x0.is_nan() || x1.is_nan() {
            return Err(Error::Evaluation(format!("curve not sorted by x ({x0} then {x1})")));
        }
        area += (x1 - x0) * (y(&w[0]) + y(&w[1])) / 2.0;
    }
    Ok(area)
}

pub fn au_roc(records: &[EvalRecord]) -> Result<f64> {
    area_under(&roc_curve(records)?, |p| p.fpr, |p| p.tpr)
}

pub fn au_oscr(records: &[EvalRecord]) -> Result<f64> {
    area_under(&oscr_curve(records)?, |p| p.fnr, |p| p.ccr)
}

/// Rate where FPR equals FNR, linearly interpolated between sweep points.
/// `curve` must be ordered by increasing threshold.
pub fn eer(curve: &[CurvePoint]) -> Result<f64> {
    let gap = |p: &CurvePoint| p.fpr - p.fnr;
    let i = curve
        .iter()
        .position(|p| gap(p) >= 0.0)
        .ok_or_else(|| Error::Evaluation("ROC curve never reaches FPR = FNR".into()))?;
    let hi = &curve[i];
    if gap(hi) == 0.0 || i == 0 {
        return Ok(hi.fpr);
    }
    let lo = &curve[i - 1];
    let t = -gap(lo) / (gap(hi) - gap(lo));
    Ok(lo.fpr + t * (hi.fpr - lo.fpr))
}

/// Largest threshold that rejects at most `target * n` of the in-set
/// scores: one ulp below the smallest score that must be kept, so the
/// rejected set only depends on the order of the scores.
pub fn threshold_at_fpr(scores: &[f64], target: f64) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::Evaluation("no scores to calibrate on".into()));
    }
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::Config(format!("target FPR {target} outside [0, 1]")));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Evaluation("non-finite calibration score".into()));
    }
    let mut s = scores.to_vec();
    s.sort_by(f64::total_cmp);
    let m = (target * s.len() as f64 + 1e-9).floor() as usize;
    if m >= s.len() {
        return Ok(s[s.len() - 1].next_up());
    }
    Ok(s[m].next_down())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub accuracy: f64,
    pub au_roc: f64,
    pub au_oscr: f64,
    pub eer: f64,
    pub target_fpr: f64,
    pub nu: f64,
    /// FPR actually obtained on the evaluated records at `nu`.
    pub fpr_at_nu: f64,
    pub tpr_at_fpr: f64,
    pub ccr_at_fpr: f64,
    pub confusion: ConfusionMatrix,
}

/// Closed-set accuracy over in-set records, using the tentative prediction.
pub fn closed_set_accuracy(records: &[EvalRecord]) -> Result<f64> {
    let known: Vec<_> = records.iter().filter_map(|r| r.truth.in_set().map(|y| y == r.y_star)).collect();
    if known.is_empty() {
        return Err(Error::Evaluation("no in-set records".into()));
    }
    Ok(known.iter().filter(|&&c| c).count() as f64 / known.len() as f64)
}

/// All metrics for `records`. The threshold is calibrated at `target_fpr` on
/// `calibration` scores when given, else on the in-set records themselves.
pub fn summarize(records: &[EvalRecord], num_classes: usize, target_fpr: f64, calibration: Option<&[f64]>) -> Result<EvalSummary> {
    let curve = roc_curve(records)?;
    let own: Vec<f64>;
    let cal = match calibration {
        Some(c) => c,
        None => {
            own = records.iter().filter(|r| r.truth != Truth::OutOfSet).map(|r| r.xi).collect();
            &own
        }
    };
    let nu = threshold_at_fpr(cal, target_fpr)?;
    let at = point_at(records, nu)?;
    Ok(EvalSummary {
        accuracy: closed_set_accuracy(records)?,
        au_roc: area_under(&curve, |p| p.fpr, |p| p.tpr)?,
        au_oscr: au_oscr(records)?,
        eer: eer(&curve)?,
        target_fpr,
        nu,
        fpr_at_nu: at.fpr,
        tpr_at_fpr: at.tpr,
        ccr_at_fpr: at.ccr,
        confusion: confusion_with_rejection(records, num_classes, nu)?,
    })
}

#[cfg(test)]
mod tests;
