//! Score dump CSV: `sample_id,true_label,y_star,score_kind,xi,decision_at_nu`.
//! Class labels are 1-based; out-of-set truth is written as `oos` and a
//! rejection as `reject`.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::data::Truth;
use crate::error::{Error, Result};
use crate::inference::{Decision, EvalRecord, ScoreKind};

pub const OUT_OF_SET: &str = "oos";
pub const REJECT: &str = "reject";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DumpRow {
    pub sample_id: String,
    pub true_label: String,
    pub y_star: usize,
    pub score_kind: ScoreKind,
    pub xi: f64,
    pub decision_at_nu: String,
}

impl DumpRow {
    pub fn new(record: &EvalRecord, decision: Decision) -> Self {
        DumpRow {
            sample_id: record.sample_id.clone(),
            true_label: match record.truth {
                Truth::InSet(k) => (k + 1).to_string(),
                Truth::OutOfSet => OUT_OF_SET.into(),
            },
            y_star: record.y_star + 1,
            score_kind: record.kind,
            xi: record.xi,
            decision_at_nu: match decision {
                Decision::Accept(k) => (k + 1).to_string(),
                Decision::Reject => REJECT.into(),
            },
        }
    }

    /// Converts back to a record and decision, validating labels against `n` classes.
    pub fn to_record(&self, n: usize) -> Result<(EvalRecord, Decision)> {
        let bad = |reason: String| Error::format("score dump", format!("{}: {reason}", self.sample_id));
        let class = |s: &str| -> Result<usize> {
            match s.parse::<usize>() {
                Ok(k) if (1..=n).contains(&k) => Ok(k - 1),
                _ => Err(bad(format!("label {s:?} is not in 1..={n}"))),
            }
        };
        let truth = if self.true_label == OUT_OF_SET {
            Truth::OutOfSet
        } else {
            Truth::InSet(class(&self.true_label)?)
        };
        let y_star = class(&self.y_star.to_string())?;
        let decision = if self.decision_at_nu == REJECT {
            Decision::Reject
        } else {
            Decision::Accept(class(&self.decision_at_nu)?)
        };
        if !self.xi.is_finite() {
            return Err(bad("non-finite score".into()));
        }
        let record = EvalRecord {
            sample_id: self.sample_id.clone(),
            truth,
            y_star,
            xi: self.xi,
            kind: self.score_kind,
        };
        Ok((record, decision))
    }
}

pub fn write_score_dump<W: Write>(out: W, records: &[EvalRecord], decisions: &[Decision]) -> Result<()> {
    if records.len() != decisions.len() {
        return Err(Error::Evaluation(format!("{} records but {} decisions", records.len(), decisions.len())));
    }
    let mut w = csv::Writer::from_writer(out);
    for (r, d) in records.iter().zip(decisions) {
        w.serialize(DumpRow::new(r, *d)).map_err(|e| Error::format("score dump", e.to_string()))?;
    }
    w.flush().map_err(|e| Error::format("score dump", e.to_string()))
}

pub fn read_score_dump<R: Read>(input: R, n: usize) -> Result<Vec<(EvalRecord, Decision)>> {
    let mut r = csv::Reader::from_reader(input);
    let headers = r.headers().map_err(|e| Error::format("score dump", e.to_string()))?.clone();
    let expected = ["sample_id", "true_label", "y_star", "score_kind", "xi", "decision_at_nu"];
    if headers.iter().ne(expected) {
        return Err(Error::format("score dump", format!("unexpected header {:?}", headers)));
    }
    r.deserialize::<DumpRow>()
        .map(|row| row.map_err(|e| Error::format("score dump", e.to_string()))?.to_record(n))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip() {
        let records = vec![
            EvalRecord {
                sample_id: "test/in1/00000.ppm".into(),
                truth: Truth::InSet(0),
                y_star: 0,
                xi: 7.25,
                kind: ScoreKind::ClsM,
            },
            EvalRecord {
                sample_id: "test/out1/00003.ppm".into(),
                truth: Truth::OutOfSet,
                y_star: 2,
                xi: -0.5,
                kind: ScoreKind::ClsM,
            },
        ];
        let decisions = vec![Decision::Accept(0), Decision::Reject];
        let mut buf = Vec::new();
        write_score_dump(&mut buf, &records, &decisions).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("sample_id,true_label,y_star,score_kind,xi,decision_at_nu\n"));
        assert!(text.contains("test/out1/00003.ppm,oos,3,cls-m,-0.5,reject"));
        let back = read_score_dump(buf.as_slice(), 3).unwrap();
        assert_eq!(back, records.into_iter().zip(decisions).collect::<Vec<_>>());
    }

    #[test]
    fn rejects_bad_rows() {
        let head = "sample_id,true_label,y_star,score_kind,xi,decision_at_nu\n";
        for row in ["a,0,1,cls-m,1.0,1", "a,1,4,cls-m,1.0,1", "a,1,1,foo,1.0,1", "a,1,1,msp,NaN,1", "a,1,1,msp,1.0,maybe"] {
            assert!(read_score_dump(format!("{head}{row}\n").as_bytes(), 3).is_err(), "{row}");
        }
        assert!(read_score_dump("x,y\n".as_bytes(), 3).is_err());
    }
}
