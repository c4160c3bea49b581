use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::softmax;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ScoreKind {
    #[serde(rename = "msp")]
    Msp,
    #[serde(rename = "mls")]
    Mls,
    #[serde(rename = "mls-m")]
    MlsM,
    #[serde(rename = "tls-m")]
    TlsM,
    #[default]
    #[serde(rename = "cls-m")]
    ClsM,
}

impl ScoreKind {
    pub const ALL: [ScoreKind; 5] = [ScoreKind::Msp, ScoreKind::Mls, ScoreKind::MlsM, ScoreKind::TlsM, ScoreKind::ClsM];

    pub fn name(self) -> &'static str {
        match self {
            ScoreKind::Msp => "msp",
            ScoreKind::Mls => "mls",
            ScoreKind::MlsM => "mls-m",
            ScoreKind::TlsM => "tls-m",
            ScoreKind::ClsM => "cls-m",
        }
    }
}

impl fmt::Display for ScoreKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown score kind {s:?} (expected msp, mls, mls-m, tls-m or cls-m)")))
    }
}

/// `N x (N + 1)` logits; the last column is the backdoor output.
#[derive(Clone, Debug, PartialEq)]
pub struct OutputMatrix {
    n: usize,
    values: Vec<f64>,
}

impl OutputMatrix {
    pub fn new(n: usize, values: Vec<f64>) -> Result<Self> {
        if n == 0 || values.len() != n * (n + 1) {
            return Err(Error::Shape {
                expected: vec![n, n + 1],
                actual: vec![values.len()],
            });
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("output matrix has non-finite entries".into()));
        }
        Ok(OutputMatrix { n, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n + 1) {
            return Err(Error::Shape {
                expected: vec![n, n + 1],
                actual: rows.iter().map(Vec::len).collect(),
            });
        }
        OutputMatrix::new(n, rows.concat())
    }

    pub fn num_classes(&self) -> usize {
        self.n
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * (self.n + 1) + col]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * (self.n + 1)..(i + 1) * (self.n + 1)]
    }
}

/// Argmax over the first `n` logits (the backdoor output is excluded); ties
/// go to the smallest index.
pub fn tentative_prediction(logits: &[f64], n: usize) -> usize {
    let mut best = 0;
    for (i, &v) in logits.iter().enumerate().take(n).skip(1) {
        if v > logits[best] {
            best = i;
        }
    }
    best
}

/// Rejection score of a sample with clean logits `clean` (length `N + 1`),
/// output matrix `m` and tentative prediction `y_star`.
pub fn score(kind: ScoreKind, m: &OutputMatrix, clean: &[f64], y_star: usize) -> Result<f64> {
    let n = m.num_classes();
    if clean.len() != n + 1 {
        return Err(Error::Shape {
            expected: vec![n + 1],
            actual: vec![clean.len()],
        });
    }
    if y_star >= n {
        return Err(Error::Label {
            label: y_star,
            classes: n,
        });
    }
    let xi = match kind {
        ScoreKind::ClsM => (0..n).map(|i| m.get(i, y_star)).sum::<f64>() / n as f64 + m.get(y_star, n),
        ScoreKind::TlsM => m.get(y_star, n),
        ScoreKind::MlsM => m.values.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ScoreKind::Mls => clean[..n].iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ScoreKind::Msp => softmax(&clean[..n]).into_iter().fold(f64::NEG_INFINITY, f64::max),
    };
    Ok(xi)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Decision {
    Accept(usize),
    Reject,
}

/// Accepts `y_star` only when `xi > nu`.
pub fn decide(y_star: usize, xi: f64, nu: f64) -> Decision {
    if xi > nu {
        Decision::Accept(y_star)
    } else {
        Decision::Reject
    }
}

/// Argmax of the in-set column sums of `m`.
pub fn aggregate_prediction(m: &OutputMatrix) -> usize {
    let n = m.num_classes();
    let sums: Vec<f64> = (0..n).map(|j| (0..n).map(|i| m.get(i, j)).sum()).collect();
    tentative_prediction(&sums, n)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn example() -> OutputMatrix {
        OutputMatrix::from_rows(&[vec![0.2, 0.1, 5.0], vec![4.0, 0.3, 0.1]]).unwrap()
    }

    #[test]
    fn prediction_excludes_backdoor() {
        assert_eq!(tentative_prediction(&[2.0, 5.0, 1.0, 9.0], 3), 1);
        assert_eq!(tentative_prediction(&[1.0, 1.0, 0.0], 2), 0);
    }

    #[test]
    fn hand_scores() {
        let m = example();
        let clean = [0.0; 3];
        assert!((score(ScoreKind::ClsM, &m, &clean, 0).unwrap() - 7.1).abs() < 1e-12);
        assert_eq!(score(ScoreKind::TlsM, &m, &clean, 0).unwrap(), 5.0);
        assert_eq!(score(ScoreKind::MlsM, &m, &clean, 0).unwrap(), 5.0);
        let clean = [3.0, 1.0, 0.0];
        assert_eq!(score(ScoreKind::Mls, &m, &clean, 0).unwrap(), 3.0);
        let msp = score(ScoreKind::Msp, &m, &clean, 0).unwrap();
        assert!((msp - 1.0 / (1.0 + (-2.0f64).exp())).abs() < 1e-12);
        assert!((msp - 0.881).abs() < 1e-3);
    }

    #[test]
    fn cls_m_against_symbolic_form() {
        let rows = vec![
            vec![1.0, 2.0, 3.0, 4.0],
            vec![-1.0, 0.5, 2.5, 7.0],
            vec![0.0, 9.0, -3.0, 1.5],
        ];
        let m = OutputMatrix::from_rows(&rows).unwrap();
        for y in 0..3 {
            let column: f64 = rows.iter().map(|r| r[y]).sum();
            let expected = column / 3.0 + rows[y][3];
            assert!((score(ScoreKind::ClsM, &m, &[0.0; 4], y).unwrap() - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn decision_is_strict() {
        assert_eq!(decide(1, 7.1, 5.0), Decision::Accept(1));
        assert_eq!(decide(1, 5.0, 5.0), Decision::Reject);
        assert_eq!(decide(1, -1e300, 5.0), Decision::Reject);
    }

    #[test]
    fn aggregate_hand_case() {
        assert_eq!(aggregate_prediction(&example()), 0);
        let m = OutputMatrix::from_rows(&[vec![0.0, 3.0, 0.0, 9.0], vec![1.0, 4.0, 0.0, 0.0], vec![0.0, 2.0, 1.0, 0.0]]).unwrap();
        assert_eq!(aggregate_prediction(&m), 1);
    }

    #[test]
    fn bad_inputs() {
        assert!(OutputMatrix::new(2, vec![0.0; 5]).is_err());
        assert!(OutputMatrix::new(1, vec![0.0, f64::NAN]).is_err());
        assert!(score(ScoreKind::ClsM, &example(), &[0.0; 2], 0).is_err());
        assert!(score(ScoreKind::ClsM, &example(), &[0.0; 3], 2).is_err());
        assert!("cls".parse::<ScoreKind>().is_err());
        for k in ScoreKind::ALL {
            assert_eq!(k.name().parse::<ScoreKind>().unwrap(), k);
        }
    }

    proptest! {
        #[test]
        fn prediction_invariant_under_increasing_maps(
            logits in prop::collection::vec(-20.0f64..20.0, 2..9),
            scale in 0.1f64..10.0,
            shift in -5.0f64..5.0,
        ) {
            let n = logits.len() - 1;
            let y = tentative_prediction(&logits, n);
            let mapped: Vec<f64> = logits.iter().map(|v| (0.1 * scale * v + shift).exp()).collect();
            prop_assert_eq!(tentative_prediction(&mapped, n), y);
            prop_assert_eq!(tentative_prediction(&softmax(&logits), n), y);
        }

        #[test]
        fn decision_monotone_in_score(a in -10.0f64..10.0, b in -10.0f64..10.0, nu in -10.0f64..10.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            if decide(0, lo, nu) != Decision::Reject {
                prop_assert_eq!(decide(0, hi, nu), Decision::Accept(0));
            }
        }
    }
}
