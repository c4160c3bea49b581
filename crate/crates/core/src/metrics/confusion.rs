use serde::{Deserialize, Serialize};

use crate::data::Truth;
use crate::error::{Error, Result};
use crate::inference::{decide, Decision, EvalRecord};

/// Row-normalized `(N + 1) x (N + 1)` matrix. Rows are the true in-set
/// classes followed by out-of-set; columns are the predicted classes followed
/// by reject. A row is `None` when no record has that truth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub rows: Vec<Option<Vec<f64>>>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.rows.len() - 1
    }

    /// CSV grid with a header row; undefined rows are left blank.
    pub fn to_csv(&self, class_names: &[String]) -> String {
        let n = self.num_classes();
        let name = |i: usize| class_names.get(i).cloned().unwrap_or_else(|| (i + 1).to_string());
        let mut out = String::from("true");
        for j in 0..n {
            out.push(',');
            out.push_str(&name(j));
        }
        out.push_str(",reject\n");
        for (i, row) in self.rows.iter().enumerate() {
            out.push_str(&if i < n { name(i) } else { "out_of_set".into() });
            match row {
                Some(r) => r.iter().for_each(|v| out.push_str(&format!(",{v}"))),
                None => (0..=n).for_each(|_| out.push(',')),
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion_with_rejection(records: &[EvalRecord], num_classes: usize, nu: f64) -> Result<ConfusionMatrix> {
    let n = num_classes;
    let mut counts = vec![vec![0usize; n + 1]; n + 1];
    for r in records {
        let row = match r.truth {
            Truth::InSet(y) if y < n => y,
            Truth::InSet(y) => return Err(Error::Label { label: y, classes: n }),
            Truth::OutOfSet => n,
        };
        let col = match decide(r.y_star, r.xi, nu) {
            Decision::Accept(k) if k < n => k,
            Decision::Accept(k) => return Err(Error::Label { label: k, classes: n }),
            Decision::Reject => n,
        };
        counts[row][col] += 1;
    }
    let rows = counts
        .into_iter()
        .map(|row| {
            let total: usize = row.iter().sum();
            (total > 0).then(|| row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect();
    Ok(ConfusionMatrix { rows })
}
