//! Confusion matrices and classification reports.
//!
//! Per-class precision, recall and F1 are computed one-vs-rest. Accuracy is
//! `trace / total`; for a single class `(TP + TN) / total` over the binary
//! one-vs-rest matrix, and the multiclass trace form is what the report
//! prints. A zero denominator yields 0 and sets a flag on the row.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{truth} true labels but {predicted} predictions")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("label {0:?} is not in the label order")]
    UnknownLabel(String),
    #[error("duplicate label {0:?} in the label order")]
    DuplicateLabel(String),
    #[error("cannot report on an empty confusion matrix")]
    Empty,
}

pub type Result<T> = std::result::Result<T, MetricsError>;

/// Rows are true labels, columns predicted labels.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<String>) -> Self {
        let n = labels.len();
        Self { labels, counts: vec![vec![0; n]; n] }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.labels.len()).map(|i| self.counts[i][i]).sum()
    }

    /// Applies the permutation `order` (new position -> old index) to both
    /// axes.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            labels: order.iter().map(|&i| self.labels[i].clone()).collect(),
            counts: order.iter().map(|&r| order.iter().map(|&c| self.counts[r][c]).collect()).collect(),
        }
    }
}

pub fn confusion<S: AsRef<str>>(truth: &[S], predicted: &[S], label_order: &[String]) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    for (i, l) in label_order.iter().enumerate() {
        if label_order[..i].contains(l) {
            return Err(MetricsError::DuplicateLabel(l.clone()));
        }
    }
    let index = |s: &str| {
        label_order.iter().position(|l| l == s).ok_or_else(|| MetricsError::UnknownLabel(s.to_string()))
    };
    let mut cm = ConfusionMatrix::zeros(label_order.to_vec());
    for (t, p) in truth.iter().zip(predicted) {
        let (t, p) = (index(t.as_ref())?, index(p.as_ref())?);
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

/// Same as [`confusion`] for labels already given as indices.
pub fn confusion_indices(truth: &[usize], predicted: &[usize], labels: Vec<String>) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(MetricsError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    let mut cm = ConfusionMatrix::zeros(labels);
    let n = cm.labels.len();
    for (&t, &p) in truth.iter().zip(predicted) {
        if t >= n || p >= n {
            return Err(MetricsError::UnknownLabel(t.max(p).to_string()));
        }
        cm.counts[t][p] += 1;
    }
    Ok(cm)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub label: String,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// The class was never predicted, so precision is 0 by convention.
    pub no_predictions: bool,
    /// The class has no true instances, so recall is 0 by convention.
    pub no_instances: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Averages {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub total: u64,
    /// Unweighted mean over classes with support.
    pub macro_avg: Averages,
    /// Support-weighted mean.
    pub weighted_avg: Averages,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * (precision * recall) / (precision + recall)
    }
}

pub fn report(cm: &ConfusionMatrix) -> Result<ClassificationReport> {
    let total = cm.total();
    if total == 0 {
        return Err(MetricsError::Empty);
    }
    let n = cm.labels.len();
    let classes: Vec<ClassMetrics> = (0..n)
        .map(|i| {
            let tp = cm.counts[i][i];
            let support: u64 = cm.counts[i].iter().sum();
            let predicted: u64 = (0..n).map(|r| cm.counts[r][i]).sum();
            let (precision, no_predictions) = ratio(tp, predicted);
            let (recall, no_instances) = ratio(tp, support);
            ClassMetrics {
                label: cm.labels[i].clone(),
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                no_predictions,
                no_instances,
            }
        })
        .collect();

    let present: Vec<&ClassMetrics> = classes.iter().filter(|c| c.support > 0).collect();
    let mean = |f: fn(&ClassMetrics) -> f64| present.iter().map(|c| f(c)).sum::<f64>() / present.len() as f64;
    let weighted =
        |f: fn(&ClassMetrics) -> f64| classes.iter().map(|c| f(c) * c.support as f64).sum::<f64>() / total as f64;
    Ok(ClassificationReport {
        accuracy: cm.trace() as f64 / total as f64,
        total,
        macro_avg: Averages { precision: mean(|c| c.precision), recall: mean(|c| c.recall), f1: mean(|c| c.f1) },
        weighted_avg: Averages {
            precision: weighted(|c| c.precision),
            recall: weighted(|c| c.recall),
            f1: weighted(|c| c.f1),
        },
        classes,
    })
}

impl ClassificationReport {
    /// Aligned text table with values rounded to two decimals.
    pub fn render_text(&self) -> String {
        let width = self.classes.iter().map(|c| c.label.len()).chain(["weighted avg".len()]).max().unwrap_or(0);
        let mut out = format!("{:>width$} {:>9} {:>9} {:>9} {:>9}\n\n", "", "precision", "recall", "f1-score", "support");
        for c in &self.classes {
            let flag = if c.no_predictions || c.no_instances { " *" } else { "" };
            out.push_str(&format!(
                "{:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}{flag}\n",
                c.label, c.precision, c.recall, c.f1, c.support
            ));
        }
        out.push('\n');
        out.push_str(&format!("{:>width$} {:>9} {:>9} {:>9.2} {:>9}\n", "accuracy", "", "", self.accuracy, self.total));
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            out.push_str(&format!(
                "{:>width$} {:>9.2} {:>9.2} {:>9.2} {:>9}\n",
                name, a.precision, a.recall, a.f1, self.total
            ));
        }
        if self.classes.iter().any(|c| c.no_predictions || c.no_instances) {
            out.push_str("\n* zero denominator: the metric is reported as 0\n");
        }
        out
    }

    /// CSV with full-precision values: per-class rows, then accuracy and the
    /// two averages.
    pub fn render_csv(&self) -> String {
        use crate::util::fmt_f64;
        let mut out = String::from("label,precision,recall,f1,support\n");
        for c in &self.classes {
            out.push_str(&format!(
                "{},{},{},{},{}\n",
                c.label,
                fmt_f64(c.precision),
                fmt_f64(c.recall),
                fmt_f64(c.f1),
                c.support
            ));
        }
        out.push_str(&format!("accuracy,,,{},{}\n", fmt_f64(self.accuracy), self.total));
        for (name, a) in [("macro avg", self.macro_avg), ("weighted avg", self.weighted_avg)] {
            out.push_str(&format!(
                "{name},{},{},{},{}\n",
                fmt_f64(a.precision),
                fmt_f64(a.recall),
                fmt_f64(a.f1),
                self.total
            ));
        }
        out
    }

    pub fn render_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}
