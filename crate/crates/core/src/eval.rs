//! Confusion matrices and per-class / aggregate precision, recall and F1.
//!
//! Rows of the confusion matrix are actual classes and columns predicted
//! classes. A metric whose denominator is zero is reported as 0 and flagged.

use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{data_err, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    /// Accumulates `(actual, predicted)` pairs.
    pub fn from_labels(actual: &[usize], predicted: &[usize], n_classes: usize) -> Result<Self> {
        if actual.len() != predicted.len() {
            return Err(data_err!(
                "{} actual labels but {} predictions",
                actual.len(),
                predicted.len()
            ));
        }
        let mut cm = Self::new(n_classes);
        for (&a, &p) in actual.iter().zip(predicted) {
            if a >= n_classes || p >= n_classes {
                return Err(data_err!("label pair ({a}, {p}) out of range for {n_classes} classes"));
            }
            cm.counts[a * n_classes + p] += 1;
        }
        Ok(cm)
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(data_err!("confusion matrix must be square"));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, actual: usize, predicted: usize) -> u64 {
        self.counts[actual * self.n_classes + predicted]
    }

    pub fn row(&self, actual: usize) -> &[u64] {
        &self.counts[actual * self.n_classes..(actual + 1) * self.n_classes]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.row(class).iter().sum()
    }

    pub fn predicted_count(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|a| self.get(a, class)).sum()
    }

    pub fn true_positives(&self, class: usize) -> u64 {
        self.get(class, class)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// No sample was predicted as this class.
    pub precision_undefined: bool,
    /// No sample of this class was present.
    pub recall_undefined: bool,
    pub f1_undefined: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
    pub per_class: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub micro: Aggregate,
    pub macro_avg: Aggregate,
    pub weighted: Aggregate,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

fn harmonic(p: f64, r: f64) -> (f64, bool) {
    if p + r == 0.0 {
        (0.0, true)
    } else {
        (2.0 * p * r / (p + r), false)
    }
}

/// Computes every metric from a confusion matrix.
pub fn metrics(cm: &ConfusionMatrix, class_names: &[String]) -> Result<EvalReport> {
    let n = cm.n_classes();
    if class_names.len() != n {
        return Err(data_err!("{} class names for {n} classes", class_names.len()));
    }
    let total = cm.total();
    if total == 0 {
        return Err(data_err!("confusion matrix is empty"));
    }
    let per_class: Vec<ClassMetrics> = (0..n)
        .map(|c| {
            let tp = cm.true_positives(c);
            let (precision, precision_undefined) = ratio(tp, cm.predicted_count(c));
            let (recall, recall_undefined) = ratio(tp, cm.support(c));
            let (f1, f1_undefined) = harmonic(precision, recall);
            ClassMetrics {
                precision,
                recall,
                f1,
                support: cm.support(c),
                precision_undefined,
                recall_undefined,
                f1_undefined,
            }
        })
        .collect();

    let tp_sum: u64 = (0..n).map(|c| cm.true_positives(c)).sum();
    // Single-label: global FP and FN both equal total - TP.
    let accuracy = tp_sum as f64 / total as f64;
    let micro = Aggregate {
        precision: accuracy,
        recall: accuracy,
        f1: accuracy,
    };
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    let macro_avg = Aggregate {
        precision: mean(|m| m.precision),
        recall: mean(|m| m.recall),
        f1: mean(|m| m.f1),
    };
    let wmean = |f: fn(&ClassMetrics) -> f64| {
        per_class
            .iter()
            .map(|m| f(m) * m.support as f64)
            .sum::<f64>()
            / total as f64
    };
    let weighted = Aggregate {
        precision: wmean(|m| m.precision),
        recall: wmean(|m| m.recall),
        f1: wmean(|m| m.f1),
    };
    Ok(EvalReport {
        class_names: class_names.to_vec(),
        confusion: cm.clone(),
        per_class,
        accuracy,
        micro,
        macro_avg,
        weighted,
    })
}

/// Convenience: labels straight to a report.
pub fn evaluate_labels(actual: &[usize], predicted: &[usize], class_names: &[String]) -> Result<EvalReport> {
    let cm = ConfusionMatrix::from_labels(actual, predicted, class_names.len())?;
    metrics(&cm, class_names)
}

#[derive(Serialize)]
struct ClassRecord<'a> {
    record: &'static str,
    class: &'a str,
    precision: f64,
    recall: f64,
    f1: f64,
    support: u64,
    flags: Vec<&'static str>,
}

#[derive(Serialize)]
struct AggregateRecord {
    record: &'static str,
    average: &'static str,
    precision: f64,
    recall: f64,
    f1: f64,
}

#[derive(Serialize)]
struct ConfusionRecord<'a> {
    record: &'static str,
    actual: &'a str,
    predicted: &'a [u64],
}

impl EvalReport {
    /// One JSON record per line: classes, aggregates, then confusion rows.
    pub fn to_json_lines(&self) -> String {
        let mut out = String::new();
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            let mut flags = Vec::new();
            if m.precision_undefined {
                flags.push("precision_undefined");
            }
            if m.recall_undefined {
                flags.push("recall_undefined");
            }
            if m.f1_undefined {
                flags.push("f1_undefined");
            }
            let rec = ClassRecord {
                record: "class",
                class: name,
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                support: m.support,
                flags,
            };
            out.push_str(&serde_json::to_string(&rec).expect("plain struct serialises"));
            out.push('\n');
        }
        for (average, agg) in [("micro", self.micro), ("macro", self.macro_avg), ("weighted", self.weighted)] {
            let rec = AggregateRecord {
                record: "aggregate",
                average,
                precision: agg.precision,
                recall: agg.recall,
                f1: agg.f1,
            };
            out.push_str(&serde_json::to_string(&rec).expect("plain struct serialises"));
            out.push('\n');
        }
        for (c, name) in self.class_names.iter().enumerate() {
            let rec = ConfusionRecord {
                record: "confusion",
                actual: name,
                predicted: self.confusion.row(c),
            };
            out.push_str(&serde_json::to_string(&rec).expect("plain struct serialises"));
            out.push('\n');
        }
        out
    }
}

impl fmt::Display for EvalReport {
    /// Actual classes down the side with a recall column, precision along the bottom.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let n = self.class_names.len();
        let name_w = self.class_names.iter().map(|s| s.len()).max().unwrap_or(0).max(9);
        let col_w = self
            .class_names
            .iter()
            .map(|s| s.len())
            .chain((0..n).flat_map(|a| (0..n).map(move |p| (a, p))).map(|(a, p)| self.confusion.get(a, p).to_string().len()))
            .max()
            .unwrap_or(0)
            .max(7)
            + 2;
        let mut line = format!("{:name_w$}", "Actual");
        for name in &self.class_names {
            let _ = write!(line, "{name:>col_w$}");
        }
        let _ = write!(line, "{:>col_w$}", "Recall");
        writeln!(f, "{line}")?;
        for (a, name) in self.class_names.iter().enumerate() {
            let mut line = format!("{name:name_w$}");
            for p in 0..n {
                let _ = write!(line, "{:>col_w$}", self.confusion.get(a, p));
            }
            let _ = write!(line, "{:>col_w$}", pct(self.per_class[a].recall));
            writeln!(f, "{line}")?;
        }
        let mut line = format!("{:name_w$}", "Precision");
        for m in &self.per_class {
            let _ = write!(line, "{:>col_w$}", pct(m.precision));
        }
        writeln!(f, "{line}")?;
        writeln!(f)?;
        writeln!(f, "{:10}{:>10}{:>10}{:>10}", "average", "F1", "recall", "precision")?;
        for (name, agg) in [("micro", self.micro), ("macro", self.macro_avg), ("weighted", self.weighted)] {
            writeln!(
                f,
                "{name:10}{:>10.3}{:>10.3}{:>10.3}",
                agg.f1, agg.recall, agg.precision
            )?;
        }
        write!(f, "accuracy  {:>10.4}", self.accuracy)
    }
}

fn pct(x: f64) -> String {
    format!("{:.1}%", 100.0 * x)
}
