use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClassMetrics {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Classification report. Rows of the confusion matrix are true classes,
/// columns predicted classes.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub class_names: Vec<String>,
    pub confusion: Vec<Vec<u64>>,
    pub per_class: Vec<ClassMetrics>,
    /// Unweighted mean F1 over classes with non-zero support.
    pub macro_f1: f64,
    /// Classes left out of the macro average for lack of support.
    pub excluded: Vec<usize>,
    pub accuracy: f64,
}

impl EvalReport {
    pub fn from_predictions(class_names: Vec<String>, truth: &[usize], predicted: &[usize]) -> Result<Self> {
        if truth.len() != predicted.len() {
            return Err(Error::LengthMismatch {
                what: "predictions",
                actual: predicted.len(),
                expected: truth.len(),
            });
        }
        let k = class_names.len();
        let mut confusion = vec![vec![0u64; k]; k];
        for (&t, &p) in truth.iter().zip(predicted) {
            if t >= k || p >= k {
                return Err(Error::precondition(format!("class index out of range ({t}, {p}) for {k} classes")));
            }
            confusion[t][p] += 1;
        }
        EvalReport::from_confusion(class_names, confusion)
    }

    pub fn from_confusion(class_names: Vec<String>, confusion: Vec<Vec<u64>>) -> Result<Self> {
        let k = class_names.len();
        if confusion.len() != k || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::Shape {
                expected: format!("{k} x {k} confusion matrix"),
                actual: format!("{} rows", confusion.len()),
            });
        }
        let total: u64 = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::Empty("evaluation split"));
        }
        let mut per_class = Vec::with_capacity(k);
        let mut excluded = Vec::new();
        let mut f1_sum = 0.0;
        let mut counted = 0usize;
        for c in 0..k {
            let tp = confusion[c][c] as f64;
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|r| r[c]).sum();
            let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
            let recall = if support == 0 { 0.0 } else { tp / support as f64 };
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            if support == 0 {
                excluded.push(c);
            } else {
                f1_sum += f1;
                counted += 1;
            }
            per_class.push(ClassMetrics {
                precision,
                recall,
                f1,
                support,
            });
        }
        let correct: u64 = (0..k).map(|c| confusion[c][c]).sum();
        Ok(EvalReport {
            class_names,
            confusion,
            per_class,
            macro_f1: f1_sum / counted as f64,
            excluded,
            accuracy: correct as f64 / total as f64,
        })
    }

    /// Row-normalized confusion matrix; rows without support stay zero.
    pub fn normalized_confusion(&self) -> Vec<Vec<f64>> {
        self.confusion
            .iter()
            .map(|row| {
                let s: u64 = row.iter().sum();
                row.iter()
                    .map(|&v| if s == 0 { 0.0 } else { v as f64 / s as f64 })
                    .collect()
            })
            .collect()
    }

    /// Raw counts with a header row and a leading true-class column.
    pub fn confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for n in &self.class_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(&self.confusion) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }

    pub fn normalized_confusion_csv(&self) -> String {
        let mut out = String::from("true\\predicted");
        for n in &self.class_names {
            out.push(',');
            out.push_str(n);
        }
        out.push('\n');
        for (name, row) in self.class_names.iter().zip(self.normalized_confusion()) {
            out.push_str(name);
            for v in row {
                let _ = write!(out, ",{v:.6}");
            }
            out.push('\n');
        }
        out
    }

    /// `key=value` lines: summary metrics then per-class precision/recall/F1.
    pub fn metrics_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "macro_f1={:.6}", self.macro_f1);
        let _ = writeln!(out, "accuracy={:.6}", self.accuracy);
        let excluded: Vec<&str> = self.excluded.iter().map(|&c| self.class_names[c].as_str()).collect();
        let _ = writeln!(out, "excluded_classes={}", excluded.join(","));
        for (name, m) in self.class_names.iter().zip(&self.per_class) {
            let _ = writeln!(out, "{name}.precision={:.6}", m.precision);
            let _ = writeln!(out, "{name}.recall={:.6}", m.recall);
            let _ = writeln!(out, "{name}.f1={:.6}", m.f1);
            let _ = writeln!(out, "{name}.support={}", m.support);
        }
        out
    }
}
