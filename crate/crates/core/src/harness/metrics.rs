use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::{Error, Result, CLASS_COUNT, CLASS_NAMES};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub per_class: Vec<ClassMetrics>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub accuracy: f64,
    pub total: usize,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Harmonic mean, 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn confusion_matrix(predictions: &[usize], labels: &[usize], class_count: usize) -> Result<Vec<Vec<usize>>> {
    if predictions.len() != labels.len() {
        return Err(Error::invalid(format!(
            "{} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::invalid("no predictions to score"));
    }
    let mut m = vec![vec![0; class_count]; class_count];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p >= class_count || y >= class_count {
            return Err(Error::invalid(format!(
                "class pair ({y}, {p}) outside [0, {class_count})"
            )));
        }
        m[y][p] += 1;
    }
    Ok(m)
}

/// Per-class precision/recall/F1 (0 when undefined), unweighted macro
/// averages and accuracy.
pub fn compute_metrics(predictions: &[usize], labels: &[usize], class_count: usize) -> Result<Metrics> {
    Metrics::from_confusion(confusion_matrix(predictions, labels, class_count)?)
}

impl Metrics {
    pub fn from_confusion(confusion: Vec<Vec<usize>>) -> Result<Self> {
        let k = confusion.len();
        if k == 0 || confusion.iter().any(|r| r.len() != k) {
            return Err(Error::invalid("confusion matrix must be square and non-empty"));
        }
        let total: usize = confusion.iter().flatten().sum();
        if total == 0 {
            return Err(Error::invalid("confusion matrix is empty"));
        }
        let per_class: Vec<ClassMetrics> = (0..k)
            .map(|c| {
                let tp = confusion[c][c];
                let support: usize = confusion[c].iter().sum();
                let predicted: usize = confusion.iter().map(|r| r[c]).sum();
                let precision = ratio(tp, predicted);
                let recall = ratio(tp, support);
                ClassMetrics {
                    class: c,
                    precision,
                    recall,
                    f1: f1_score(precision, recall),
                    support,
                }
            })
            .collect();
        let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / k as f64;
        let correct: usize = (0..k).map(|c| confusion[c][c]).sum();
        Ok(Self {
            macro_precision: mean(|m| m.precision),
            macro_recall: mean(|m| m.recall),
            macro_f1: mean(|m| m.f1),
            accuracy: ratio(correct, total),
            total,
            per_class,
            confusion,
        })
    }
}

fn class_label(c: usize, k: usize) -> String {
    if k == CLASS_COUNT {
        CLASS_NAMES[c].to_string()
    } else {
        c.to_string()
    }
}

/// Rows are true classes, columns predictions.
pub fn write_confusion_csv<W: Write>(metrics: &Metrics, out: W) -> Result<()> {
    let k = metrics.confusion.len();
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["true\\predicted".to_string()];
    header.extend((0..k).map(|c| class_label(c, k)));
    w.write_record(&header)?;
    for (c, row) in metrics.confusion.iter().enumerate() {
        let mut rec = vec![class_label(c, k)];
        rec.extend(row.iter().map(usize::to_string));
        w.write_record(&rec)?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

/// One row per class plus a `macro` row.
pub fn write_class_metrics_csv<W: Write>(metrics: &Metrics, out: W) -> Result<()> {
    let k = metrics.per_class.len();
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["class", "precision", "recall", "f1", "support"])?;
    for m in &metrics.per_class {
        w.write_record([
            class_label(m.class, k),
            m.precision.to_string(),
            m.recall.to_string(),
            m.f1.to_string(),
            m.support.to_string(),
        ])?;
    }
    w.write_record([
        "macro".to_string(),
        metrics.macro_precision.to_string(),
        metrics.macro_recall.to_string(),
        metrics.macro_f1.to_string(),
        metrics.total.to_string(),
    ])?;
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}
