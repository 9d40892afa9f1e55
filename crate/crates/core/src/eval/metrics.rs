use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::classify::argmax;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct MetricsReport {
    pub n_samples: usize,
    pub accuracy: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub weighted_precision: f64,
    pub weighted_recall: f64,
    pub weighted_f1: f64,
    pub top_k_accuracy: BTreeMap<usize, f64>,
    /// Rows are true classes, columns predicted classes.
    pub confusion: Vec<Vec<usize>>,
    pub audio_accuracy: Option<f64>,
}

/// Position of class `y` when classes are ranked by descending probability,
/// equal probabilities ordered by class index.
pub fn rank_of(p: &[f64], y: usize) -> usize {
    p.iter()
        .enumerate()
        .filter(|&(c, &v)| v > p[y] || (v == p[y] && c < y))
        .count()
}

fn mean(v: &[f64]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<f64>() / v.len() as f64
    }
}

/// Clip-level metrics from probability rows. Undefined precision or recall
/// (zero denominator) counts as 0.
pub fn compute_metrics(
    probs: &[Vec<f64>],
    labels: &[usize],
    n_classes: usize,
    top_ks: &[usize],
) -> Result<MetricsReport, EvalError> {
    if probs.len() != labels.len() {
        return Err(EvalError::LengthMismatch {
            predictions: probs.len(),
            labels: labels.len(),
        });
    }
    if let Some(row) = probs.iter().find(|r| r.len() != n_classes) {
        return Err(EvalError::ClassCountMismatch {
            expected: n_classes,
            got: row.len(),
        });
    }
    let n = labels.len();
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (p, &y) in probs.iter().zip(labels) {
        confusion[y][argmax(p)] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted: Vec<usize> = (0..n_classes).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..n_classes).map(|c| ratio(confusion[c][c], predicted[c])).collect();
    let recall: Vec<f64> = (0..n_classes).map(|c| ratio(confusion[c][c], support[c])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 })
        .collect();
    let weighted = |v: &[f64]| {
        if n == 0 {
            0.0
        } else {
            v.iter().zip(&support).map(|(x, &s)| x * s as f64).sum::<f64>() / n as f64
        }
    };
    let trace: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let top_k_accuracy = top_ks
        .iter()
        .map(|&k| {
            let hits = probs.iter().zip(labels).filter(|(p, &y)| rank_of(p, y) < k).count();
            (k, ratio(hits, n))
        })
        .collect();
    Ok(MetricsReport {
        n_samples: n,
        accuracy: ratio(trace, n),
        macro_precision: mean(&precision),
        macro_recall: mean(&recall),
        macro_f1: mean(&f1),
        weighted_precision: weighted(&precision),
        weighted_recall: weighted(&recall),
        weighted_f1: weighted(&f1),
        precision,
        recall,
        f1,
        support,
        top_k_accuracy,
        confusion,
        audio_accuracy: None,
    })
}

impl MetricsReport {
    /// Aligned plain-text rendering.
    pub fn to_text(&self, class_table: &[String]) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "samples            {}", self.n_samples);
        let _ = writeln!(s, "accuracy           {:.4}", self.accuracy);
        for (k, v) in &self.top_k_accuracy {
            let _ = writeln!(s, "{:<19}{v:.4}", format!("top-{k} accuracy"));
        }
        if let Some(a) = self.audio_accuracy {
            let _ = writeln!(s, "audio accuracy     {a:.4}");
        }
        let _ = writeln!(
            s,
            "macro    P/R/F1    {:.4} {:.4} {:.4}",
            self.macro_precision, self.macro_recall, self.macro_f1
        );
        let _ = writeln!(
            s,
            "weighted P/R/F1    {:.4} {:.4} {:.4}",
            self.weighted_precision, self.weighted_recall, self.weighted_f1
        );
        let width = class_table.iter().map(|c| c.len()).max().unwrap_or(5).max(5);
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>7}",
            "class", "precision", "recall", "f1", "support"
        );
        for (c, name) in class_table.iter().enumerate().take(self.support.len()) {
            let _ = writeln!(
                s,
                "{name:<width$}  {:>9.4}  {:>9.4}  {:>9.4}  {:>7}",
                self.precision[c], self.recall[c], self.f1[c], self.support[c]
            );
        }
        s
    }

    /// Confusion matrix as CSV with a header row of predicted classes.
    pub fn confusion_csv(&self, class_table: &[String]) -> String {
        let mut s = String::from("true\\predicted");
        for c in class_table {
            s.push(',');
            s.push_str(c);
        }
        s.push('\n');
        for (name, row) in class_table.iter().zip(&self.confusion) {
            s.push_str(name);
            for v in row {
                let _ = write!(s, ",{v}");
            }
            s.push('\n');
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn one_hot(c: usize, n: usize) -> Vec<f64> {
        (0..n).map(|i| if i == c { 1.0 } else { 0.0 }).collect()
    }

    #[test]
    fn all_correct() {
        let labels = [0, 1, 2, 1];
        let probs: Vec<Vec<f64>> = labels.iter().map(|&c| one_hot(c, 3)).collect();
        let m = compute_metrics(&probs, &labels, 3, &[1, 3]).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
        assert_eq!(m.weighted_precision, 1.0);
        assert_eq!(m.top_k_accuracy[&1], 1.0);
    }

    #[test]
    fn top_k_rank_four() {
        let p = vec![vec![0.05, 0.4, 0.3, 0.1, 0.15, 0.0]];
        // class 3 is ranked 4th
        let m = compute_metrics(&p, &[3], 6, &[3, 5]).unwrap();
        assert_eq!(m.top_k_accuracy[&3], 0.0);
        assert_eq!(m.top_k_accuracy[&5], 1.0);
    }

    #[test]
    fn undefined_precision_is_zero() {
        let probs = vec![one_hot(0, 2), one_hot(0, 2)];
        let m = compute_metrics(&probs, &[0, 1], 2, &[]).unwrap();
        assert_eq!(m.precision[1], 0.0);
        assert_eq!(m.f1[1], 0.0);
    }

    #[test]
    fn length_mismatch() {
        assert!(matches!(
            compute_metrics(&[vec![1.0]], &[], 1, &[]),
            Err(EvalError::LengthMismatch { .. })
        ));
    }

    #[test]
    fn text_and_csv() {
        let classes = vec!["a".to_string(), "b".to_string()];
        let m = compute_metrics(&[one_hot(0, 2), one_hot(0, 2)], &[0, 1], 2, &[1]).unwrap();
        assert!(m.to_text(&classes).contains("accuracy           0.5000"));
        assert_eq!(m.confusion_csv(&classes), "true\\predicted,a,b\na,1,0\nb,1,0\n");
    }
}
