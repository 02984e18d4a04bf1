use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;
use crate::corpus::Label;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationResult {
    pub labels: Vec<String>,
    pub accuracy: f64,
    pub weighted_f1: f64,
    pub per_label: BTreeMap<String, LabelScores>,
    /// `confusion[gold][pred]`, indexed like `labels`.
    pub confusion: Vec<Vec<u64>>,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Accuracy and support-weighted F1 over label indices into `labels`.
pub fn classify_eval_indices(preds: &[usize], golds: &[usize], labels: &[String]) -> Result<ClassificationResult, EvalError> {
    if preds.len() != golds.len() {
        return Err(EvalError::LengthMismatch {
            left: preds.len(),
            right: golds.len(),
        });
    }
    if preds.is_empty() {
        return Err(EvalError::Empty("classification inputs"));
    }
    let k = labels.len();
    if let Some(&bad) = preds.iter().chain(golds).find(|&&i| i >= k) {
        return Err(EvalError::UnknownLabel(bad.to_string()));
    }
    let mut confusion = vec![vec![0u64; k]; k];
    for (&p, &g) in preds.iter().zip(golds) {
        confusion[g][p] += 1;
    }
    let n = preds.len() as u64;
    let correct: u64 = (0..k).map(|i| confusion[i][i]).sum();
    let mut per_label = BTreeMap::new();
    let mut weighted = 0.0;
    for (i, name) in labels.iter().enumerate() {
        let tp = confusion[i][i];
        let support: u64 = confusion[i].iter().sum();
        let predicted: u64 = confusion.iter().map(|row| row[i]).sum();
        let precision = ratio(tp, predicted);
        let recall = ratio(tp, support);
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        weighted += f1 * support as f64;
        per_label.insert(
            name.clone(),
            LabelScores {
                precision,
                recall,
                f1,
                support,
            },
        );
    }
    Ok(ClassificationResult {
        labels: labels.to_vec(),
        accuracy: ratio(correct, n),
        weighted_f1: weighted / n as f64,
        per_label,
        confusion,
    })
}

/// Typed labels: the label set is the whole closed vocabulary of `L`.
pub fn classify_eval<L: Label>(preds: &[L], golds: &[L]) -> Result<ClassificationResult, EvalError> {
    let labels: Vec<String> = L::ALL.iter().map(|l| l.as_str().to_string()).collect();
    let p: Vec<usize> = preds.iter().map(|l| l.index()).collect();
    let g: Vec<usize> = golds.iter().map(|l| l.index()).collect();
    classify_eval_indices(&p, &g, &labels)
}

/// String labels checked against an explicit label set.
pub fn classify_eval_str(preds: &[&str], golds: &[&str], label_set: &[&str]) -> Result<ClassificationResult, EvalError> {
    let index = |s: &&str| {
        label_set
            .iter()
            .position(|l| l == s)
            .ok_or_else(|| EvalError::UnknownLabel(s.to_string()))
    };
    let p = preds.iter().map(index).collect::<Result<Vec<_>, _>>()?;
    let g = golds.iter().map(index).collect::<Result<Vec<_>, _>>()?;
    let labels: Vec<String> = label_set.iter().map(|s| s.to_string()).collect();
    classify_eval_indices(&p, &g, &labels)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_computed_confusion() {
        let r = classify_eval_str(&["A", "B", "B", "B"], &["A", "A", "B", "B"], &["A", "B"]).unwrap();
        assert_eq!(r.accuracy, 0.75);
        assert_eq!(r.confusion, vec![vec![1, 1], vec![0, 2]]);
        let a = &r.per_label["A"];
        assert_eq!((a.precision, a.recall), (1.0, 0.5));
        assert!((a.f1 - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.per_label["B"].f1 - 0.8).abs() < 1e-12);
        assert!((r.weighted_f1 - (2.0 * (2.0 / 3.0) + 2.0 * 0.8) / 4.0).abs() < 1e-12);
        assert!((r.weighted_f1 - 0.7333).abs() < 1e-4);
    }

    #[test]
    fn one_class_predictions() {
        let r = classify_eval_str(&["A", "A", "A", "A"], &["A", "A", "B", "B"], &["A", "B"]).unwrap();
        assert_eq!(r.accuracy, 0.5);
        assert!((r.weighted_f1 - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            classify_eval_str(&["A"], &["A", "B"], &["A", "B"]),
            Err(EvalError::LengthMismatch { .. })
        ));
        assert!(matches!(
            classify_eval_str(&["C"], &["A"], &["A", "B"]),
            Err(EvalError::UnknownLabel(_))
        ));
        assert!(matches!(classify_eval_str(&[], &[], &["A"]), Err(EvalError::Empty(_))));
    }
}
