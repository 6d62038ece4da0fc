use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Classification metrics from a confusion matrix (`confusion[true][pred]`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub accuracy: f64,
    /// Unweighted mean of per-class F1, absent classes counted as 0.
    pub macro_f1: f64,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub confusion: Vec<Vec<u64>>,
    /// Classes with no support in the evaluated labels.
    pub absent_classes: Vec<usize>,
}

impl Metrics {
    pub fn from_predictions(labels: &[usize], predictions: &[usize], classes: usize) -> Result<Self> {
        if labels.len() != predictions.len() {
            return Err(Error::ContractViolation(format!(
                "{} labels but {} predictions",
                labels.len(),
                predictions.len()
            )));
        }
        if labels.is_empty() {
            return Err(Error::ContractViolation("no predictions to score".into()));
        }
        let mut confusion = vec![vec![0u64; classes]; classes];
        for (&t, &p) in labels.iter().zip(predictions) {
            if t >= classes || p >= classes {
                return Err(Error::ContractViolation(format!("class index out of range for {classes} classes")));
            }
            confusion[t][p] += 1;
        }
        Ok(Self::from_confusion(confusion))
    }

    pub fn from_confusion(confusion: Vec<Vec<u64>>) -> Self {
        let k = confusion.len();
        let total: u64 = confusion.iter().flatten().sum();
        let trace: u64 = (0..k).map(|i| confusion[i][i]).sum();
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        let mut precision = Vec::with_capacity(k);
        let mut recall = Vec::with_capacity(k);
        let mut f1 = Vec::with_capacity(k);
        let mut absent_classes = Vec::new();
        for c in 0..k {
            let tp = confusion[c][c];
            let support: u64 = confusion[c].iter().sum();
            let predicted: u64 = confusion.iter().map(|row| row[c]).sum();
            if support == 0 {
                absent_classes.push(c);
            }
            let p = ratio(tp, predicted);
            let r = ratio(tp, support);
            precision.push(p);
            recall.push(r);
            f1.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        Metrics {
            accuracy: ratio(trace, total),
            macro_f1: if k == 0 { 0.0 } else { f1.iter().sum::<f64>() / k as f64 },
            precision,
            recall,
            f1,
            confusion,
            absent_classes,
        }
    }

    pub fn support(&self) -> Vec<u64> {
        self.confusion.iter().map(|r| r.iter().sum()).collect()
    }
}

/// Index of the largest entry of each row (first on ties).
pub fn argmax_rows(values: &[f64], width: usize) -> Vec<usize> {
    values
        .chunks(width)
        .map(|row| {
            let mut best = 0;
            for (i, v) in row.iter().enumerate() {
                if *v > row[best] {
                    best = i;
                }
            }
            best
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn perfect_predictions() {
        let y = [0, 1, 2, 3, 1];
        let m = Metrics::from_predictions(&y, &y, 4).unwrap();
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.macro_f1, 1.0);
    }

    #[test]
    fn constant_prediction_on_balanced_four_classes() {
        let labels: Vec<usize> = (0..40).map(|i| i % 4).collect();
        let m = Metrics::from_predictions(&labels, &[0; 40], 4).unwrap();
        assert_eq!(m.accuracy, 0.25);
        // class 0: precision 10/40, recall 1 -> F1 = 0.4; others 0
        assert!((m.f1[0] - 0.4).abs() < 1e-12);
        assert!((m.macro_f1 - 0.1).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(Metrics::from_predictions(&[0, 1], &[0], 2).is_err());
        assert!(Metrics::from_predictions(&[], &[], 2).is_err());
        assert!(Metrics::from_predictions(&[0, 3], &[0, 1], 2).is_err());
    }

    #[test]
    fn absent_classes_are_flagged() {
        let m = Metrics::from_predictions(&[0, 0, 1], &[0, 2, 1], 3).unwrap();
        assert_eq!(m.absent_classes, vec![2]);
        assert_eq!(m.f1[2], 0.0);
    }

    proptest! {
        #[test]
        fn internally_consistent(pairs in proptest::collection::vec((0usize..5, 0usize..5), 1..200)) {
            let (labels, preds): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
            let m = Metrics::from_predictions(&labels, &preds, 5).unwrap();
            let trace: u64 = (0..5).map(|i| m.confusion[i][i]).sum();
            prop_assert!((m.accuracy - trace as f64 / labels.len() as f64).abs() < 1e-12);
            for c in 0..5 {
                prop_assert_eq!(m.support()[c], labels.iter().filter(|&&l| l == c).count() as u64);
            }
            let f1: Vec<f64> = (0..5).map(|c| {
                let tp = m.confusion[c][c] as f64;
                let fp = (0..5).map(|t| m.confusion[t][c]).sum::<u64>() as f64 - tp;
                let fneg = m.confusion[c].iter().sum::<u64>() as f64 - tp;
                if tp == 0.0 { 0.0 } else { 2.0 * tp / (2.0 * tp + fp + fneg) }
            }).collect();
            prop_assert!((m.macro_f1 - f1.iter().sum::<f64>() / 5.0).abs() < 1e-12);
        }
    }
}
