//! Accuracy, detection / false-alarm estimators and confusion matrices.
//!
//! Two false-alarm estimators coexist and are never interchanged:
//!
//! * `pfa_precision`: share of positive predictions that are wrong,
//!   `#(y = p, k != p) / #(y = p)`;
//! * `pfa_cm`: read off the column-normalized confusion matrix as the sum of
//!   the preamble row minus its diagonal entry.
//!
//! `pfa_cond` is the plain conditional `#(y = p, k != p) / #(k != p)`, which
//! is what a threshold sweep measures. Estimators with an empty denominator
//! are `None`, never zero.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("predictions ({predictions}) and labels ({labels}) differ in length")]
    LengthMismatch { predictions: usize, labels: usize },
    #[error("empty prediction set")]
    Empty,
    #[error("class {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },
    #[error("class {0} has no samples")]
    EmptyColumn(usize),
}

fn check_lengths(predictions: &[usize], labels: &[usize]) -> Result<(), MetricsError> {
    if predictions.len() != labels.len() {
        return Err(MetricsError::LengthMismatch {
            predictions: predictions.len(),
            labels: labels.len(),
        });
    }
    if predictions.is_empty() {
        return Err(MetricsError::Empty);
    }
    Ok(())
}

pub fn accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64, MetricsError> {
    check_lengths(predictions, labels)?;
    let correct = predictions
        .iter()
        .zip(labels)
        .filter(|(y, k)| y == k)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Fraction of positive predictions whose true class differs.
pub fn pfa_precision(
    predictions: &[usize],
    labels: &[usize],
    positive: usize,
) -> Result<Option<f64>, MetricsError> {
    check_lengths(predictions, labels)?;
    let predicted = predictions.iter().filter(|&&y| y == positive).count();
    let wrong = predictions
        .iter()
        .zip(labels)
        .filter(|&(&y, &k)| y == positive && k != positive)
        .count();
    Ok(ratio(wrong, predicted))
}

/// Fraction of true positives that were predicted positive.
pub fn pd_recall(
    predictions: &[usize],
    labels: &[usize],
    positive: usize,
) -> Result<Option<f64>, MetricsError> {
    check_lengths(predictions, labels)?;
    let actual = labels.iter().filter(|&&k| k == positive).count();
    let hits = predictions
        .iter()
        .zip(labels)
        .filter(|&(&y, &k)| y == positive && k == positive)
        .count();
    Ok(ratio(hits, actual))
}

/// Fraction of true negatives that were predicted positive.
pub fn pfa_cond(
    predictions: &[usize],
    labels: &[usize],
    positive: usize,
) -> Result<Option<f64>, MetricsError> {
    check_lengths(predictions, labels)?;
    let negatives = labels.iter().filter(|&&k| k != positive).count();
    let alarms = predictions
        .iter()
        .zip(labels)
        .filter(|&(&y, &k)| y == positive && k != positive)
        .count();
    Ok(ratio(alarms, negatives))
}

/// `counts[i][j]` = number of samples predicted `i` whose true class is `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
    /// Each column divided by its sum; empty columns stay all-zero.
    pub normalized: Vec<Vec<f64>>,
    pub empty_columns: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn num_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.num_classes()).map(|i| self.counts[i][i]).sum()
    }

    pub fn column_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|row| row[j]).sum()
    }

    /// CSV of the normalized matrix, rows = predicted class.
    pub fn to_csv(&self, class_names: &[&str]) -> String {
        let mut out = String::from("predicted\\true");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.normalized) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v:.6}"));
            }
            out.push('\n');
        }
        out
    }

    /// CSV of the raw counts, rows = predicted class.
    pub fn counts_csv(&self, class_names: &[&str]) -> String {
        let mut out = String::from("predicted\\true");
        for name in class_names {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (name, row) in class_names.iter().zip(&self.counts) {
            out.push_str(name);
            for v in row {
                out.push_str(&format!(",{v}"));
            }
            out.push('\n');
        }
        out
    }
}

pub fn confusion(
    predictions: &[usize],
    labels: &[usize],
    num_classes: usize,
) -> Result<ConfusionMatrix, MetricsError> {
    check_lengths(predictions, labels)?;
    let mut counts = vec![vec![0u64; num_classes]; num_classes];
    for (&y, &k) in predictions.iter().zip(labels) {
        for class in [y, k] {
            if class >= num_classes {
                return Err(MetricsError::ClassOutOfRange { class, num_classes });
            }
        }
        counts[y][k] += 1;
    }
    let mut normalized = vec![vec![0.0; num_classes]; num_classes];
    let mut empty_columns = Vec::new();
    for j in 0..num_classes {
        let total: u64 = counts.iter().map(|row| row[j]).sum();
        if total == 0 {
            empty_columns.push(j);
            continue;
        }
        for i in 0..num_classes {
            normalized[i][j] = counts[i][j] as f64 / total as f64;
        }
    }
    Ok(ConfusionMatrix {
        counts,
        normalized,
        empty_columns,
    })
}

/// `(P_d, P_fa)` from a column-normalized matrix: the diagonal entry of the
/// positive row, and the rest of that row summed.
pub fn pd_pfa_from_normalized(normalized: &[Vec<f64>], positive: usize) -> (f64, f64) {
    let row = &normalized[positive];
    let pd = row[positive];
    let pfa = row.iter().sum::<f64>() - pd;
    (pd, pfa)
}

pub fn pd_pfa_from_confusion(
    cm: &ConfusionMatrix,
    positive: usize,
) -> Result<(f64, f64), MetricsError> {
    if positive >= cm.num_classes() {
        return Err(MetricsError::ClassOutOfRange {
            class: positive,
            num_classes: cm.num_classes(),
        });
    }
    if cm.empty_columns.contains(&positive) {
        return Err(MetricsError::EmptyColumn(positive));
    }
    Ok(pd_pfa_from_normalized(&cm.normalized, positive))
}

/// Provenance attached to every report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub detector: String,
    pub scenario: String,
    pub scheme: String,
    pub snr_db: f64,
    pub train_seed: Option<u64>,
    pub test_seed: u64,
    pub model_seed: Option<u64>,
    pub test_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub meta: ReportMeta,
    pub accuracy: f64,
    /// `#(y = p, k = p) / #(k = p)`.
    pub pd: Option<f64>,
    /// `#(y = p, k != p) / #(y = p)`.
    pub pfa_precision: Option<f64>,
    /// `#(y = p, k != p) / #(k != p)`.
    pub pfa_cond: Option<f64>,
    pub pd_cm: Option<f64>,
    pub pfa_cm: Option<f64>,
    pub class_names: Vec<String>,
    pub confusion: ConfusionMatrix,
}

impl EvalReport {
    pub fn build(
        meta: ReportMeta,
        predictions: &[usize],
        labels: &[usize],
        class_names: Vec<String>,
        positive: usize,
    ) -> Result<Self, MetricsError> {
        let cm = confusion(predictions, labels, class_names.len())?;
        let (pd_cm, pfa_cm) = match pd_pfa_from_confusion(&cm, positive) {
            Ok((pd, pfa)) => (Some(pd), Some(pfa)),
            Err(MetricsError::EmptyColumn(_)) => (None, None),
            Err(e) => return Err(e),
        };
        Ok(Self {
            meta,
            accuracy: accuracy(predictions, labels)?,
            pd: pd_recall(predictions, labels, positive)?,
            pfa_precision: pfa_precision(predictions, labels, positive)?,
            pfa_cond: pfa_cond(predictions, labels, positive)?,
            pd_cm,
            pfa_cm,
            class_names,
            confusion: cm,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_from_seed;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    #[test]
    fn accuracy_examples() {
        assert_eq!(accuracy(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        assert_eq!(accuracy(&[1, 0], &[0, 1]).unwrap(), 0.0);
        let labels = vec![0usize; 10_000];
        let mut preds = vec![0usize; 10_000];
        preds[..229].fill(1);
        assert_eq!(accuracy(&preds, &labels).unwrap(), 0.9771);
        assert_eq!(
            accuracy(&[0], &[0, 1]),
            Err(MetricsError::LengthMismatch {
                predictions: 1,
                labels: 2
            })
        );
        assert_eq!(accuracy(&[], &[]), Err(MetricsError::Empty));
    }

    #[test]
    fn false_alarm_examples() {
        assert_eq!(pfa_precision(&[0, 1, 0], &[0, 1, 0], 1).unwrap(), Some(0.0));
        assert_eq!(
            pfa_precision(&[1, 1, 0, 0], &[0, 1, 0, 1], 1).unwrap(),
            Some(0.5)
        );
        assert_eq!(pfa_precision(&[0, 0], &[0, 1], 1).unwrap(), None);
        assert_eq!(
            pfa_cond(&[1, 1, 0, 0], &[0, 1, 0, 1], 1).unwrap(),
            Some(0.5)
        );
        assert_eq!(pfa_cond(&[1], &[1], 1).unwrap(), None);
    }

    #[test]
    fn detection_examples() {
        assert_eq!(pd_recall(&[0, 1, 1], &[0, 1, 1], 1).unwrap(), Some(1.0));
        assert_eq!(pd_recall(&[0, 0, 0], &[0, 1, 1], 1).unwrap(), Some(0.0));
        assert_eq!(pd_recall(&[0, 1], &[0, 0], 1).unwrap(), None);
    }

    #[test]
    fn perfect_confusion_is_identity() {
        let labels = [0, 1, 2, 3, 1, 2];
        let cm = confusion(&labels, &labels, 4).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert_eq!(cm.normalized[i][j], if i == j { 1.0 } else { 0.0 });
            }
        }
        assert_eq!(pd_pfa_from_confusion(&cm, 1).unwrap(), (1.0, 0.0));
        assert_eq!(
            confusion(&[4], &[0], 4),
            Err(MetricsError::ClassOutOfRange {
                class: 4,
                num_classes: 4
            })
        );
    }

    #[test]
    fn empty_column_is_flagged() {
        let cm = confusion(&[0, 0, 2], &[0, 2, 2], 3).unwrap();
        assert_eq!(cm.empty_columns, vec![1]);
        assert_eq!(
            cm.normalized[0][1] + cm.normalized[1][1] + cm.normalized[2][1],
            0.0
        );
        assert_eq!(
            pd_pfa_from_confusion(&cm, 1),
            Err(MetricsError::EmptyColumn(1))
        );
    }

    #[test]
    fn row_sum_false_alarm_on_reference_tables() {
        // Preamble rows of the 6-class AWGN confusion matrices at 3 dB.
        let mut nn = vec![vec![0.0; 6]; 6];
        nn[1] = vec![0.0, 0.9958, 0.0, 0.0054, 0.0072, 0.0072];
        let (pd, pfa) = pd_pfa_from_normalized(&nn, 1);
        assert_eq!(pd, 0.9958);
        assert!((pfa - 0.0198).abs() < 1e-12);

        let mut rf = vec![vec![0.0; 6]; 6];
        rf[1] = vec![0.0024, 0.9616, 0.0018, 0.0060, 0.0174, 0.0162];
        let (pd, pfa) = pd_pfa_from_normalized(&rf, 1);
        assert_eq!(pd, 0.9616);
        assert!((pfa - 0.0438).abs() < 1e-12);
    }

    #[test]
    fn interference_estimators_from_counts() {
        // 10000 samples, 2000 preambles of which 1943 are detected, 54 wrong alarms.
        let mut labels = vec![0usize; 10_000];
        labels[..2000].fill(1);
        let mut preds = vec![0usize; 10_000];
        preds[..1943].fill(1);
        preds[2000..2054].fill(1);
        assert_eq!(pd_recall(&preds, &labels, 1).unwrap(), Some(0.9715));
        let pfa = pfa_precision(&preds, &labels, 1).unwrap().unwrap();
        assert!((pfa - 54.0 / 1997.0).abs() < 1e-15);
    }

    proptest! {
        #[test]
        fn estimator_invariants(seed in any::<u64>(), k in 2usize..7, n in 1usize..400) {
            let mut rng = rng_from_seed(seed);
            let labels: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let preds: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
            let cm = confusion(&preds, &labels, k).unwrap();
            prop_assert_eq!(cm.total(), n as u64);
            for j in 0..k {
                if cm.empty_columns.contains(&j) { continue; }
                let s: f64 = (0..k).map(|i| cm.normalized[i][j]).sum();
                prop_assert!((s - 1.0).abs() <= 1e-12);
            }
            let acc = accuracy(&preds, &labels).unwrap();
            prop_assert_eq!(acc, cm.trace() as f64 / n as f64);
            if let Ok((pd_cm, _)) = pd_pfa_from_confusion(&cm, 1) {
                prop_assert_eq!(pd_recall(&preds, &labels, 1).unwrap(), Some(pd_cm));
            }
            let mut idx: Vec<usize> = (0..n).collect();
            idx.shuffle(&mut rng);
            let p2: Vec<usize> = idx.iter().map(|&i| preds[i]).collect();
            let l2: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
            prop_assert_eq!(accuracy(&p2, &l2).unwrap(), acc);
            prop_assert_eq!(pd_recall(&p2, &l2, 1).unwrap(), pd_recall(&preds, &labels, 1).unwrap());
            prop_assert_eq!(pfa_precision(&p2, &l2, 1).unwrap(), pfa_precision(&preds, &labels, 1).unwrap());
            prop_assert_eq!(confusion(&p2, &l2, k).unwrap(), cm);
        }
    }
}
