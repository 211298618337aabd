use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Headline metric a dataset is scored with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MetricName {
    #[serde(rename = "UAR")]
    Uar,
    #[serde(rename = "ACC")]
    Acc,
    #[serde(rename = "F1")]
    F1,
    #[serde(rename = "AUC")]
    Auc,
}

impl MetricName {
    pub const ALL: [MetricName; 4] = [MetricName::Uar, MetricName::Acc, MetricName::F1, MetricName::Auc];

    pub fn as_str(self) -> &'static str {
        match self {
            MetricName::Uar => "UAR",
            MetricName::Acc => "ACC",
            MetricName::F1 => "F1",
            MetricName::Auc => "AUC",
        }
    }
}

impl fmt::Display for MetricName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MetricName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "UAR" => Ok(MetricName::Uar),
            "ACC" | "TOP1" => Ok(MetricName::Acc),
            "F1" => Ok(MetricName::F1),
            "AUC" => Ok(MetricName::Auc),
            other => Err(Error::Config(format!("unknown metric `{other}`"))),
        }
    }
}

fn check_pair(predictions: &[usize], labels: &[usize], what: &str) -> Result<()> {
    if labels.is_empty() {
        return Err(Error::Contract(format!("{what} of an empty set")));
    }
    if predictions.len() != labels.len() {
        return Err(Error::Contract(format!(
            "{what}: {} predictions for {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    Ok(())
}

/// Per-class (true positives, false positives, false negatives), indexed by class.
fn confusion_counts(predictions: &[usize], labels: &[usize]) -> Vec<(usize, usize, usize)> {
    let c = predictions.iter().chain(labels).copied().max().unwrap_or(0) + 1;
    let mut counts = vec![(0, 0, 0); c];
    for (&p, &y) in predictions.iter().zip(labels) {
        if p == y {
            counts[y].0 += 1;
        } else {
            counts[p].1 += 1;
            counts[y].2 += 1;
        }
    }
    counts
}

/// Unweighted average recall over the classes present in `labels`.
pub fn uar(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(predictions, labels, "UAR")?;
    let counts = confusion_counts(predictions, labels);
    let (sum, present) = counts
        .iter()
        .filter(|(tp, _, fn_)| tp + fn_ > 0)
        .fold((0.0, 0usize), |(s, n), &(tp, _, fn_)| (s + tp as f64 / (tp + fn_) as f64, n + 1));
    Ok(sum / present as f64)
}

pub fn top1_accuracy(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(predictions, labels, "accuracy")?;
    let hits = predictions.iter().zip(labels).filter(|(p, y)| p == y).count();
    Ok(hits as f64 / labels.len() as f64)
}

/// Macro F1 over the classes present in `labels`. A present class that is
/// never predicted contributes 0.
pub fn macro_f1(predictions: &[usize], labels: &[usize]) -> Result<f64> {
    check_pair(predictions, labels, "F1")?;
    let counts = confusion_counts(predictions, labels);
    let (sum, present) = counts
        .iter()
        .filter(|(tp, _, fn_)| tp + fn_ > 0)
        .fold((0.0, 0usize), |(s, n), &(tp, fp, fn_)| {
            (s + 2.0 * tp as f64 / (2 * tp + fp + fn_) as f64, n + 1)
        });
    Ok(sum / present as f64)
}

/// Binary ROC AUC as the Mann-Whitney statistic with half credit for ties.
/// Labels must be 0/1 with both classes present.
pub fn auc_binary(scores: &[f64], labels: &[usize]) -> Result<f64> {
    if scores.len() != labels.len() || scores.is_empty() {
        return Err(Error::Contract(format!(
            "AUC: {} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(Error::Contract(format!("AUC needs binary labels, found {bad}")));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Numeric("NaN score in AUC".into()));
    }
    let pos = labels.iter().filter(|&&l| l == 1).count();
    let neg = labels.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::UndefinedMetric("AUC needs both positive and negative labels".into()));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].partial_cmp(&scores[b]).unwrap());
    // midranks (1-based) over tie groups
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let mid = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if labels[k] == 1 {
                rank_sum_pos += mid;
            }
        }
        i = j + 1;
    }
    let (p, n) = (pos as f64, neg as f64);
    Ok((rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uar_cases() {
        assert_eq!(uar(&[0, 1, 2, 1], &[0, 1, 2, 1]).unwrap(), 1.0);
        let labels = [0, 0, 1, 1, 2, 2];
        assert!((uar(&[1; 6], &labels).unwrap() - 1.0 / 3.0).abs() < 1e-15);
        // recall 0.5 for class 0, 1.0 for class 1
        assert_eq!(uar(&[0, 1, 1, 1], &[0, 0, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(top1_accuracy(&[1, 2, 3], &[1, 2, 3]).unwrap(), 1.0);
        assert_eq!(top1_accuracy(&[0, 0], &[1, 1]).unwrap(), 0.0);
        assert_eq!(top1_accuracy(&[0, 1, 2, 0], &[0, 1, 2, 3]).unwrap(), 0.75);
    }

    #[test]
    fn f1_cases() {
        assert_eq!(macro_f1(&[0, 1, 1], &[0, 1, 1]).unwrap(), 1.0);
        // class 1 present but never predicted
        assert_eq!(macro_f1(&[0, 0], &[0, 1]).unwrap(), (2.0 / 3.0 + 0.0) / 2.0);
        // class 0: TP=2 FP=1 FN=1; class 1: TP=3 FP=1 FN=1
        let labels = [0, 0, 0, 1, 1, 1, 1];
        let preds = [0, 0, 1, 1, 1, 1, 0];
        assert!((macro_f1(&preds, &labels).unwrap() - 17.0 / 24.0).abs() < 1e-15);
    }

    #[test]
    fn auc_cases() {
        assert_eq!(auc_binary(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc_binary(&[0.5; 4], &[0, 1, 0, 1]).unwrap(), 0.5);
        assert_eq!(auc_binary(&[0.9, 0.4, 0.6, 0.2], &[1, 1, 0, 0]).unwrap(), 0.75);
        assert!(matches!(auc_binary(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn empty_input_is_a_contract_error() {
        assert!(matches!(uar(&[], &[]), Err(Error::Contract(_))));
        assert!(matches!(top1_accuracy(&[], &[]), Err(Error::Contract(_))));
        assert!(matches!(macro_f1(&[], &[]), Err(Error::Contract(_))));
    }
}
