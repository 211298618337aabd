//! Classification metrics and multi-run summaries.

mod metrics;
mod summary;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use metrics::{auc_binary, macro_f1, top1_accuracy, uar, MetricName};
pub use summary::{summarize_runs, RunSummary};

use crate::error::Result;

/// Score of one metric on one test set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    pub metric: MetricName,
    pub value: f64,
    /// Test samples per true class.
    pub support: Vec<usize>,
}

/// Scores predictions with every metric that is defined for them.
///
/// `scores` holds per-sample class probabilities; AUC is only reported for
/// binary tasks where both classes appear in `labels`.
pub fn score_all(
    predictions: &[usize],
    labels: &[usize],
    probs: &[Vec<f64>],
    num_classes: usize,
) -> Result<BTreeMap<MetricName, MetricResult>> {
    let mut support = vec![0; num_classes];
    for &y in labels {
        if y < num_classes {
            support[y] += 1;
        }
    }
    let mut out = BTreeMap::new();
    let mut put = |metric, value| {
        out.insert(
            metric,
            MetricResult {
                metric,
                value,
                support: support.clone(),
            },
        );
    };
    put(MetricName::Acc, top1_accuracy(predictions, labels)?);
    put(MetricName::Uar, uar(predictions, labels)?);
    put(MetricName::F1, macro_f1(predictions, labels)?);
    if num_classes == 2 && labels.contains(&0) && labels.contains(&1) {
        let pos: Vec<f64> = probs.iter().map(|p| p[1]).collect();
        put(MetricName::Auc, auc_binary(&pos, labels)?);
    }
    Ok(out)
}
