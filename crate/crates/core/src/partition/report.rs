use serde::{Deserialize, Serialize};

use super::ClientPartition;
use crate::datastore::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientStats {
    pub client: String,
    pub samples: usize,
    pub histogram: Vec<usize>,
    /// Shannon entropy (nats) of the client's label distribution.
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeterogeneityReport {
    pub clients: Vec<ClientStats>,
    pub mean_entropy: f64,
    /// Mean total-variation distance over all unordered client pairs.
    pub mean_pairwise_tv: f64,
}

pub fn label_entropy(histogram: &[usize]) -> f64 {
    let n: usize = histogram.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    histogram
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.ln()
        })
        .sum()
}

/// Total-variation distance between two normalised histograms.
pub fn total_variation(a: &[usize], b: &[usize]) -> f64 {
    let (na, nb) = (a.iter().sum::<usize>() as f64, b.iter().sum::<usize>() as f64);
    0.5 * a
        .iter()
        .zip(b)
        .map(|(&x, &y)| (x as f64 / na.max(1.0) - y as f64 / nb.max(1.0)).abs())
        .sum::<f64>()
}

/// Per-client counts and label entropy plus partition-wide skew summaries.
/// Unlabelled samples count towards `samples` but not the histogram.
pub fn heterogeneity_report(partition: &ClientPartition, dataset: &Dataset) -> HeterogeneityReport {
    let c = dataset.num_classes();
    let clients: Vec<ClientStats> = partition
        .iter()
        .map(|(id, cell)| {
            let mut histogram = vec![0; c];
            for &i in cell {
                if let Some(y) = dataset.sample(i).label {
                    histogram[y] += 1;
                }
            }
            ClientStats {
                client: id.to_string(),
                samples: cell.len(),
                entropy: label_entropy(&histogram),
                histogram,
            }
        })
        .collect();
    let mean_entropy = if clients.is_empty() {
        0.0
    } else {
        clients.iter().map(|s| s.entropy).sum::<f64>() / clients.len() as f64
    };
    let mut tv_sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..clients.len() {
        for j in i + 1..clients.len() {
            tv_sum += total_variation(&clients[i].histogram, &clients[j].histogram);
            pairs += 1;
        }
    }
    HeterogeneityReport {
        clients,
        mean_entropy,
        mean_pairwise_tv: if pairs == 0 { 0.0 } else { tv_sum / pairs as f64 },
    }
}
