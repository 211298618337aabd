use serde::{Deserialize, Serialize};

/// Mean and sample standard deviation of a metric across runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub mean: f64,
    pub std: f64,
    pub runs: usize,
}

/// Arithmetic mean and `n - 1` standard deviation (0 for a single run).
pub fn summarize_runs(values: &[f64]) -> RunSummary {
    let n = values.len();
    if n == 0 {
        return RunSummary { mean: f64::NAN, std: f64::NAN, runs: 0 };
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    let std = if n == 1 {
        0.0
    } else {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt()
    };
    RunSummary { mean, std, runs: n }
}
