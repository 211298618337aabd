use rand::seq::index;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Row-stochastic label-error matrix: `q[i][j] = P(observed j | true i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionMatrix {
    q: Vec<Vec<f64>>,
}

/// Number of distinct wrong labels a class can be flipped to.
pub fn error_targets(num_classes: usize, sparsity: f64) -> usize {
    (((1.0 - sparsity) * (num_classes - 1) as f64).round() as usize).max(1)
}

impl TransitionMatrix {
    /// Validates shape, non-negativity and unit row sums (to 1e-12).
    pub fn from_rows(q: Vec<Vec<f64>>) -> Result<Self> {
        let c = q.len();
        if c < 2 {
            return Err(Error::Schema("transition matrix needs at least 2 classes".into()));
        }
        for (i, row) in q.iter().enumerate() {
            if row.len() != c {
                return Err(Error::Schema(format!("transition row {i} has {} entries, expected {c}", row.len())));
            }
            if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
                return Err(Error::Schema(format!("transition row {i} has a negative or non-finite entry")));
            }
            let s: f64 = row.iter().sum();
            if (s - 1.0).abs() > 1e-12 {
                return Err(Error::Schema(format!("transition row {i} sums to {s}")));
            }
        }
        Ok(TransitionMatrix { q })
    }

    pub fn identity(num_classes: usize) -> Self {
        TransitionMatrix {
            q: (0..num_classes)
                .map(|i| (0..num_classes).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
                .collect(),
        }
    }

    pub fn num_classes(&self) -> usize {
        self.q.len()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.q[i]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.q
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.q[i][j]
    }

    /// Draws an observed label for true class `i` by inverse CDF at `u ∈ [0, 1)`.
    pub fn sample_row(&self, i: usize, u: f64) -> usize {
        let row = &self.q[i];
        let mut acc = 0.0;
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // rounding left u uncovered: last class with mass
        row.iter().rposition(|&p| p > 0.0).unwrap_or(i)
    }
}

/// Builds a sparse label-error matrix: diagonal `1 - e`; each row spreads `e`
/// evenly over `k = max(1, round((1 - s)(C - 1)))` distinct wrong classes
/// drawn uniformly at random.
pub fn build_transition_matrix(num_classes: usize, e: f64, s: f64, seed: u64) -> Result<TransitionMatrix> {
    if num_classes < 2 {
        return Err(Error::Config(format!("transition matrix needs C >= 2, got {num_classes}")));
    }
    if !(0.0..1.0).contains(&e) {
        return Err(Error::Config(format!("label error rate must lie in [0, 1), got {e}")));
    }
    if !(0.0..1.0).contains(&s) {
        return Err(Error::Config(format!("sparsity must lie in [0, 1), got {s}")));
    }
    let k = error_targets(num_classes, s);
    let mut rng = rng::stream(seed, Stream::TransitionMatrix, &[num_classes as u64]);
    let share = e / k as f64;
    let q = (0..num_classes)
        .map(|i| {
            let mut row = vec![0.0; num_classes];
            row[i] = 1.0 - e;
            for t in index::sample(&mut rng, num_classes - 1, k).iter() {
                let j = if t >= i { t + 1 } else { t };
                row[j] = share;
            }
            row
        })
        .collect();
    Ok(TransitionMatrix { q })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn binary_case_is_forced() {
        for s in [0.0, 0.4, 0.9] {
            let q = build_transition_matrix(2, 0.3, s, 1).unwrap();
            assert_eq!(q.rows(), &[vec![0.7, 0.3], vec![0.3, 0.7]]);
        }
    }

    #[test]
    fn zero_error_is_identity() {
        assert_eq!(build_transition_matrix(5, 0.0, 0.4, 3).unwrap(), TransitionMatrix::identity(5));
    }

    #[test]
    fn six_classes_at_sparsity_point_four() {
        assert_eq!(error_targets(6, 0.4), 3);
        let q = build_transition_matrix(6, 0.3, 0.4, 8).unwrap();
        for i in 0..6 {
            let row = q.row(i);
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert_eq!(row[i], 0.7);
            let off: Vec<f64> = (0..6).filter(|&j| j != i).map(|j| row[j]).filter(|&v| v > 0.0).collect();
            assert_eq!(off.len(), 3);
            assert!(off.iter().all(|&v| (v - 0.1).abs() < 1e-15));
        }
    }

    #[test]
    fn sample_row_inverse_cdf() {
        let q = TransitionMatrix::from_rows(vec![vec![0.7, 0.2, 0.1], vec![0.0, 1.0, 0.0], vec![0.0, 0.0, 1.0]]).unwrap();
        assert_eq!(q.sample_row(0, 0.0), 0);
        assert_eq!(q.sample_row(0, 0.69), 0);
        assert_eq!(q.sample_row(0, 0.71), 1);
        assert_eq!(q.sample_row(0, 0.95), 2);
        assert_eq!(q.sample_row(1, 0.3), 1);
    }

    #[test]
    fn from_rows_rejects_bad_matrices() {
        assert!(TransitionMatrix::from_rows(vec![vec![0.5, 0.6], vec![0.0, 1.0]]).is_err());
        assert!(TransitionMatrix::from_rows(vec![vec![1.0, 0.0]]).is_err());
        assert!(TransitionMatrix::from_rows(vec![vec![1.5, -0.5], vec![0.0, 1.0]]).is_err());
    }
}
