use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Row-wise softmax with max subtraction.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let mut out = logits.clone();
    for r in 0..logits.rows() {
        let row = out.row_mut(r);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut s = T::zero();
        for v in row.iter_mut() {
            *v = (*v - m).exp();
            s += *v;
        }
        for v in row.iter_mut() {
            *v /= s;
        }
    }
    out
}

#[derive(Debug, Clone)]
pub struct CrossEntropy<T> {
    /// Mean negative log-likelihood over the batch.
    pub loss: T,
    pub probs: Tensor<T>,
}

/// Mean softmax cross-entropy of `logits [B, C]` against integer labels.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<CrossEntropy<T>> {
    let (b, c) = (logits.rows(), logits.cols());
    if logits.ndim() != 2 || labels.len() != b || b == 0 {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("logits {:?} with {} labels", logits.shape(), labels.len()),
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
        return Err(Error::LabelRange {
            label: bad,
            num_classes: c,
        });
    }
    let probs = softmax_rows(logits);
    let mut total = T::zero();
    for (r, &y) in labels.iter().enumerate() {
        // log-sum-exp form keeps the confident-correct case at ~0 without log(1 - tiny)
        let row = logits.row(r);
        let m = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = m + row.iter().map(|&v| (v - m).exp()).sum::<T>().ln();
        total += lse - row[y];
    }
    let loss = total / T::lit(b as f64);
    if !loss.is_finite() {
        return Err(Error::Numeric("cross-entropy loss".into()));
    }
    Ok(CrossEntropy { loss, probs })
}

/// Gradient of the mean cross-entropy with respect to the logits.
pub fn softmax_cross_entropy_backward<T: Scalar>(probs: &Tensor<T>, labels: &[usize]) -> Tensor<T> {
    let b = T::lit(labels.len() as f64);
    let mut d = probs.clone();
    for (r, &y) in labels.iter().enumerate() {
        let row = d.row_mut(r);
        row[y] -= T::one();
        for v in row.iter_mut() {
            *v /= b;
        }
    }
    d
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    #[test]
    fn uniform_logits_give_log_c() {
        let ce = softmax_cross_entropy(&Tensor::<f64>::zeros(&[3, 4]), &[0, 1, 3]).unwrap();
        assert!((ce.loss - 4f64.ln()).abs() < 1e-12);
        assert!((ce.loss - 1.386294).abs() < 1e-6);
    }

    #[test]
    fn confident_correct_class_has_vanishing_loss() {
        let logits = Tensor::matrix(1, 2, vec![100.0, -100.0]).unwrap();
        let ce = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(ce.loss < 1e-12);
    }

    #[test]
    fn matches_direct_formula_and_is_shift_invariant() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let (b, c) = (6, 5);
        let raw: Vec<f64> = (0..b * c).map(|_| rng.random_range(-4.0..4.0)).collect();
        let labels: Vec<usize> = (0..b).map(|_| rng.random_range(0..c)).collect();
        let ce = softmax_cross_entropy(&Tensor::matrix(b, c, raw.clone()).unwrap(), &labels).unwrap();
        let mut oracle = 0.0;
        for r in 0..b {
            let row = &raw[r * c..(r + 1) * c];
            let z: f64 = row.iter().map(|v| v.exp()).sum();
            oracle -= (row[labels[r]].exp() / z).ln();
            let prow = ce.probs.row(r);
            assert!((prow.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            for j in 0..c {
                assert!((prow[j] - row[j].exp() / z).abs() < 1e-12);
            }
        }
        oracle /= b as f64;
        assert!((ce.loss - oracle).abs() < 1e-10);

        let shifted: Vec<f64> = raw.iter().enumerate().map(|(i, v)| v + 37.0 * (i / c) as f64).collect();
        let ce2 = softmax_cross_entropy(&Tensor::matrix(b, c, shifted).unwrap(), &labels).unwrap();
        assert!((ce.loss - ce2.loss).abs() < 1e-10);
    }

    #[test]
    fn label_out_of_range_is_rejected() {
        let err = softmax_cross_entropy(&Tensor::<f64>::zeros(&[1, 3]), &[3]).unwrap_err();
        assert!(matches!(err, Error::LabelRange { label: 3, num_classes: 3 }));
    }
}
