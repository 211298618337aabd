use rand::Rng;

use super::Tensor;
use crate::scalar::Scalar;

/// Uniform initialisation in `[-1/√fan_in, 1/√fan_in]`.
pub fn uniform_fan_in<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, rng: &mut R) -> Tensor<T> {
    let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::lit(rng.random_range(-bound..=bound))).collect();
    Tensor::new(shape.to_vec(), data).expect("init shape")
}
