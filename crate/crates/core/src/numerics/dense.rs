use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn check_dense<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<(usize, usize)> {
    if w.ndim() != 2 {
        return Err(Error::dim("dense", format!("W must be 2-D, got {:?}", w.shape())));
    }
    let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
    if x.cols() != n_in || x.ndim() == 0 {
        return Err(Error::dim(
            "dense",
            format!("x {:?} does not match W {:?}", x.shape(), w.shape()),
        ));
    }
    if b.shape() != [n_out] {
        return Err(Error::dim(
            "dense",
            format!("b {:?} does not match W {:?}", b.shape(), w.shape()),
        ));
    }
    Ok((n_out, n_in))
}

/// `y = x Wᵀ + b`, broadcast over all leading axes of `x`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (n_out, n_in) = check_dense(x, w, b)?;
    let rows = x.rows();
    let mut out = Vec::with_capacity(rows * n_out);
    let wd = w.data();
    for r in 0..rows {
        let xr = x.row(r);
        for o in 0..n_out {
            let wr = &wd[o * n_in..(o + 1) * n_in];
            let mut acc = b.data()[o];
            for (&xi, &wi) in xr.iter().zip(wr) {
                acc += xi * wi;
            }
            out.push(acc);
        }
    }
    let mut shape = x.shape().to_vec();
    *shape.last_mut().unwrap() = n_out;
    Tensor::new(shape, out)
}

/// Gradients of a dense layer.
pub struct DenseGrads<T> {
    pub dx: Tensor<T>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn dense_backward<T: Scalar>(
    x: &Tensor<T>,
    w: &Tensor<T>,
    dy: &Tensor<T>,
) -> Result<DenseGrads<T>> {
    let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
    if dy.cols() != n_out || dy.rows() != x.rows() {
        return Err(Error::dim(
            "dense_backward",
            format!("dy {:?} vs x {:?}, W {:?}", dy.shape(), x.shape(), w.shape()),
        ));
    }
    let rows = x.rows();
    let mut dx = Tensor::zeros(x.shape());
    let mut dw = Tensor::zeros(w.shape());
    let mut db = Tensor::zeros(&[n_out]);
    let wd = w.data();
    for r in 0..rows {
        let xr = x.row(r);
        let dyr = dy.row(r);
        let dxr = dx.row_mut(r);
        for o in 0..n_out {
            let g = dyr[o];
            if g == T::zero() {
                continue;
            }
            let wr = &wd[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                dxr[i] += g * wr[i];
            }
        }
        let dwd = dw.data_mut();
        for o in 0..n_out {
            let g = dyr[o];
            let dwr = &mut dwd[o * n_in..(o + 1) * n_in];
            for i in 0..n_in {
                dwr[i] += g * xr[i];
            }
        }
        for o in 0..n_out {
            db.data_mut()[o] += dyr[o];
        }
    }
    Ok(DenseGrads { dx, dw, db })
}

pub fn relu<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    x.map(|v| if v > T::zero() { v } else { T::zero() })
}

/// Backward of ReLU given its forward output.
pub fn relu_backward<T: Scalar>(y: &Tensor<T>, dy: &Tensor<T>) -> Tensor<T> {
    let data = y
        .data()
        .iter()
        .zip(dy.data())
        .map(|(&yv, &g)| if yv > T::zero() { g } else { T::zero() })
        .collect();
    Tensor::new(dy.shape().to_vec(), data).expect("relu_backward: same shape")
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn matmul_oracle(x: &[f64], w: &[f64], b: &[f64], rows: usize, n_in: usize, n_out: usize) -> Vec<f64> {
        let mut y = vec![0.0; rows * n_out];
        for r in 0..rows {
            for o in 0..n_out {
                let mut s = 0.0;
                for i in 0..n_in {
                    s += x[r * n_in + i] * w[o * n_in + i];
                }
                y[r * n_out + o] = s + b[o];
            }
        }
        y
    }

    #[test]
    fn identity_weights_pass_input_through() {
        let x = Tensor::vector(vec![1.0, 2.0]);
        let y = dense_forward(&x, &Tensor::identity(2), &Tensor::zeros(&[2])).unwrap();
        assert_eq!(y.data(), &[1.0, 2.0]);
    }

    #[test]
    fn zero_input_returns_bias() {
        let w = Tensor::matrix(2, 3, vec![1.0, -2.0, 3.0, 0.5, 0.25, 4.0]).unwrap();
        let b = Tensor::vector(vec![0.3, -0.7]);
        let y = dense_forward(&Tensor::zeros(&[3]), &w, &b).unwrap();
        assert_eq!(y.data(), b.data());
    }

    #[test]
    fn matches_triple_loop_oracle() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (rows, n_in, n_out) = (5, 4, 3);
        let x: Vec<f64> = (0..rows * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let w: Vec<f64> = (0..n_out * n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
        let b: Vec<f64> = (0..n_out).map(|_| rng.random_range(-1.0..1.0)).collect();
        let y = dense_forward(
            &Tensor::matrix(rows, n_in, x.clone()).unwrap(),
            &Tensor::matrix(n_out, n_in, w.clone()).unwrap(),
            &Tensor::vector(b.clone()),
        )
        .unwrap();
        let expect = matmul_oracle(&x, &w, &b, rows, n_in, n_out);
        for (a, e) in y.data().iter().zip(&expect) {
            assert!((a - e).abs() < 1e-12);
        }
    }

    #[test]
    fn broadcasts_over_leading_axes() {
        let x = Tensor::new(vec![2, 2, 3], (0..12).map(|v| v as f64).collect()).unwrap();
        let w = Tensor::matrix(1, 3, vec![1.0, 1.0, 1.0]).unwrap();
        let y = dense_forward(&x, &w, &Tensor::zeros(&[1])).unwrap();
        assert_eq!(y.shape(), &[2, 2, 1]);
        assert_eq!(y.data(), &[3.0, 12.0, 21.0, 30.0]);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let err = dense_forward(&Tensor::<f64>::zeros(&[4]), &Tensor::zeros(&[2, 3]), &Tensor::zeros(&[2]))
            .unwrap_err();
        assert!(matches!(err, Error::Dimension { op: "dense", .. }));
    }
}
