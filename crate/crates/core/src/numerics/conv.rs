use super::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Output length of a valid (unpadded) 1-D convolution.
pub fn conv1d_out_len(len: usize, kernel: usize, stride: usize) -> Option<usize> {
    if len < kernel || stride == 0 {
        None
    } else {
        Some((len - kernel) / stride + 1)
    }
}

fn check_conv<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
) -> Result<(usize, usize, usize, usize)> {
    if kernels.ndim() != 3 {
        return Err(Error::dim("conv1d", format!("kernels must be 3-D, got {:?}", kernels.shape())));
    }
    let (c_out, c_in, k) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    if x.ndim() != 2 || x.cols() != c_in {
        return Err(Error::dim(
            "conv1d",
            format!("x {:?} does not match kernels {:?}", x.shape(), kernels.shape()),
        ));
    }
    if b.shape() != [c_out] {
        return Err(Error::dim("conv1d", format!("bias {:?} vs {} filters", b.shape(), c_out)));
    }
    if k % 2 == 0 {
        return Err(Error::dim("conv1d", format!("kernel length {k} must be odd")));
    }
    if stride == 0 {
        return Err(Error::dim("conv1d", "stride must be positive"));
    }
    let t = x.rows();
    if t < k {
        return Err(Error::SequenceTooShort { len: t, kernel: k });
    }
    Ok((c_out, c_in, k, (t - k) / stride + 1))
}

/// Valid 1-D convolution over time. `x` is `[T, C_in]`, `kernels` is
/// `[C_out, C_in, K]`; output is `[T', C_out]`.
pub fn conv1d_forward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    b: &Tensor<T>,
    stride: usize,
) -> Result<Tensor<T>> {
    let (c_out, c_in, k, t_out) = check_conv(x, kernels, b, stride)?;
    let kd = kernels.data();
    let xd = x.data();
    let mut out = Vec::with_capacity(t_out * c_out);
    for t in 0..t_out {
        let start = t * stride;
        for o in 0..c_out {
            let mut acc = b.data()[o];
            for c in 0..c_in {
                let kr = &kd[(o * c_in + c) * k..(o * c_in + c + 1) * k];
                for (j, &kv) in kr.iter().enumerate() {
                    acc += kv * xd[(start + j) * c_in + c];
                }
            }
            out.push(acc);
        }
    }
    Tensor::matrix(t_out, c_out, out)
}

pub struct ConvGrads<T> {
    pub dx: Tensor<T>,
    pub dk: Tensor<T>,
    pub db: Tensor<T>,
}

pub fn conv1d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    stride: usize,
    dy: &Tensor<T>,
) -> Result<ConvGrads<T>> {
    let (c_out, c_in, k) = (kernels.shape()[0], kernels.shape()[1], kernels.shape()[2]);
    let t_out = dy.rows();
    if dy.cols() != c_out || conv1d_out_len(x.rows(), k, stride) != Some(t_out) {
        return Err(Error::dim(
            "conv1d_backward",
            format!("dy {:?} vs x {:?}", dy.shape(), x.shape()),
        ));
    }
    let mut dx = Tensor::zeros(x.shape());
    let mut dk = Tensor::zeros(kernels.shape());
    let mut db = Tensor::zeros(&[c_out]);
    let kd = kernels.data();
    let xd = x.data();
    for t in 0..t_out {
        let start = t * stride;
        for o in 0..c_out {
            let g = dy.data()[t * c_out + o];
            db.data_mut()[o] += g;
            for c in 0..c_in {
                let base = (o * c_in + c) * k;
                for j in 0..k {
                    let xi = (start + j) * c_in + c;
                    dk.data_mut()[base + j] += g * xd[xi];
                    dx.data_mut()[xi] += g * kd[base + j];
                }
            }
        }
    }
    Ok(ConvGrads { dx, dk, db })
}
