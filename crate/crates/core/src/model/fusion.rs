//! Late fusion of per-modality encoder outputs.
//!
//! Attention fusion stacks every modality's timestep rows into `h [R, H]`
//! and, per head `k` with context vector `c_k`, computes
//! `u_i = tanh(W h_i + b)`, `a = softmax_i(u_i · c_k)` and `v_k = Σ a_i h_i`.
//! Rows of masked modalities take logit [`MASK_LOGIT`], i.e. weight exactly 0.
//! Head outputs are concatenated.

use super::super::numerics::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Logit given to masked rows; vanishes exactly under max-subtracted softmax.
pub const MASK_LOGIT: f64 = -1e30;

/// Mean over timesteps of each unmasked modality (zeros when masked),
/// concatenated in order.
pub fn fuse_concat<T: Scalar>(reps: &[Tensor<T>], masks: &[bool]) -> Tensor<T> {
    let h = reps.first().map(|r| r.cols()).unwrap_or(0);
    let mut out = Vec::with_capacity(reps.len() * h);
    for (r, &masked) in reps.iter().zip(masks) {
        if masked || r.rows() == 0 {
            out.extend(std::iter::repeat_n(T::zero(), h));
            continue;
        }
        let n = T::lit(r.rows() as f64);
        for j in 0..h {
            let s: T = (0..r.rows()).map(|t| r.at2(t, j)).sum();
            out.push(s / n);
        }
    }
    Tensor::vector(out)
}

pub fn fuse_concat_backward<T: Scalar>(reps: &[Tensor<T>], masks: &[bool], dv: &Tensor<T>) -> Vec<Tensor<T>> {
    let mut offset = 0;
    reps.iter()
        .zip(masks)
        .map(|(r, &masked)| {
            let h = r.cols();
            let mut d = Tensor::zeros(r.shape());
            if !masked && r.rows() > 0 {
                let n = T::lit(r.rows() as f64);
                for t in 0..r.rows() {
                    for j in 0..h {
                        d.data_mut()[t * h + j] = dv.data()[offset + j] / n;
                    }
                }
            }
            offset += h;
            d
        })
        .collect()
}

#[derive(Clone, Copy)]
pub struct AttentionParams<'a, T> {
    /// `[D, H]`
    pub w: &'a Tensor<T>,
    /// `[D]`
    pub b: &'a Tensor<T>,
    /// `[heads, D]`, one context vector per head.
    pub context: &'a Tensor<T>,
}

/// Intermediate values of one attention pass.
#[derive(Debug, Clone)]
pub struct AttentionTape<T> {
    h: Tensor<T>,
    row_modality: Vec<usize>,
    row_masked: Vec<bool>,
    u: Tensor<T>,
    weights: Vec<Vec<T>>,
}

impl<T: Scalar> AttentionTape<T> {
    /// Softmax weights per head over the stacked rows.
    pub fn weights(&self) -> &[Vec<T>] {
        &self.weights
    }

    pub fn row_masked(&self) -> &[bool] {
        &self.row_masked
    }
}

pub fn fuse_attention_taped<T: Scalar>(
    reps: &[Tensor<T>],
    masks: &[bool],
    p: AttentionParams<'_, T>,
) -> Result<(Tensor<T>, AttentionTape<T>)> {
    let hdim = p.w.shape()[1];
    let d = p.w.shape()[0];
    let heads = p.context.shape()[0];
    if p.context.shape() != [heads, d] || p.b.shape() != [d] {
        return Err(Error::dim(
            "fuse_attention",
            format!("W {:?}, b {:?}, context {:?}", p.w.shape(), p.b.shape(), p.context.shape()),
        ));
    }
    let parts: Vec<&Tensor<T>> = reps.iter().collect();
    for r in &parts {
        if r.cols() != hdim {
            return Err(Error::dim("fuse_attention", format!("row width {} vs W {:?}", r.cols(), p.w.shape())));
        }
    }
    let h = Tensor::vstack(&parts)?;
    let mut row_modality = Vec::with_capacity(h.rows());
    let mut row_masked = Vec::with_capacity(h.rows());
    for (m, (r, &masked)) in reps.iter().zip(masks).enumerate() {
        for _ in 0..r.rows() {
            row_modality.push(m);
            row_masked.push(masked);
        }
    }
    if row_masked.iter().all(|&m| m) {
        return Err(Error::DegenerateAttention);
    }
    let rows = h.rows();
    let mut u = Tensor::zeros(&[rows, d]);
    for i in (0..rows).filter(|&i| !row_masked[i]) {
        let hi = h.row(i);
        let ui = u.row_mut(i);
        for o in 0..d {
            let wr = &p.w.data()[o * hdim..(o + 1) * hdim];
            let mut acc = p.b.data()[o];
            for (&a, &b) in wr.iter().zip(hi) {
                acc += a * b;
            }
            ui[o] = acc.tanh();
        }
    }
    let mask_logit = T::lit(MASK_LOGIT);
    let mut out = Vec::with_capacity(heads * hdim);
    let mut weights = Vec::with_capacity(heads);
    for k in 0..heads {
        let c = p.context.row(k);
        let logits: Vec<T> = (0..rows)
            .map(|i| {
                if row_masked[i] {
                    mask_logit
                } else {
                    u.row(i).iter().zip(c).map(|(&a, &b)| a * b).sum()
                }
            })
            .collect();
        let mx = logits.iter().copied().fold(T::neg_infinity(), T::max);
        let mut a: Vec<T> = logits.iter().map(|&l| (l - mx).exp()).collect();
        let z: T = a.iter().copied().sum();
        for v in &mut a {
            *v /= z;
        }
        let mut v = vec![T::zero(); hdim];
        for i in (0..rows).filter(|&i| !row_masked[i]) {
            for (acc, &x) in v.iter_mut().zip(h.row(i)) {
                *acc += a[i] * x;
            }
        }
        out.extend(v);
        weights.push(a);
    }
    Ok((
        Tensor::vector(out),
        AttentionTape {
            h,
            row_modality,
            row_masked,
            u,
            weights,
        },
    ))
}

/// Multi-head attention fusion; see the module docs.
pub fn fuse_attention<T: Scalar>(reps: &[Tensor<T>], masks: &[bool], p: AttentionParams<'_, T>) -> Result<Tensor<T>> {
    fuse_attention_taped(reps, masks, p).map(|(v, _)| v)
}

pub struct AttentionGrads<T> {
    pub drows: Vec<Tensor<T>>,
    pub dw: Tensor<T>,
    pub db: Tensor<T>,
    pub dcontext: Tensor<T>,
}

pub fn fuse_attention_backward<T: Scalar>(
    reps: &[Tensor<T>],
    tape: &AttentionTape<T>,
    p: AttentionParams<'_, T>,
    dv: &Tensor<T>,
) -> AttentionGrads<T> {
    let hdim = p.w.shape()[1];
    let d = p.w.shape()[0];
    let rows = tape.h.rows();
    let mut dh = Tensor::zeros(&[rows, hdim]);
    let mut du = Tensor::<T>::zeros(&[rows, d]);
    let mut dcontext = Tensor::zeros(p.context.shape());
    let live: Vec<usize> = (0..rows).filter(|&i| !tape.row_masked[i]).collect();
    for (k, a) in tape.weights.iter().enumerate() {
        let dvk = &dv.data()[k * hdim..(k + 1) * hdim];
        let c = p.context.row(k);
        let mut da = vec![T::zero(); rows];
        for &i in &live {
            let hi = tape.h.row(i);
            let dhi = dh.row_mut(i);
            let mut s = T::zero();
            for j in 0..hdim {
                dhi[j] += a[i] * dvk[j];
                s += dvk[j] * hi[j];
            }
            da[i] = s;
        }
        let mean: T = live.iter().map(|&i| a[i] * da[i]).sum();
        for &i in &live {
            let ds = a[i] * (da[i] - mean);
            let ui = tape.u.row(i);
            let dc = dcontext.row_mut(k);
            for o in 0..d {
                dc[o] += ds * ui[o];
            }
            let dui = du.row_mut(i);
            for o in 0..d {
                dui[o] += ds * c[o];
            }
        }
    }
    let mut dw = Tensor::zeros(p.w.shape());
    let mut db = Tensor::zeros(p.b.shape());
    for &i in &live {
        let ui = tape.u.row(i);
        let hi = tape.h.row(i).to_vec();
        let dui = du.row(i).to_vec();
        let dhi = dh.row_mut(i);
        for o in 0..d {
            let g = dui[o] * (T::one() - ui[o] * ui[o]);
            if g == T::zero() {
                continue;
            }
            db.data_mut()[o] += g;
            let wr = &p.w.data()[o * hdim..(o + 1) * hdim];
            let dwr = &mut dw.data_mut()[o * hdim..(o + 1) * hdim];
            for j in 0..hdim {
                dwr[j] += g * hi[j];
                dhi[j] += g * wr[j];
            }
        }
    }
    let mut drows: Vec<Tensor<T>> = reps.iter().map(|r| Tensor::zeros(r.shape())).collect();
    let mut cursor = vec![0usize; reps.len()];
    for i in 0..rows {
        let m = tape.row_modality[i];
        drows[m].row_mut(cursor[m]).copy_from_slice(dh.row(i));
        cursor[m] += 1;
    }
    AttentionGrads { drows, dw, db, dcontext }
}
