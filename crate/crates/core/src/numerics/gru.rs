//! Gated recurrent unit with full backpropagation through time.
//!
//! Gate layout in the stacked weight matrices is `[reset; update; candidate]`:
//!
//! ```text
//! r  = σ(W_ir x + b_ir + W_hr h + b_hr)
//! z  = σ(W_iz x + b_iz + W_hz h + b_hz)
//! n  = tanh(W_in x + b_in + r ⊙ (W_hn h + b_hn))
//! h' = (1 − z) ⊙ n + z ⊙ h
//! ```

use super::{ParamSet, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Borrowed GRU weights: `w_ih [3H, D]`, `w_hh [3H, H]`, `b_ih [3H]`, `b_hh [3H]`.
#[derive(Clone, Copy)]
pub struct GruWeights<'a, T> {
    pub w_ih: &'a Tensor<T>,
    pub w_hh: &'a Tensor<T>,
    pub b_ih: &'a Tensor<T>,
    pub b_hh: &'a Tensor<T>,
}

pub const GRU_W_IH: &str = "w_ih";
pub const GRU_W_HH: &str = "w_hh";
pub const GRU_B_IH: &str = "b_ih";
pub const GRU_B_HH: &str = "b_hh";

impl<'a, T: Scalar> GruWeights<'a, T> {
    /// Looks up `{prefix}w_ih`, `{prefix}w_hh`, `{prefix}b_ih` and `{prefix}b_hh`.
    pub fn from_params(params: &'a ParamSet<T>, prefix: &str) -> Result<Self> {
        let w = GruWeights {
            w_ih: params.get(&format!("{prefix}{GRU_W_IH}"))?,
            w_hh: params.get(&format!("{prefix}{GRU_W_HH}"))?,
            b_ih: params.get(&format!("{prefix}{GRU_B_IH}"))?,
            b_hh: params.get(&format!("{prefix}{GRU_B_HH}"))?,
        };
        w.validate()?;
        Ok(w)
    }

    pub fn hidden(&self) -> usize {
        self.w_hh.shape()[1]
    }

    pub fn input(&self) -> usize {
        self.w_ih.shape()[1]
    }

    fn validate(&self) -> Result<()> {
        if self.w_hh.ndim() != 2 || self.w_ih.ndim() != 2 {
            return Err(Error::dim("gru", "weights must be 2-D"));
        }
        let h = self.w_hh.shape()[1];
        let ok = self.w_hh.shape()[0] == 3 * h
            && self.w_ih.shape()[0] == 3 * h
            && self.b_ih.shape() == [3 * h]
            && self.b_hh.shape() == [3 * h];
        if ok {
            Ok(())
        } else {
            Err(Error::dim(
                "gru",
                format!(
                    "incongruent gate shapes w_ih {:?} w_hh {:?} b_ih {:?} b_hh {:?}",
                    self.w_ih.shape(),
                    self.w_hh.shape(),
                    self.b_ih.shape(),
                    self.b_hh.shape()
                ),
            ))
        }
    }
}

#[inline]
fn sigmoid<T: Scalar>(x: T) -> T {
    T::one() / (T::one() + (-x).exp())
}

/// `out[o] = b[o] + Σ_i w[o, i] v[i]` for rows `rows` of `w`.
#[inline]
fn affine<T: Scalar>(w: &[T], b: &[T], v: &[T], rows: std::ops::Range<usize>, out: &mut [T]) {
    let n = v.len();
    for (k, o) in rows.enumerate() {
        let wr = &w[o * n..(o + 1) * n];
        let mut acc = b[o];
        for (&wi, &vi) in wr.iter().zip(v) {
            acc += wi * vi;
        }
        out[k] = acc;
    }
}

/// Per-step activations retained for the backward pass.
#[derive(Debug, Clone)]
pub struct GruTape<T> {
    h_prev: Vec<Vec<T>>,
    r: Vec<Vec<T>>,
    z: Vec<Vec<T>>,
    n: Vec<Vec<T>>,
    hn: Vec<Vec<T>>,
}

fn run<T: Scalar>(
    x: &Tensor<T>,
    w: GruWeights<'_, T>,
    h0: &Tensor<T>,
    mut tape: Option<&mut GruTape<T>>,
) -> Result<Tensor<T>> {
    w.validate()?;
    let h = w.hidden();
    let steps = x.rows();
    if steps == 0 || x.ndim() != 2 {
        return Err(Error::EmptySequence("gru"));
    }
    if x.cols() != w.input() {
        return Err(Error::dim(
            "gru",
            format!("x {:?} vs w_ih {:?}", x.shape(), w.w_ih.shape()),
        ));
    }
    if h0.len() != h {
        return Err(Error::dim("gru", format!("h0 {:?} vs hidden {}", h0.shape(), h)));
    }
    let (wi, wh, bi, bh) = (w.w_ih.data(), w.w_hh.data(), w.b_ih.data(), w.b_hh.data());
    let mut out = Vec::with_capacity(steps * h);
    let mut hp = h0.data().to_vec();
    let mut gi = vec![T::zero(); 3 * h];
    let mut gh = vec![T::zero(); 3 * h];
    for t in 0..steps {
        affine(wi, bi, x.row(t), 0..3 * h, &mut gi);
        affine(wh, bh, &hp, 0..3 * h, &mut gh);
        let mut r = vec![T::zero(); h];
        let mut z = vec![T::zero(); h];
        let mut n = vec![T::zero(); h];
        let mut hnew = vec![T::zero(); h];
        for j in 0..h {
            r[j] = sigmoid(gi[j] + gh[j]);
            z[j] = sigmoid(gi[h + j] + gh[h + j]);
            n[j] = (gi[2 * h + j] + r[j] * gh[2 * h + j]).tanh();
            hnew[j] = (T::one() - z[j]) * n[j] + z[j] * hp[j];
        }
        out.extend_from_slice(&hnew);
        if let Some(tp) = tape.as_deref_mut() {
            tp.h_prev.push(std::mem::replace(&mut hp, hnew));
            tp.r.push(r);
            tp.z.push(z);
            tp.n.push(n);
            tp.hn.push(gh[2 * h..].to_vec());
        } else {
            hp = hnew;
        }
    }
    Tensor::matrix(steps, h, out)
}

/// Runs the GRU over `x [T, D]` from `h0 [H]`, returning all hidden states `[T, H]`.
pub fn gru_forward<T: Scalar>(x: &Tensor<T>, w: GruWeights<'_, T>, h0: &Tensor<T>) -> Result<Tensor<T>> {
    run(x, w, h0, None)
}

pub fn gru_forward_taped<T: Scalar>(
    x: &Tensor<T>,
    w: GruWeights<'_, T>,
    h0: &Tensor<T>,
) -> Result<(Tensor<T>, GruTape<T>)> {
    let mut tape = GruTape {
        h_prev: Vec::new(),
        r: Vec::new(),
        z: Vec::new(),
        n: Vec::new(),
        hn: Vec::new(),
    };
    let out = run(x, w, h0, Some(&mut tape))?;
    Ok((out, tape))
}

pub struct GruGrads<T> {
    pub dx: Tensor<T>,
    pub dw_ih: Tensor<T>,
    pub dw_hh: Tensor<T>,
    pub db_ih: Tensor<T>,
    pub db_hh: Tensor<T>,
    pub dh0: Tensor<T>,
}

/// Backpropagation through time given `dh [T, H]`, the loss gradient with
/// respect to every emitted hidden state.
pub fn gru_backward<T: Scalar>(
    x: &Tensor<T>,
    w: GruWeights<'_, T>,
    tape: &GruTape<T>,
    dh: &Tensor<T>,
) -> Result<GruGrads<T>> {
    let h = w.hidden();
    let d = w.input();
    let steps = x.rows();
    if dh.shape() != [steps, h] || tape.r.len() != steps {
        return Err(Error::dim(
            "gru_backward",
            format!("dh {:?} for {} steps of width {}", dh.shape(), steps, h),
        ));
    }
    let (wi, wh) = (w.w_ih.data(), w.w_hh.data());
    let mut dx = Tensor::zeros(&[steps, d]);
    let mut dw_ih = Tensor::zeros(&[3 * h, d]);
    let mut dw_hh = Tensor::zeros(&[3 * h, h]);
    let mut db_ih = Tensor::zeros(&[3 * h]);
    let mut db_hh = Tensor::zeros(&[3 * h]);
    let mut carry = vec![T::zero(); h];
    // gradients w.r.t. the input-side and hidden-side gate pre-activations
    let mut dgi = vec![T::zero(); 3 * h];
    let mut dgh = vec![T::zero(); 3 * h];
    for t in (0..steps).rev() {
        let (r, z, n, hn, hp) = (&tape.r[t], &tape.z[t], &tape.n[t], &tape.hn[t], &tape.h_prev[t]);
        let mut dprev = vec![T::zero(); h];
        for j in 0..h {
            let g = dh.data()[t * h + j] + carry[j];
            let dn = g * (T::one() - z[j]);
            let dz = g * (hp[j] - n[j]);
            dprev[j] = g * z[j];
            let dan = dn * (T::one() - n[j] * n[j]);
            let dr = dan * hn[j];
            let dar = dr * r[j] * (T::one() - r[j]);
            let daz = dz * z[j] * (T::one() - z[j]);
            dgi[j] = dar;
            dgi[h + j] = daz;
            dgi[2 * h + j] = dan;
            dgh[j] = dar;
            dgh[h + j] = daz;
            dgh[2 * h + j] = dan * r[j];
        }
        let xt = x.row(t);
        let dxt = dx.row_mut(t);
        for o in 0..3 * h {
            let g = dgi[o];
            let wr = &wi[o * d..(o + 1) * d];
            let dwr = &mut dw_ih.data_mut()[o * d..(o + 1) * d];
            for i in 0..d {
                dwr[i] += g * xt[i];
                dxt[i] += g * wr[i];
            }
            db_ih.data_mut()[o] += g;
        }
        for o in 0..3 * h {
            let g = dgh[o];
            let wr = &wh[o * h..(o + 1) * h];
            let dwr = &mut dw_hh.data_mut()[o * h..(o + 1) * h];
            for i in 0..h {
                dwr[i] += g * hp[i];
                dprev[i] += g * wr[i];
            }
            db_hh.data_mut()[o] += g;
        }
        carry = dprev;
    }
    Ok(GruGrads {
        dx,
        dw_ih,
        dw_hh,
        db_ih,
        db_hh,
        dh0: Tensor::vector(carry),
    })
}
