use super::Architecture;
use crate::datastore::EncoderKind;
use crate::error::Result;
use crate::numerics::{
    conv1d_backward, conv1d_forward, gru_backward, gru_forward_taped, relu, relu_backward, GradSet, GruTape,
    GruWeights, ParamSet, Tensor,
};
use crate::scalar::Scalar;

/// Encoder output: `[T', H]` rows, or a single zero row flagged masked when
/// the modality is unavailable.
#[derive(Debug, Clone, PartialEq)]
pub struct Encoded<T> {
    pub rows: Tensor<T>,
    pub masked: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct EncoderTape<T> {
    conv_in: Vec<Tensor<T>>,
    conv_out: Vec<Tensor<T>>,
    gru_in: Tensor<T>,
    gru: GruTape<T>,
}

fn conv_names(arch: &Architecture, m: usize, l: usize) -> (String, String) {
    let name = &arch.modalities[m].name;
    (format!("enc.{name}.conv{l}.kernel"), format!("enc.{name}.conv{l}.bias"))
}

fn gru_prefix(arch: &Architecture, m: usize) -> String {
    format!("enc.{}.gru.", arch.modalities[m].name)
}

pub(crate) fn encode_taped<T: Scalar>(
    arch: &Architecture,
    params: &ParamSet<T>,
    m: usize,
    x: &Tensor<T>,
) -> Result<(Tensor<T>, EncoderTape<T>)> {
    let mut conv_in = Vec::new();
    let mut conv_out = Vec::new();
    let mut cur = x.clone();
    if arch.modalities[m].encoder == EncoderKind::ConvRnn {
        for l in 0..arch.config.conv_filters.len() {
            let (kn, bn) = conv_names(arch, m, l);
            let y = relu(&conv1d_forward(&cur, params.get(&kn)?, params.get(&bn)?, arch.config.stride)?);
            conv_in.push(std::mem::replace(&mut cur, y.clone()));
            conv_out.push(y);
        }
    }
    let w = GruWeights::from_params(params, &gru_prefix(arch, m))?;
    let (rows, gru) = gru_forward_taped(&cur, w, &Tensor::zeros(&[arch.hidden()]))?;
    Ok((rows, EncoderTape { conv_in, conv_out, gru_in: cur, gru }))
}

/// Encodes one modality of one sample (`None` = unavailable).
pub fn encode_modality<T: Scalar>(
    arch: &Architecture,
    params: &ParamSet<T>,
    m: usize,
    x: Option<&Tensor<T>>,
) -> Result<Encoded<T>> {
    match x {
        None => Ok(Encoded {
            rows: Tensor::zeros(&[1, arch.hidden()]),
            masked: true,
        }),
        Some(x) => encode_taped(arch, params, m, x).map(|(rows, _)| Encoded { rows, masked: false }),
    }
}

/// Accumulates encoder parameter gradients from `drows`, the loss gradient
/// with respect to the GRU outputs.
pub(crate) fn encode_backward<T: Scalar>(
    arch: &Architecture,
    params: &ParamSet<T>,
    m: usize,
    tape: &EncoderTape<T>,
    drows: &Tensor<T>,
    grads: &mut GradSet<T>,
) -> Result<()> {
    let prefix = gru_prefix(arch, m);
    let w = GruWeights::from_params(params, &prefix)?;
    let g = gru_backward(&tape.gru_in, w, &tape.gru, drows)?;
    grads.get_mut(&format!("{prefix}w_ih"))?.add_scaled(&g.dw_ih, T::one())?;
    grads.get_mut(&format!("{prefix}w_hh"))?.add_scaled(&g.dw_hh, T::one())?;
    grads.get_mut(&format!("{prefix}b_ih"))?.add_scaled(&g.db_ih, T::one())?;
    grads.get_mut(&format!("{prefix}b_hh"))?.add_scaled(&g.db_hh, T::one())?;
    let mut dcur = g.dx;
    for l in (0..tape.conv_in.len()).rev() {
        let (kn, bn) = conv_names(arch, m, l);
        let dpre = relu_backward(&tape.conv_out[l], &dcur);
        let cg = conv1d_backward(&tape.conv_in[l], params.get(&kn)?, arch.config.stride, &dpre)?;
        grads.get_mut(&kn)?.add_scaled(&cg.dk, T::one())?;
        grads.get_mut(&bn)?.add_scaled(&cg.db, T::one())?;
        dcur = cg.dx;
    }
    Ok(())
}
