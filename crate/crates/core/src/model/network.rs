use rand::Rng;

use super::encoder::{encode_backward, encode_taped, EncoderTape};
use super::fusion::{
    fuse_attention_backward, fuse_attention_taped, fuse_concat, fuse_concat_backward, AttentionParams, AttentionTape,
};
use super::{Architecture, FusionScheme};
use crate::datastore::Sample;
use crate::error::{Error, Result};
use crate::numerics::{
    apply_mask, dense_backward, dense_forward, dropout_mask, relu, relu_backward, softmax_cross_entropy,
    softmax_cross_entropy_backward, uniform_fan_in, GradSet, ParamSet, Tensor,
};
use crate::rng::{self, Stream};
use crate::scalar::Scalar;

/// Per-modality model input in architecture order; `None` marks an
/// unavailable modality.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleInput<T> {
    pub parts: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> SampleInput<T> {
    /// Picks the architecture's modalities out of a dataset sample.
    pub fn from_sample(arch: &Architecture, sample: &Sample, available: impl Fn(&str) -> bool) -> Result<Self> {
        let parts = arch
            .modalities
            .iter()
            .map(|m| {
                if !available(&m.name) {
                    return Ok(None);
                }
                let t = sample
                    .modalities
                    .get(&m.name)
                    .ok_or_else(|| Error::Schema(format!("sample `{}` lacks modality `{}`", sample.id, m.name)))?;
                Ok(Some(t.cast()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(SampleInput { parts })
    }

    pub fn any_available(&self) -> bool {
        self.parts.iter().any(Option::is_some)
    }
}

/// Whether dropout is active, and the stream its masks come from.
pub enum Mode<'r, R: Rng + ?Sized> {
    Eval,
    Train(&'r mut R),
}

impl<'r, R: Rng + ?Sized> Mode<'r, R> {
    fn mask<T: Scalar>(&mut self, shape: &[usize], rate: f64) -> Option<Tensor<T>> {
        match self {
            Mode::Train(rng) if rate > 0.0 => Some(dropout_mask(shape, rate, &mut **rng)),
            _ => None,
        }
    }
}

/// Convenience for callers that never train.
pub type EvalMode = Mode<'static, rand_chacha::ChaCha8Rng>;

struct SampleTape<T> {
    encoders: Vec<Option<EncoderTape<T>>>,
    enc_masks: Vec<Option<Tensor<T>>>,
    reps: Vec<Tensor<T>>,
    masked: Vec<bool>,
    attention: Option<AttentionTape<T>>,
    fused: Tensor<T>,
    h1: Tensor<T>,
    h1_mask: Option<Tensor<T>>,
    h1_out: Tensor<T>,
}

fn attention_params<'a, T: Scalar>(params: &'a ParamSet<T>) -> Result<AttentionParams<'a, T>> {
    Ok(AttentionParams {
        w: params.get("fusion.w")?,
        b: params.get("fusion.b")?,
        context: params.get("fusion.context")?,
    })
}

fn forward_sample<T: Scalar, R: Rng + ?Sized>(
    arch: &Architecture,
    params: &ParamSet<T>,
    input: &SampleInput<T>,
    mode: &mut Mode<'_, R>,
) -> Result<(Tensor<T>, SampleTape<T>)> {
    if input.parts.len() != arch.modalities.len() {
        return Err(Error::dim(
            "forward",
            format!("{} inputs for {} modalities", input.parts.len(), arch.modalities.len()),
        ));
    }
    let h = arch.hidden();
    let rate = arch.config.dropout;
    let mut encoders = Vec::new();
    let mut enc_masks = Vec::new();
    let mut reps = Vec::new();
    let mut masked = Vec::new();
    for (m, part) in input.parts.iter().enumerate() {
        match part {
            Some(x) => {
                let (rows, tape) = encode_taped(arch, params, m, x)?;
                let mask = mode.mask(rows.shape(), rate);
                reps.push(match &mask {
                    Some(mk) => apply_mask(&rows, mk),
                    None => rows,
                });
                encoders.push(Some(tape));
                enc_masks.push(mask);
                masked.push(false);
            }
            None => {
                reps.push(Tensor::zeros(&[1, h]));
                encoders.push(None);
                enc_masks.push(None);
                masked.push(true);
            }
        }
    }
    let (fused, attention) = match arch.config.fusion {
        FusionScheme::Concat => (fuse_concat(&reps, &masked), None),
        FusionScheme::Attention => {
            let (v, tape) = fuse_attention_taped(&reps, &masked, attention_params(params)?)?;
            (v, Some(tape))
        }
    };
    let h1 = relu(&dense_forward(&fused, params.get("cls.fc1.w")?, params.get("cls.fc1.b")?)?);
    let h1_mask = mode.mask(h1.shape(), rate);
    let h1_out = match &h1_mask {
        Some(mk) => apply_mask(&h1, mk),
        None => h1.clone(),
    };
    let logits = dense_forward(&h1_out, params.get("cls.fc2.w")?, params.get("cls.fc2.b")?)?;
    Ok((
        logits,
        SampleTape {
            encoders,
            enc_masks,
            reps,
            masked,
            attention,
            fused,
            h1,
            h1_mask,
            h1_out,
        },
    ))
}

fn backward_sample<T: Scalar>(
    arch: &Architecture,
    params: &ParamSet<T>,
    tape: &SampleTape<T>,
    dlogits: &Tensor<T>,
    grads: &mut GradSet<T>,
) -> Result<()> {
    let one = T::one();
    let g2 = dense_backward(&tape.h1_out, params.get("cls.fc2.w")?, dlogits)?;
    grads.get_mut("cls.fc2.w")?.add_scaled(&g2.dw, one)?;
    grads.get_mut("cls.fc2.b")?.add_scaled(&g2.db, one)?;
    let dh1 = match &tape.h1_mask {
        Some(mk) => apply_mask(&g2.dx, mk),
        None => g2.dx,
    };
    let dpre1 = relu_backward(&tape.h1, &dh1);
    let g1 = dense_backward(&tape.fused, params.get("cls.fc1.w")?, &dpre1)?;
    grads.get_mut("cls.fc1.w")?.add_scaled(&g1.dw, one)?;
    grads.get_mut("cls.fc1.b")?.add_scaled(&g1.db, one)?;

    let drows = match &tape.attention {
        None => fuse_concat_backward(&tape.reps, &tape.masked, &g1.dx),
        Some(at) => {
            let ag = fuse_attention_backward(&tape.reps, at, attention_params(params)?, &g1.dx);
            grads.get_mut("fusion.w")?.add_scaled(&ag.dw, one)?;
            grads.get_mut("fusion.b")?.add_scaled(&ag.db, one)?;
            grads.get_mut("fusion.context")?.add_scaled(&ag.dcontext, one)?;
            ag.drows
        }
    };
    for (m, enc) in tape.encoders.iter().enumerate() {
        if let Some(et) = enc {
            let d = match &tape.enc_masks[m] {
                Some(mk) => apply_mask(&drows[m], mk),
                None => drows[m].clone(),
            };
            encode_backward(arch, params, m, et, &d, grads)?;
        }
    }
    Ok(())
}

fn stack_logits<T: Scalar>(rows: Vec<Tensor<T>>, classes: usize) -> Result<Tensor<T>> {
    let n = rows.len();
    let data = rows.into_iter().flat_map(Tensor::into_data).collect();
    Tensor::matrix(n, classes, data)
}

fn scaled<T: Scalar>(mut logits: Tensor<T>, scale: Option<&[T]>) -> Tensor<T> {
    if let Some(s) = scale {
        for r in 0..logits.rows() {
            for (v, &k) in logits.row_mut(r).iter_mut().zip(s) {
                *v *= k;
            }
        }
    }
    logits
}

/// Class logits `[B, C]` for a batch.
pub fn predict<T: Scalar>(arch: &Architecture, params: &ParamSet<T>, batch: &[SampleInput<T>]) -> Result<Tensor<T>> {
    let mut mode = EvalMode::Eval;
    let rows = batch
        .iter()
        .map(|x| forward_sample(arch, params, x, &mut mode).map(|(l, _)| l))
        .collect::<Result<Vec<_>>>()?;
    stack_logits(rows, arch.num_classes)
}

/// Mean cross-entropy and logits `[B, C]` for a labelled batch.
pub fn forward_loss<T: Scalar, R: Rng + ?Sized>(
    arch: &Architecture,
    params: &ParamSet<T>,
    batch: &[SampleInput<T>],
    labels: &[Option<usize>],
    mut mode: Mode<'_, R>,
) -> Result<(T, Tensor<T>)> {
    let labels = require_labels(labels)?;
    let rows = batch
        .iter()
        .map(|x| forward_sample(arch, params, x, &mut mode).map(|(l, _)| l))
        .collect::<Result<Vec<_>>>()?;
    let logits = stack_logits(rows, arch.num_classes)?;
    let ce = softmax_cross_entropy(&logits, &labels)?;
    Ok((ce.loss, logits))
}

fn require_labels(labels: &[Option<usize>]) -> Result<Vec<usize>> {
    labels
        .iter()
        .enumerate()
        .map(|(i, l)| l.ok_or_else(|| Error::Contract(format!("batch position {i} is unlabeled"))))
        .collect()
}

/// Mean cross-entropy over the batch and its gradient with respect to every
/// parameter. `logit_scale`, when given, multiplies each class logit before
/// the softmax.
pub fn loss_and_grad<T: Scalar, R: Rng + ?Sized>(
    arch: &Architecture,
    params: &ParamSet<T>,
    batch: &[SampleInput<T>],
    labels: &[Option<usize>],
    logit_scale: Option<&[T]>,
    mut mode: Mode<'_, R>,
) -> Result<(T, GradSet<T>)> {
    let labels = require_labels(labels)?;
    if batch.len() != labels.len() || batch.is_empty() {
        return Err(Error::Contract(format!("{} inputs for {} labels", batch.len(), labels.len())));
    }
    let mut raw = Vec::with_capacity(batch.len());
    let mut tapes = Vec::with_capacity(batch.len());
    for x in batch {
        let (l, t) = forward_sample(arch, params, x, &mut mode)?;
        raw.push(l);
        tapes.push(t);
    }
    let logits = scaled(stack_logits(raw, arch.num_classes)?, logit_scale);
    let ce = softmax_cross_entropy(&logits, &labels)?;
    let dlogits = scaled(softmax_cross_entropy_backward(&ce.probs, &labels), logit_scale);
    let mut grads = params.zeros_like();
    for (r, tape) in tapes.iter().enumerate() {
        let d = Tensor::vector(dlogits.row(r).to_vec());
        backward_sample(arch, params, tape, &d, &mut grads)?;
    }
    Ok((ce.loss, grads))
}

/// Fresh parameters, uniform in `±1/√fan_in` per tensor.
pub fn init_params<T: Scalar>(arch: &Architecture, seed: u64) -> ParamSet<T> {
    let mut rng = rng::stream(seed, Stream::Init, &[]);
    let mut p = ParamSet::new();
    for (name, shape, fan_in) in arch.layout() {
        p.insert(name, uniform_fan_in(&shape, fan_in, &mut rng));
    }
    p
}
