//! Multimodal classifier: per-modality conv/GRU encoders, late fusion and a
//! two-layer classification head.

mod checkpoint;
mod config;
mod encoder;
mod fusion;
mod network;

pub use checkpoint::{
    checkpoint_from_json, checkpoint_to_json, load_checkpoint, read_checkpoint, save_checkpoint, write_checkpoint,
    CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use config::{Architecture, FusionScheme, ModelConfig};
pub use encoder::{encode_modality, Encoded};
pub use fusion::{
    fuse_attention, fuse_attention_backward, fuse_attention_taped, fuse_concat, fuse_concat_backward,
    AttentionGrads, AttentionParams, AttentionTape, MASK_LOGIT,
};
pub use network::{forward_loss, init_params, loss_and_grad, predict, EvalMode, Mode, SampleInput};

use crate::datastore::DatasetManifest;
use crate::error::Result;
use crate::numerics::{ParamSet, Tensor};
use crate::scalar::Scalar;

/// An architecture together with a parameter set laid out for it.
#[derive(Debug, Clone, PartialEq)]
pub struct MultimodalClassifier<T> {
    pub arch: Architecture,
    pub params: ParamSet<T>,
}

impl<T: Scalar> MultimodalClassifier<T> {
    pub fn init(arch: Architecture, seed: u64) -> Self {
        let params = init_params(&arch, seed);
        MultimodalClassifier { arch, params }
    }

    pub fn build(manifest: &DatasetManifest, config: ModelConfig, seed: u64) -> Result<Self> {
        Ok(Self::init(Architecture::new(manifest, config)?, seed))
    }

    /// Single-modality model with the same layer sizes.
    pub fn build_unimodal(manifest: &DatasetManifest, config: ModelConfig, modality: &str, seed: u64) -> Result<Self> {
        let arch = Architecture::new(manifest, config)?.unimodal(modality)?;
        Ok(Self::init(arch, seed))
    }

    /// Wraps existing parameters after checking names and shapes.
    pub fn with_params(arch: Architecture, params: ParamSet<T>) -> Result<Self> {
        let template: ParamSet<T> = {
            let mut p = ParamSet::new();
            for (name, shape, _) in arch.layout() {
                p.insert(name, Tensor::zeros(&shape));
            }
            p
        };
        template.check_congruent(&params, "with_params")?;
        Ok(MultimodalClassifier { arch, params })
    }

    pub fn predict(&self, batch: &[SampleInput<T>]) -> Result<Tensor<T>> {
        predict(&self.arch, &self.params, batch)
    }

    /// Arg-max class per input.
    pub fn classify(&self, batch: &[SampleInput<T>]) -> Result<Vec<usize>> {
        let logits = self.predict(batch)?;
        Ok((0..logits.rows()).map(|r| logits.argmax_row(r)).collect())
    }

    pub fn num_params(&self) -> usize {
        self.params.num_values()
    }
}
