//! Multimodal samples, dataset manifests, synthetic generation, file I/O and
//! split management.

mod io;
mod sidecar;
mod split;
mod synth;

use std::collections::HashSet;
use std::sync::Arc;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

pub use io::{load_dataset, save_dataset, MANIFEST_FILE, SAMPLES_FILE, SIDECAR_FILE};
pub use sidecar::{read_block, write_block, write_sidecar, SIDECAR_MAGIC};
pub use split::{split_kfold, split_predefined, Fold};
pub use synth::{generate_synthetic, SynthModality, SyntheticSpec};

use crate::error::{Error, Result};
use crate::evaluation::MetricName;
use crate::numerics::Tensor;

/// Encoder family used for a modality.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EncoderKind {
    /// Raw signals (audio features, accelerometer, ECG): conv stack then GRU.
    ConvRnn,
    /// Precomputed embedding sequences (video frames, text tokens): GRU only.
    RnnOnly,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModalitySpec {
    pub name: String,
    pub dim: usize,
    pub max_len: usize,
    #[serde(default = "default_encoder")]
    pub encoder: EncoderKind,
}

fn default_encoder() -> EncoderKind {
    EncoderKind::ConvRnn
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Protocol {
    Predefined,
    Kfold(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub name: String,
    pub modalities: Vec<ModalitySpec>,
    pub num_classes: usize,
    pub protocol: Protocol,
    pub metric: MetricName,
}

impl DatasetManifest {
    pub fn validate(&self) -> Result<()> {
        if self.num_classes < 2 {
            return Err(Error::Schema(format!("num_classes must be >= 2, got {}", self.num_classes)));
        }
        if self.modalities.is_empty() {
            return Err(Error::Schema("manifest declares no modalities".into()));
        }
        let mut seen = HashSet::new();
        for m in &self.modalities {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Schema(format!("duplicate modality `{}`", m.name)));
            }
            if m.dim == 0 || m.max_len == 0 {
                return Err(Error::Schema(format!("modality `{}` has a zero extent", m.name)));
            }
        }
        if let Protocol::Kfold(k) = self.protocol {
            if k < 2 {
                return Err(Error::Schema(format!("k-fold protocol needs k >= 2, got {k}")));
            }
        }
        Ok(())
    }

    pub fn modality(&self, name: &str) -> Option<&ModalitySpec> {
        self.modalities.iter().find(|m| m.name == name)
    }

    pub fn modality_names(&self) -> impl Iterator<Item = &str> {
        self.modalities.iter().map(|m| m.name.as_str())
    }
}

/// One multimodal instance. Modality tensors are `[T_m, D_m]`; an unavailable
/// modality may carry zero timesteps.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub id: String,
    pub client_id: Option<String>,
    pub label: Option<usize>,
    pub split: Option<Split>,
    pub modalities: IndexMap<String, Tensor<f64>>,
    pub available: IndexMap<String, bool>,
}

impl Sample {
    pub fn is_available(&self, modality: &str) -> bool {
        self.available.get(modality).copied().unwrap_or(false)
    }
}

/// Immutable, cheaply clonable collection of samples sharing a manifest.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    manifest: Arc<DatasetManifest>,
    samples: Arc<[Sample]>,
}

impl Dataset {
    /// Validates every sample against the manifest.
    pub fn new(manifest: DatasetManifest, samples: Vec<Sample>) -> Result<Self> {
        manifest.validate()?;
        let mut ids = HashSet::with_capacity(samples.len());
        for s in &samples {
            if !ids.insert(s.id.as_str()) {
                return Err(Error::Schema(format!("duplicate sample id `{}`", s.id)));
            }
            validate_sample(&manifest, s)?;
        }
        if manifest.protocol == Protocol::Predefined && samples.iter().any(|s| s.split.is_none()) {
            return Err(Error::Schema("predefined protocol requires a split tag on every sample".into()));
        }
        Ok(Dataset {
            manifest: Arc::new(manifest),
            samples: samples.into(),
        })
    }

    pub fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    pub fn samples(&self) -> &[Sample] {
        &self.samples
    }

    pub fn sample(&self, idx: usize) -> &Sample {
        &self.samples[idx]
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.manifest.num_classes
    }

    /// Distinct client ids in first-appearance order.
    pub fn client_ids(&self) -> Vec<&str> {
        let mut seen = HashSet::new();
        self.samples
            .iter()
            .filter_map(|s| s.client_id.as_deref())
            .filter(|c| seen.insert(*c))
            .collect()
    }
}

pub(crate) fn validate_sample(manifest: &DatasetManifest, s: &Sample) -> Result<()> {
    if let Some(y) = s.label {
        if y >= manifest.num_classes {
            return Err(Error::LabelRange {
                label: y,
                num_classes: manifest.num_classes,
            });
        }
    }
    if s.modalities.len() != manifest.modalities.len() || s.available.len() != manifest.modalities.len() {
        return Err(Error::Schema(format!(
            "sample `{}` does not carry exactly the manifest modalities",
            s.id
        )));
    }
    for m in &manifest.modalities {
        let t = s
            .modalities
            .get(&m.name)
            .ok_or_else(|| Error::Schema(format!("sample `{}` lacks modality `{}`", s.id, m.name)))?;
        let avail = *s
            .available
            .get(&m.name)
            .ok_or_else(|| Error::Schema(format!("sample `{}` lacks availability for `{}`", s.id, m.name)))?;
        if t.ndim() != 2 || t.cols() != m.dim {
            return Err(Error::Schema(format!(
                "modality `{}` of sample `{}` has shape {:?}, manifest dim is {}",
                m.name,
                s.id,
                t.shape(),
                m.dim
            )));
        }
        if t.rows() > m.max_len {
            return Err(Error::Schema(format!(
                "modality `{}` of sample `{}` has {} steps, max_len is {}",
                m.name,
                s.id,
                t.rows(),
                m.max_len
            )));
        }
        if avail && t.rows() == 0 {
            return Err(Error::Schema(format!(
                "modality `{}` of sample `{}` is available but empty",
                m.name, s.id
            )));
        }
    }
    Ok(())
}
