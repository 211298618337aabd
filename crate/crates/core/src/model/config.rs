use serde::{Deserialize, Serialize};

use crate::datastore::{DatasetManifest, EncoderKind, ModalitySpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FusionScheme {
    /// Temporal mean per modality, concatenated in manifest order.
    Concat,
    /// Multi-head additive attention over all modality timesteps.
    Attention,
}

/// Layer sizes shared by every encoder and the classifier head.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelConfig {
    pub hidden: usize,
    pub conv_filters: Vec<usize>,
    pub kernel: usize,
    pub stride: usize,
    pub fusion: FusionScheme,
    pub heads: usize,
    pub classifier_hidden: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            hidden: 128,
            conv_filters: vec![16, 32, 64],
            kernel: 5,
            stride: 1,
            fusion: FusionScheme::Attention,
            heads: 6,
            classifier_hidden: 64,
            dropout: 0.2,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("model: {m}")));
        if self.hidden == 0 || self.classifier_hidden == 0 {
            return bad("hidden sizes must be positive".into());
        }
        if self.heads == 0 {
            return bad("heads must be >= 1".into());
        }
        if self.kernel == 0 || self.kernel.is_multiple_of(2) {
            return bad(format!("kernel must be odd, got {}", self.kernel));
        }
        if self.stride == 0 {
            return bad("stride must be positive".into());
        }
        if self.conv_filters.contains(&0) {
            return bad("conv filter counts must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }
}

/// Everything that fixes parameter names and shapes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Architecture {
    pub modalities: Vec<ModalitySpec>,
    pub num_classes: usize,
    pub config: ModelConfig,
}

impl Architecture {
    pub fn new(manifest: &DatasetManifest, config: ModelConfig) -> Result<Self> {
        manifest.validate()?;
        config.validate()?;
        Ok(Architecture {
            modalities: manifest.modalities.clone(),
            num_classes: manifest.num_classes,
            config,
        })
    }

    /// Same layer sizes restricted to one modality; fusion degenerates to
    /// temporal mean pooling.
    pub fn unimodal(&self, modality: &str) -> Result<Self> {
        let spec = self
            .modalities
            .iter()
            .find(|m| m.name == modality)
            .ok_or_else(|| Error::Config(format!("unknown modality `{modality}`")))?;
        let mut config = self.config.clone();
        config.fusion = FusionScheme::Concat;
        Ok(Architecture {
            modalities: vec![spec.clone()],
            num_classes: self.num_classes,
            config,
        })
    }

    pub fn hidden(&self) -> usize {
        self.config.hidden
    }

    pub fn modality_index(&self, name: &str) -> Option<usize> {
        self.modalities.iter().position(|m| m.name == name)
    }

    /// Width of the fused representation fed to the classifier.
    pub fn fused_width(&self) -> usize {
        match self.config.fusion {
            FusionScheme::Concat => self.modalities.len() * self.config.hidden,
            FusionScheme::Attention => self.config.heads * self.config.hidden,
        }
    }

    /// Minimum sequence length a modality needs to survive its conv stack.
    pub fn min_len(&self, m: usize) -> usize {
        match self.modalities[m].encoder {
            EncoderKind::RnnOnly => 1,
            EncoderKind::ConvRnn => {
                let (k, s) = (self.config.kernel, self.config.stride);
                self.config.conv_filters.iter().fold(1, |need, _| (need - 1) * s + k)
            }
        }
    }

    /// Parameter names and shapes in canonical order, with each tensor's fan-in.
    pub fn layout(&self) -> Vec<(String, Vec<usize>, usize)> {
        let h = self.config.hidden;
        let k = self.config.kernel;
        let mut out = Vec::new();
        for m in &self.modalities {
            let mut width = m.dim;
            if m.encoder == EncoderKind::ConvRnn {
                for (l, &f) in self.config.conv_filters.iter().enumerate() {
                    out.push((format!("enc.{}.conv{l}.kernel", m.name), vec![f, width, k], width * k));
                    out.push((format!("enc.{}.conv{l}.bias", m.name), vec![f], width * k));
                    width = f;
                }
            }
            out.push((format!("enc.{}.gru.w_ih", m.name), vec![3 * h, width], h));
            out.push((format!("enc.{}.gru.w_hh", m.name), vec![3 * h, h], h));
            out.push((format!("enc.{}.gru.b_ih", m.name), vec![3 * h], h));
            out.push((format!("enc.{}.gru.b_hh", m.name), vec![3 * h], h));
        }
        if self.config.fusion == FusionScheme::Attention {
            out.push(("fusion.w".into(), vec![h, h], h));
            out.push(("fusion.b".into(), vec![h], h));
            out.push(("fusion.context".into(), vec![self.config.heads, h], h));
        }
        let f = self.fused_width();
        let ch = self.config.classifier_hidden;
        out.push(("cls.fc1.w".into(), vec![ch, f], f));
        out.push(("cls.fc1.b".into(), vec![ch], f));
        out.push(("cls.fc2.w".into(), vec![self.num_classes, ch], ch));
        out.push(("cls.fc2.b".into(), vec![self.num_classes], ch));
        out
    }
}
