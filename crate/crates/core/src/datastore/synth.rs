use indexmap::IndexMap;
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{Dataset, DatasetManifest, EncoderKind, ModalitySpec, Protocol, Sample, Split};
use crate::error::{Error, Result};
use crate::evaluation::MetricName;
use crate::numerics::Tensor;
use crate::rng::{self, Stream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthModality {
    pub name: String,
    /// Timesteps per sample.
    pub len: usize,
    pub dim: usize,
    #[serde(default = "conv_rnn")]
    pub encoder: EncoderKind,
}

fn conv_rnn() -> EncoderKind {
    EncoderKind::ConvRnn
}

/// Class-conditional Gaussian generator settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSpec {
    #[serde(default = "default_name")]
    pub name: String,
    pub num_clients: usize,
    /// Inclusive range of samples drawn per client.
    pub samples_per_client: [usize; 2],
    pub num_classes: usize,
    pub modalities: Vec<SynthModality>,
    /// Norm of each class mean vector.
    pub separation: f64,
    /// Per-coordinate noise standard deviation.
    pub noise: f64,
    /// Fraction of samples tagged `test`; 0 selects a 5-fold protocol.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default = "default_metric")]
    pub metric: MetricName,
    pub seed: u64,
}

fn default_name() -> String {
    "synthetic".into()
}

fn default_test_fraction() -> f64 {
    0.2
}

fn default_metric() -> MetricName {
    MetricName::Acc
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("synthetic spec: {m}")));
        if self.num_clients == 0 {
            return bad("num_clients must be positive");
        }
        let [lo, hi] = self.samples_per_client;
        if lo == 0 || lo > hi {
            return bad("samples_per_client must be a positive range [min, max]");
        }
        if self.num_classes < 2 {
            return bad("num_classes must be >= 2");
        }
        if self.modalities.is_empty() {
            return bad("at least one modality is required");
        }
        if self.modalities.iter().any(|m| m.len == 0 || m.dim == 0) {
            return bad("modality extents must be positive");
        }
        if !(self.separation >= 0.0 && self.noise >= 0.0) || !self.separation.is_finite() || !self.noise.is_finite() {
            return bad("separation and noise must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.test_fraction) {
            return bad("test_fraction must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn manifest(&self) -> DatasetManifest {
        DatasetManifest {
            name: self.name.clone(),
            modalities: self
                .modalities
                .iter()
                .map(|m| ModalitySpec {
                    name: m.name.clone(),
                    dim: m.dim,
                    max_len: m.len,
                    encoder: m.encoder,
                })
                .collect(),
            num_classes: self.num_classes,
            protocol: if self.test_fraction > 0.0 {
                Protocol::Predefined
            } else {
                Protocol::Kfold(5)
            },
            metric: self.metric,
        }
    }
}

/// Generates a class-conditional dataset.
///
/// Each class owns one random mean vector per modality with norm
/// `separation`; a sample repeats its class mean at every timestep and adds
/// i.i.d. `N(0, noise²)` per coordinate. Labels cycle through the classes in
/// generation order, so the class histogram is balanced up to one sample.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Dataset> {
    spec.validate()?;
    let mut rng = rng::stream(spec.seed, Stream::Synthetic, &[]);
    let means: Vec<Vec<Vec<f64>>> = spec
        .modalities
        .iter()
        .map(|m| {
            (0..spec.num_classes)
                .map(|_| {
                    let v: Vec<f64> = (0..m.dim).map(|_| rng.sample(StandardNormal)).collect();
                    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt().max(f64::MIN_POSITIVE);
                    v.iter().map(|x| x / norm * spec.separation).collect()
                })
                .collect()
        })
        .collect();
    let with_splits = spec.test_fraction > 0.0;
    let mut samples = Vec::new();
    let mut counter = 0usize;
    let [lo, hi] = spec.samples_per_client;
    for c in 0..spec.num_clients {
        let client = format!("client{c:03}");
        let n = rng.random_range(lo..=hi);
        for j in 0..n {
            let label = counter % spec.num_classes;
            counter += 1;
            let mut modalities = IndexMap::new();
            let mut available = IndexMap::new();
            for (mi, m) in spec.modalities.iter().enumerate() {
                let mean = &means[mi][label];
                let mut data = Vec::with_capacity(m.len * m.dim);
                for _ in 0..m.len {
                    for &mu in mean {
                        let e: f64 = rng.sample(StandardNormal);
                        data.push(mu + spec.noise * e);
                    }
                }
                modalities.insert(m.name.clone(), Tensor::matrix(m.len, m.dim, data)?);
                available.insert(m.name.clone(), true);
            }
            let split = if with_splits {
                Some(if rng.random::<f64>() < spec.test_fraction {
                    Split::Test
                } else {
                    Split::Train
                })
            } else {
                None
            };
            samples.push(Sample {
                id: format!("{client}-{j:05}"),
                client_id: Some(client.clone()),
                label: Some(label),
                split,
                modalities,
                available,
            });
        }
    }
    Dataset::new(spec.manifest(), samples)
}
