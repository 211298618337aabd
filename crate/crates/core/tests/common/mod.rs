#![allow(dead_code)]

use fedmm::datastore::{DatasetManifest, EncoderKind, ModalitySpec, Protocol};
use fedmm::evaluation::MetricName;
use fedmm::model::{Architecture, FusionScheme, ModelConfig, SampleInput};
use fedmm::numerics::Tensor;
use rand::Rng;

pub fn manifest(mods: &[(&str, usize, usize, EncoderKind)], num_classes: usize) -> DatasetManifest {
    DatasetManifest {
        name: "toy".into(),
        modalities: mods
            .iter()
            .map(|&(name, dim, max_len, encoder)| ModalitySpec {
                name: name.into(),
                dim,
                max_len,
                encoder,
            })
            .collect(),
        num_classes,
        protocol: Protocol::Predefined,
        metric: MetricName::Acc,
    }
}

pub fn tiny_config(hidden: usize, fusion: FusionScheme, heads: usize) -> ModelConfig {
    ModelConfig {
        hidden,
        conv_filters: vec![3, 2],
        kernel: 3,
        stride: 1,
        fusion,
        heads,
        classifier_hidden: 5,
        dropout: 0.2,
    }
}

pub fn random_tensor<R: Rng>(rows: usize, cols: usize, rng: &mut R) -> Tensor<f64> {
    let data = (0..rows * cols).map(|_| rng.random_range(-2.0..2.0)).collect();
    Tensor::matrix(rows, cols, data).unwrap()
}

/// Random inputs at each modality's max length; `drop` masks modality `i`
/// of sample `j` when `drop(j, i)` is true.
pub fn random_batch<R: Rng>(
    arch: &Architecture,
    n: usize,
    rng: &mut R,
    drop: impl Fn(usize, usize) -> bool,
) -> Vec<SampleInput<f64>> {
    (0..n)
        .map(|j| SampleInput {
            parts: arch
                .modalities
                .iter()
                .enumerate()
                .map(|(i, m)| {
                    let x = random_tensor(m.max_len, m.dim, rng);
                    (!drop(j, i)).then_some(x)
                })
                .collect(),
        })
        .collect()
}

use fedmm::datastore::{generate_synthetic, Dataset, SynthModality, SyntheticSpec};
use fedmm::federation::{ExperimentConfig, PartitionConfig, StrategyConfig};

/// Two-modality class-conditional task with separation:noise = 10:1.
pub fn canonical_spec(num_clients: usize, per_client: [usize; 2], seed: u64) -> SyntheticSpec {
    SyntheticSpec {
        name: "canonical".into(),
        num_clients,
        samples_per_client: per_client,
        num_classes: 4,
        modalities: vec![
            SynthModality { name: "audio".into(), len: 16, dim: 4, encoder: EncoderKind::ConvRnn },
            SynthModality { name: "video".into(), len: 6, dim: 6, encoder: EncoderKind::RnnOnly },
        ],
        separation: 10.0,
        noise: 1.0,
        test_fraction: 0.2,
        metric: MetricName::Acc,
        seed,
    }
}

pub fn canonical_dataset(num_clients: usize, per_client: [usize; 2], seed: u64) -> Dataset {
    generate_synthetic(&canonical_spec(num_clients, per_client, seed)).unwrap()
}

/// Small model for fast simulation.
pub fn small_model(fusion: FusionScheme) -> ModelConfig {
    ModelConfig {
        hidden: 12,
        conv_filters: vec![6, 8],
        kernel: 3,
        stride: 1,
        fusion,
        heads: 2,
        classifier_hidden: 16,
        dropout: 0.2,
    }
}

pub fn experiment(strategy: StrategyConfig, rounds: u64, rate: f64) -> ExperimentConfig {
    ExperimentConfig {
        partition: PartitionConfig::Natural,
        strategy,
        model: small_model(FusionScheme::Attention),
        rounds,
        sample_rate: rate,
        ..Default::default()
    }
}
