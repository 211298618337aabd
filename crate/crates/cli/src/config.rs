//! On-disk run configuration (TOML) and command-line overrides.

use std::path::{Path, PathBuf};

use clap::Args;
use fedmm::corruption::CorruptionConfig;
use fedmm::datastore::{generate_synthetic, load_dataset, Dataset, SyntheticSpec};
use fedmm::federation::{ExperimentConfig, PartitionConfig, StrategyConfig, StrategyName};
use fedmm::model::{FusionScheme, ModelConfig};
use fedmm::{Error, Result};
use serde::{Deserialize, Serialize};

pub const CONFIG_VERSION: u32 = 1;

/// Where the samples come from: a dataset directory or an inline generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSection {
    #[serde(default)]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub synthetic: Option<SyntheticSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunFile {
    pub version: u32,
    #[serde(default)]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub unimodal: Option<String>,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub folds: Option<usize>,
    pub dataset: DatasetSection,
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub corruption: CorruptionConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub model: ModelConfig,
}

fn default_rounds() -> u64 {
    ExperimentConfig::default().rounds
}

fn default_rate() -> f64 {
    ExperimentConfig::default().sample_rate
}

fn default_seeds() -> Vec<u64> {
    ExperimentConfig::default().seeds
}

pub fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

pub fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {}", path.display(), e.message())))
}

impl RunFile {
    pub fn load(path: &Path) -> Result<Self> {
        let mut cfg: RunFile = read_toml(path)?;
        if cfg.version != CONFIG_VERSION {
            return Err(Error::Config(format!(
                "unsupported config version {} (expected {CONFIG_VERSION})",
                cfg.version
            )));
        }
        // Relative dataset paths are resolved against the config file.
        if let (Some(p), Some(dir)) = (cfg.dataset.path.as_mut(), path.parent()) {
            if p.is_relative() {
                *p = dir.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn experiment(&self) -> ExperimentConfig {
        ExperimentConfig {
            partition: self.partition.clone(),
            corruption: self.corruption.clone(),
            strategy: self.strategy.clone(),
            model: self.model.clone(),
            unimodal: self.unimodal.clone(),
            rounds: self.rounds,
            sample_rate: self.sample_rate,
            seeds: self.seeds.clone(),
            folds: self.folds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(_), None) => {}
            (None, Some(spec)) => spec.validate()?,
            _ => return Err(Error::Config("[dataset] needs exactly one of `path` or `synthetic`".into())),
        }
        self.experiment().validate()
    }

    pub fn load_dataset(&self) -> Result<Dataset> {
        match (&self.dataset.path, &self.dataset.synthetic) {
            (Some(p), None) => load_dataset(p),
            (None, Some(spec)) => generate_synthetic(spec),
            _ => Err(Error::Config("[dataset] needs exactly one of `path` or `synthetic`".into())),
        }
    }

    pub fn output_dir(&self) -> Result<PathBuf> {
        self.out
            .clone()
            .ok_or_else(|| Error::Config("no output directory: set `out` or pass --out".into()))
    }
}

fn parse_fusion(s: &str) -> std::result::Result<FusionScheme, String> {
    match s.to_ascii_lowercase().as_str() {
        "concat" => Ok(FusionScheme::Concat),
        "attention" => Ok(FusionScheme::Attention),
        other => Err(format!("unknown fusion `{other}` (expected concat or attention)")),
    }
}

/// Flags that override keys of the configuration file.
#[derive(Debug, Clone, Default, Args)]
pub struct Overrides {
    /// Dirichlet concentration; switches to a Dirichlet partition.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Number of Dirichlet clients.
    #[arg(long)]
    pub clients: Option<usize>,
    /// Missing-modality rate q.
    #[arg(long = "missing-modality", value_name = "Q")]
    pub missing_modality: Option<f64>,
    /// Missing-label rate l.
    #[arg(long = "missing-label", value_name = "L")]
    pub missing_label: Option<f64>,
    /// Erroneous-label ratio e.
    #[arg(long = "label-error", value_name = "E")]
    pub label_error: Option<f64>,
    /// Label-error sparsity s.
    #[arg(long, value_name = "S")]
    pub sparsity: Option<f64>,
    #[arg(long)]
    pub strategy: Option<StrategyName>,
    #[arg(long, value_parser = parse_fusion)]
    pub fusion: Option<FusionScheme>,
    /// Train a single-modality model on this modality.
    #[arg(long, value_name = "NAME")]
    pub unimodal: Option<String>,
    #[arg(long)]
    pub rounds: Option<u64>,
    #[arg(long = "sample-rate")]
    pub sample_rate: Option<f64>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long = "server-lr")]
    pub server_lr: Option<f64>,
    #[arg(long)]
    pub mu: Option<f64>,
    /// Single master seed (replaces the seed list).
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Overrides {
    pub fn apply(&self, cfg: &mut RunFile) -> Result<()> {
        if self.alpha.is_some() || self.clients.is_some() {
            let (alpha, clients) = match cfg.partition {
                PartitionConfig::Dirichlet { alpha, clients } => (Some(alpha), Some(clients)),
                _ => (None, None),
            };
            let alpha = self.alpha.or(alpha);
            let clients = self.clients.or(clients);
            match (alpha, clients) {
                (Some(alpha), Some(clients)) => cfg.partition = PartitionConfig::Dirichlet { alpha, clients },
                _ => {
                    return Err(Error::Config(
                        "--alpha and --clients together define a Dirichlet partition; one is missing".into(),
                    ))
                }
            }
        }
        let c = &mut cfg.corruption;
        set(&mut c.missing_modality, self.missing_modality);
        set(&mut c.missing_label, self.missing_label);
        set(&mut c.label_error, self.label_error);
        set(&mut c.sparsity, self.sparsity);
        set(&mut cfg.strategy.name, self.strategy);
        set(&mut cfg.strategy.lr, self.lr);
        set(&mut cfg.strategy.server_lr, self.server_lr);
        set(&mut cfg.strategy.mu, self.mu);
        set(&mut cfg.model.fusion, self.fusion);
        set(&mut cfg.rounds, self.rounds);
        set(&mut cfg.sample_rate, self.sample_rate);
        if let Some(m) = &self.unimodal {
            cfg.unimodal = Some(m.clone());
        }
        if let Some(s) = self.seed {
            cfg.seeds = vec![s];
        }
        if let Some(k) = self.folds {
            cfg.folds = Some(k);
        }
        if let Some(o) = &self.out {
            cfg.out = Some(o.clone());
        }
        Ok(())
    }
}

fn set<T>(slot: &mut T, v: Option<T>) {
    if let Some(v) = v {
        *slot = v;
    }
}
