use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::{
    eligible_clients, run_round, ClientState, Executor, PreparedData, RoundContext, RoundReport, ServerState,
    StrategyConfig,
};
use crate::corruption::{apply_corruption, CorruptedView, CorruptionConfig};
use crate::datastore::{split_kfold, split_predefined, Dataset, Fold, Protocol};
use crate::error::{Error, Result};
use crate::evaluation::{summarize_runs, MetricName, RunSummary};
use crate::model::{init_params, Architecture, ModelConfig};
use crate::numerics::ParamSet;
use crate::partition::{partition_dirichlet, partition_dirichlet_within, partition_natural, ClientPartition};
use crate::rng::{self, Stream};
use crate::scalar::Scalar;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "mode", rename_all = "snake_case", deny_unknown_fields)]
pub enum PartitionConfig {
    /// One client per dataset client id.
    #[default]
    Natural,
    /// `clients` synthetic clients with Dirichlet(alpha) label proportions.
    Dirichlet { alpha: f64, clients: usize },
    /// Every natural client split into `cells` Dirichlet(alpha) cells.
    NestedDirichlet { alpha: f64, cells: usize },
}

impl PartitionConfig {
    pub fn validate(&self) -> Result<()> {
        match *self {
            PartitionConfig::Natural => Ok(()),
            PartitionConfig::Dirichlet { alpha, clients: n } | PartitionConfig::NestedDirichlet { alpha, cells: n } => {
                if !(alpha > 0.0 && alpha.is_finite()) {
                    return Err(Error::Config(format!("partition alpha must be positive, got {alpha}")));
                }
                if n == 0 {
                    return Err(Error::Config("partition needs at least one client".into()));
                }
                Ok(())
            }
        }
    }
}

fn default_rounds() -> u64 {
    200
}

fn default_rate() -> f64 {
    0.1
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// Full description of a federated experiment over an already loaded dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub partition: PartitionConfig,
    #[serde(default)]
    pub corruption: CorruptionConfig,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub model: ModelConfig,
    /// Train a single-modality model on this modality.
    #[serde(default)]
    pub unimodal: Option<String>,
    #[serde(default = "default_rounds")]
    pub rounds: u64,
    #[serde(default = "default_rate")]
    pub sample_rate: f64,
    /// One run per seed (predefined split protocol).
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    /// One run per fold; overrides the dataset's fold count.
    #[serde(default)]
    pub folds: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            partition: PartitionConfig::default(),
            corruption: CorruptionConfig::default(),
            strategy: StrategyConfig::default(),
            model: ModelConfig::default(),
            unimodal: None,
            rounds: default_rounds(),
            sample_rate: default_rate(),
            seeds: default_seeds(),
            folds: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        self.partition.validate()?;
        self.corruption.validate()?;
        self.strategy.validate()?;
        self.model.validate()?;
        if !(self.sample_rate > 0.0 && self.sample_rate <= 1.0) {
            return Err(Error::Config(format!("sample_rate must lie in (0, 1], got {}", self.sample_rate)));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("at least one seed is required".into()));
        }
        if let Some(k) = self.folds {
            if k < 2 {
                return Err(Error::Config(format!("folds must be >= 2, got {k}")));
            }
        }
        Ok(())
    }

    fn architecture(&self, dataset: &Dataset) -> Result<Architecture> {
        let arch = Architecture::new(dataset.manifest(), self.model.clone())?;
        match &self.unimodal {
            Some(m) => arch.unimodal(m),
            None => Ok(arch),
        }
    }

    /// `(master seed, fold index, fold)` for every run.
    fn runs(&self, dataset: &Dataset) -> Result<Vec<(u64, Option<usize>, Fold)>> {
        let k = match (self.folds, dataset.manifest().protocol) {
            (Some(k), _) | (None, Protocol::Kfold(k)) => Some(k),
            (None, Protocol::Predefined) => None,
        };
        match k {
            None => {
                let fold = split_predefined(dataset)?;
                Ok(self.seeds.iter().map(|&s| (s, None, fold.clone())).collect())
            }
            Some(k) => {
                let seed = self.seeds[0];
                Ok(split_kfold(dataset, k, seed)?
                    .into_iter()
                    .enumerate()
                    .map(|(f, fold)| (rng::derive_seed(seed, Stream::Fold, &[f as u64]), Some(f), fold))
                    .collect())
            }
        }
    }
}

/// Mutable state and fixed inputs of one run.
pub struct RunEnv<T> {
    pub run: usize,
    pub seed: u64,
    pub fold: Option<usize>,
    pub arch: Architecture,
    pub data: PreparedData<T>,
    pub view: CorruptedView,
    pub partition: ClientPartition,
    pub eligible: Vec<String>,
    pub test: Vec<usize>,
    pub server: ServerState<T>,
    pub clients: BTreeMap<String, ClientState<T>>,
}

impl<T: Scalar> RunEnv<T> {
    pub fn context<'a>(&'a self, cfg: &'a ExperimentConfig) -> RoundContext<'a, T> {
        RoundContext {
            arch: &self.arch,
            data: &self.data,
            partition: &self.partition,
            eligible: &self.eligible,
            test: &self.test,
            strategy: &cfg.strategy,
            sample_rate: cfg.sample_rate,
            seed: self.seed,
            run: self.run,
        }
    }

    pub fn step(&mut self, cfg: &ExperimentConfig, exec: &Executor) -> Result<RoundReport> {
        let ctx = RoundContext {
            arch: &self.arch,
            data: &self.data,
            partition: &self.partition,
            eligible: &self.eligible,
            test: &self.test,
            strategy: &cfg.strategy,
            sample_rate: cfg.sample_rate,
            seed: self.seed,
            run: self.run,
        };
        let (next, report) = run_round(&self.server, &mut self.clients, &ctx, exec)?;
        self.server = next;
        Ok(report)
    }
}

/// Builds split, partition, corrupted view, model and states for run `run`
/// with the given master seed.
pub fn setup_run<T: Scalar>(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    run: usize,
    seed: u64,
    fold_index: Option<usize>,
    fold: &Fold,
) -> Result<RunEnv<T>> {
    let partition = match cfg.partition {
        PartitionConfig::Natural => partition_natural(dataset, &fold.train)?,
        PartitionConfig::Dirichlet { alpha, clients } => partition_dirichlet(dataset, &fold.train, alpha, clients, seed)?,
        PartitionConfig::NestedDirichlet { alpha, cells } => {
            partition_dirichlet_within(dataset, &fold.train, alpha, cells, seed)?
        }
    };
    let mut corruption = cfg.corruption.clone();
    corruption.seed = corruption.seed.wrapping_add(seed);
    let view = apply_corruption(&CorruptedView::new(dataset, &fold.train), &corruption)?;
    let arch = cfg.architecture(dataset)?;
    let data = PreparedData::new(&arch, &view)?;
    let eligible = eligible_clients(&partition, &data);
    let clients = partition
        .iter()
        .map(|(id, cell)| (id.to_owned(), ClientState::new(id, &data, cell, arch.num_classes)))
        .collect();
    let server = ServerState::new(init_params(&arch, seed));
    Ok(RunEnv {
        run,
        seed,
        fold: fold_index,
        arch,
        data,
        view,
        partition,
        eligible,
        test: fold.test.clone(),
        server,
        clients,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run: usize,
    pub seed: u64,
    pub fold: Option<usize>,
    pub rounds: Vec<RoundReport>,
    pub final_metrics: BTreeMap<MetricName, f64>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult<T> {
    pub runs: Vec<RunResult>,
    /// Mean and sample standard deviation of the final metrics across runs.
    pub summary: BTreeMap<MetricName, RunSummary>,
    pub arch: Architecture,
    /// Global parameters at the end of the last run.
    pub final_params: ParamSet<T>,
}

/// Runs every seed or fold. `on_round` sees each report as soon as it exists,
/// including the round-0 evaluation of the untrained model.
pub fn run_experiment<T: Scalar>(
    cfg: &ExperimentConfig,
    dataset: &Dataset,
    exec: &Executor,
    mut on_round: impl FnMut(&RoundReport) -> Result<()>,
) -> Result<ExperimentResult<T>> {
    cfg.validate()?;
    let mut runs = Vec::new();
    let mut last = None;
    for (run, (seed, fold_index, fold)) in cfg.runs(dataset)?.into_iter().enumerate() {
        let mut env: RunEnv<T> = setup_run(cfg, dataset, run, seed, fold_index, &fold)?;
        let mut reports = vec![env.context(cfg).report_untrained(&env.server, exec)?];
        on_round(&reports[0])?;
        for _ in 0..cfg.rounds {
            let r = env.step(cfg, exec)?;
            on_round(&r)?;
            reports.push(r);
        }
        runs.push(RunResult {
            run,
            seed,
            fold: fold_index,
            final_metrics: reports.last().expect("round 0").metrics.clone(),
            rounds: reports,
        });
        last = Some((env.arch, env.server.params));
    }
    let (arch, final_params) = last.ok_or_else(|| Error::Config("experiment has no runs".into()))?;
    Ok(ExperimentResult {
        summary: summarize(&runs),
        runs,
        arch,
        final_params,
    })
}

/// Summary over the metrics every run reported.
pub fn summarize(runs: &[RunResult]) -> BTreeMap<MetricName, RunSummary> {
    MetricName::ALL
        .iter()
        .filter_map(|&m| {
            let vals: Option<Vec<f64>> = runs.iter().map(|r| r.final_metrics.get(&m).copied()).collect();
            vals.filter(|v| !v.is_empty()).map(|v| (m, summarize_runs(&v)))
        })
        .collect()
}
