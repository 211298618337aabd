use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{aggregate, local_train, sample_clients, ClientState, PreparedData, ServerState, StrategyConfig};
use crate::error::{Error, Result};
use crate::evaluation::{score_all, MetricName};
use crate::model::{predict, Architecture};
use crate::numerics::{softmax_rows, ParamSet};
use crate::partition::ClientPartition;
use crate::scalar::Scalar;

/// Environment variable holding the worker count.
pub const WORKERS_ENV: &str = "MMFED_WORKERS";

/// Runs per-client work serially or on a dedicated thread pool. Results are
/// always returned in input order.
pub enum Executor {
    Serial,
    Pool(rayon::ThreadPool),
}

impl Executor {
    pub fn new(workers: usize) -> Result<Self> {
        if workers <= 1 {
            return Ok(Executor::Serial);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(workers)
            .build()
            .map(Executor::Pool)
            .map_err(|e| Error::Config(format!("thread pool: {e}")))
    }

    /// Worker count from `MMFED_WORKERS`, else the available parallelism.
    pub fn from_env() -> Result<Self> {
        let workers = match std::env::var(WORKERS_ENV) {
            Ok(v) => v
                .trim()
                .parse::<usize>()
                .map_err(|_| Error::Config(format!("{WORKERS_ENV} must be a positive integer, got `{v}`")))?,
            Err(_) => std::thread::available_parallelism().map_or(1, |n| n.get()),
        };
        Self::new(workers)
    }

    pub fn workers(&self) -> usize {
        match self {
            Executor::Serial => 1,
            Executor::Pool(p) => p.current_num_threads(),
        }
    }

    pub fn map<I, O, F>(&self, items: Vec<I>, f: F) -> Vec<O>
    where
        I: Send,
        O: Send,
        F: Fn(I) -> O + Sync + Send,
    {
        match self {
            Executor::Serial => items.into_iter().map(f).collect(),
            Executor::Pool(p) => p.install(|| items.into_par_iter().map(f).collect()),
        }
    }
}

/// Test-set scores of one parameter set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub metrics: BTreeMap<MetricName, f64>,
    pub loss: f64,
    /// Test samples scored (samples with no usable modality are skipped).
    pub num_samples: usize,
}

const EVAL_CHUNK: usize = 64;

pub fn evaluate<T: Scalar>(
    arch: &Architecture,
    params: &ParamSet<T>,
    data: &PreparedData<T>,
    test: &[usize],
    exec: &Executor,
) -> Result<Evaluation> {
    let usable: Vec<usize> = test
        .iter()
        .copied()
        .filter(|&i| data.labels[i].is_some() && data.inputs[i].any_available())
        .collect();
    if usable.is_empty() {
        return Err(Error::Contract("no scorable test samples".into()));
    }
    let chunks: Vec<&[usize]> = usable.chunks(EVAL_CHUNK).collect();
    let probs: Vec<Vec<Vec<f64>>> = exec
        .map(chunks, |chunk| {
            let batch: Vec<_> = chunk.iter().map(|&i| data.inputs[i].clone()).collect();
            let p = softmax_rows(&predict(arch, params, &batch)?);
            Ok((0..p.rows()).map(|r| p.row(r).iter().map(|v| v.as_f64()).collect()).collect())
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    let probs: Vec<Vec<f64>> = probs.into_iter().flatten().collect();
    let labels: Vec<usize> = usable.iter().map(|&i| data.labels[i].unwrap()).collect();
    let preds: Vec<usize> = probs
        .iter()
        .map(|p| {
            p.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (c, &v)| if v > best.1 { (c, v) } else { best })
                .0
        })
        .collect();
    let loss = probs
        .iter()
        .zip(&labels)
        .map(|(p, &y)| -p[y].max(f64::MIN_POSITIVE).ln())
        .sum::<f64>()
        / labels.len() as f64;
    let metrics = score_all(&preds, &labels, &probs, arch.num_classes)?
        .into_iter()
        .map(|(k, v)| (k, v.value))
        .collect();
    Ok(Evaluation {
        metrics,
        loss,
        num_samples: labels.len(),
    })
}

/// One line of the round log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundReport {
    pub run: usize,
    pub round: u64,
    pub strategy: String,
    pub cohort_size: usize,
    pub cohort: Vec<String>,
    /// Clients dropped for divergence, with the reason.
    pub diverged: Vec<(String, String)>,
    /// Sample-weighted mean of client training losses; absent at round 0.
    pub train_loss: Option<f64>,
    pub test_loss: f64,
    pub metrics: BTreeMap<MetricName, f64>,
}

/// Everything a round needs besides the mutable server and client state.
pub struct RoundContext<'a, T> {
    pub arch: &'a Architecture,
    pub data: &'a PreparedData<T>,
    pub partition: &'a ClientPartition,
    /// Clients with at least one trainable sample.
    pub eligible: &'a [String],
    pub test: &'a [usize],
    pub strategy: &'a StrategyConfig,
    pub sample_rate: f64,
    pub seed: u64,
    pub run: usize,
}

impl<'a, T: Scalar> RoundContext<'a, T> {
    /// Round-0 style report: evaluation only.
    pub fn report_untrained(&self, server: &ServerState<T>, exec: &Executor) -> Result<RoundReport> {
        let ev = evaluate(self.arch, &server.params, self.data, self.test, exec)?;
        Ok(RoundReport {
            run: self.run,
            round: server.round,
            strategy: self.strategy.name.to_string(),
            cohort_size: 0,
            cohort: Vec::new(),
            diverged: Vec::new(),
            train_loss: None,
            test_loss: ev.loss,
            metrics: ev.metrics,
        })
    }
}

/// Clients holding at least one trainable sample, in id order.
pub fn eligible_clients<T: Scalar>(partition: &ClientPartition, data: &PreparedData<T>) -> Vec<String> {
    partition
        .iter()
        .filter(|(_, cell)| cell.iter().any(|&i| data.is_trainable(i)))
        .map(|(c, _)| c.to_owned())
        .collect()
}

/// Sample, broadcast, train, aggregate, evaluate.
pub fn run_round<T: Scalar>(
    server: &ServerState<T>,
    clients: &mut BTreeMap<String, ClientState<T>>,
    ctx: &RoundContext<'_, T>,
    exec: &Executor,
) -> Result<(ServerState<T>, RoundReport)> {
    let round = server.round + 1;
    let cohort = sample_clients(ctx.eligible, ctx.sample_rate, round, ctx.seed)?;
    let jobs: Vec<(ClientState<T>, &[usize])> = cohort
        .iter()
        .map(|id| {
            let cell = ctx
                .partition
                .cell(id)
                .ok_or_else(|| Error::Contract(format!("client `{id}` not in partition")))?;
            let state = clients
                .get(id)
                .cloned()
                .unwrap_or_else(|| ClientState::new(id, ctx.data, cell, ctx.arch.num_classes));
            Ok((state, cell))
        })
        .collect::<Result<_>>()?;
    let control = server.control.as_ref();
    let results = exec.map(jobs, |(mut state, cell)| {
        let out = local_train(
            ctx.arch,
            &server.params,
            ctx.data,
            cell,
            ctx.strategy,
            &mut state,
            control,
            round,
            ctx.seed,
        );
        (state, out)
    });

    let mut updates = Vec::new();
    let mut diverged = Vec::new();
    for (state, out) in results {
        match out {
            Ok(u) => {
                clients.insert(state.client_id.clone(), state);
                updates.push(u);
            }
            Err(Error::ClientDivergence { client, reason }) => diverged.push((client, reason)),
            Err(e) => return Err(e),
        }
    }
    if updates.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let next = aggregate(server, &updates, ctx.strategy, ctx.eligible.len())?;
    let total: usize = updates.iter().map(|u| u.num_samples).sum();
    let train_loss = updates
        .iter()
        .map(|u| u.train_loss * u.num_samples as f64)
        .sum::<f64>()
        / total as f64;
    let ev = evaluate(ctx.arch, &next.params, ctx.data, ctx.test, exec)?;
    let report = RoundReport {
        run: ctx.run,
        round: next.round,
        strategy: ctx.strategy.name.to_string(),
        cohort_size: cohort.len(),
        cohort,
        diverged,
        train_loss: Some(train_loss),
        test_loss: ev.loss,
        metrics: ev.metrics,
    };
    Ok((next, report))
}
