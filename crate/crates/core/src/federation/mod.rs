//! Federated round engine: client sampling, local training, server
//! aggregation, evaluation and multi-run experiments.

mod client;
mod experiment;
mod round;
mod server;
mod strategy;

pub use client::{local_train, ClientState, ClientUpdate, PreparedData};
pub use experiment::{
    run_experiment, setup_run, summarize, ExperimentConfig, ExperimentResult, PartitionConfig, RunEnv, RunResult,
};
pub use round::{
    eligible_clients, evaluate, run_round, Evaluation, Executor, RoundContext, RoundReport, WORKERS_ENV,
};
pub use server::{aggregate, sample_clients, weighted_mean_delta, ServerState};
pub use strategy::{ServerOptimizer, StrategyConfig, StrategyName};
