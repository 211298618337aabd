//! Multimodal federated learning simulation: synthetic and on-disk
//! multimodal datasets, client partitioning, data-corruption emulators, a
//! conv/GRU/attention classifier with analytic gradients and a federated
//! round engine (FedAvg, FedProx, SCAFFOLD, FedOpt, FedRS).
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below fix the element type.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod corruption;
pub mod datastore;
pub mod error;
pub mod evaluation;
pub mod federation;
pub mod model;
pub mod numerics;
pub mod partition;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type Tensor64 = numerics::Tensor<f64>;
pub type Tensor32 = numerics::Tensor<f32>;
pub type ParamSet64 = numerics::ParamSet<f64>;
pub type ParamSet32 = numerics::ParamSet<f32>;
pub type Classifier64 = model::MultimodalClassifier<f64>;
pub type Classifier32 = model::MultimodalClassifier<f32>;
pub type ServerState64 = federation::ServerState<f64>;
pub type ExperimentResult64 = federation::ExperimentResult<f64>;
