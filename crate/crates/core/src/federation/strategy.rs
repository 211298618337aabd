use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StrategyName {
    Fedavg,
    Fedprox,
    Scaffold,
    Fedopt,
    Fedrs,
}

impl StrategyName {
    pub fn as_str(self) -> &'static str {
        match self {
            StrategyName::Fedavg => "fedavg",
            StrategyName::Fedprox => "fedprox",
            StrategyName::Scaffold => "scaffold",
            StrategyName::Fedopt => "fedopt",
            StrategyName::Fedrs => "fedrs",
        }
    }
}

impl fmt::Display for StrategyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for StrategyName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.to_ascii_lowercase().as_str() {
            "fedavg" => StrategyName::Fedavg,
            "fedprox" => StrategyName::Fedprox,
            "scaffold" => StrategyName::Scaffold,
            "fedopt" => StrategyName::Fedopt,
            "fedrs" => StrategyName::Fedrs,
            other => return Err(Error::Config(format!("unknown strategy `{other}`"))),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ServerOptimizer {
    Momentum,
    Adam,
}

/// Client and server hyperparameters of a federated strategy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StrategyConfig {
    pub name: StrategyName,
    /// Client learning rate.
    pub lr: f64,
    pub local_epochs: usize,
    pub batch_size: usize,
    /// FedProx proximal weight.
    pub mu: f64,
    pub server_lr: f64,
    pub server_optimizer: ServerOptimizer,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    /// FedRS scale for logits of classes a client has no labels for.
    pub alpha_rs: f64,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        StrategyConfig {
            name: StrategyName::Fedavg,
            lr: 0.05,
            local_epochs: 1,
            batch_size: 16,
            mu: 0.01,
            server_lr: 1e-3,
            server_optimizer: ServerOptimizer::Adam,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            alpha_rs: 0.5,
        }
    }
}

impl StrategyConfig {
    pub fn named(name: StrategyName) -> Self {
        StrategyConfig {
            name,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("strategy: {m}")));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad(format!("lr must be positive, got {}", self.lr));
        }
        if self.local_epochs == 0 || self.batch_size == 0 {
            return bad("local_epochs and batch_size must be >= 1".into());
        }
        if !(self.mu >= 0.0) {
            return bad(format!("mu must be >= 0, got {}", self.mu));
        }
        if !(self.server_lr > 0.0) {
            return bad(format!("server_lr must be positive, got {}", self.server_lr));
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("betas must lie in [0, 1)".into());
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive".into());
        }
        if !(self.alpha_rs > 0.0 && self.alpha_rs <= 1.0) {
            return bad(format!("alpha_rs must lie in (0, 1], got {}", self.alpha_rs));
        }
        Ok(())
    }
}
