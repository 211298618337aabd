use rand::seq::index;

use super::{ClientUpdate, ServerOptimizer, StrategyConfig, StrategyName};
use crate::error::{Error, Result};
use crate::numerics::ParamSet;
use crate::rng::{self, Stream};
use crate::scalar::Scalar;

/// Global model plus server-side optimizer and control-variate state.
#[derive(Debug, Clone, PartialEq)]
pub struct ServerState<T> {
    pub params: ParamSet<T>,
    /// Completed rounds.
    pub round: u64,
    pub moment1: Option<ParamSet<T>>,
    pub moment2: Option<ParamSet<T>>,
    /// SCAFFOLD global control variate `c`.
    pub control: Option<ParamSet<T>>,
}

impl<T: Scalar> ServerState<T> {
    pub fn new(params: ParamSet<T>) -> Self {
        ServerState {
            params,
            round: 0,
            moment1: None,
            moment2: None,
            control: None,
        }
    }
}

/// Uniformly samples `ceil(rate * |eligible|)` distinct clients; the result is
/// sorted and depends only on `(seed, round)` and the eligible set.
pub fn sample_clients(eligible: &[String], rate: f64, round: u64, seed: u64) -> Result<Vec<String>> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::Config(format!("client sample rate must lie in (0, 1], got {rate}")));
    }
    if eligible.is_empty() {
        return Err(Error::EmptyCohort);
    }
    let mut pool = eligible.to_vec();
    pool.sort();
    let n = pool.len();
    let k = ((rate * n as f64 - 1e-9).ceil() as usize).clamp(1, n);
    if k == n {
        return Ok(pool);
    }
    let mut rng = rng::stream(seed, Stream::ClientSampling, &[round]);
    let mut picked: Vec<usize> = index::sample(&mut rng, n, k).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| pool[i].clone()).collect())
}

/// Sample-weighted mean of the update deltas, reduced in ascending client-id
/// order with a running mean (equal inputs give that value exactly).
pub fn weighted_mean_delta<T: Scalar>(updates: &[ClientUpdate<T>]) -> Result<ParamSet<T>> {
    let mut sorted: Vec<&ClientUpdate<T>> = updates.iter().collect();
    sorted.sort_by(|a, b| a.client_id.cmp(&b.client_id));
    let first = sorted.first().ok_or(Error::EmptyCohort)?;
    let mut mean = first.delta.zeros_like();
    let mut total = 0usize;
    for u in sorted {
        if u.num_samples == 0 {
            return Err(Error::Contract(format!("update from `{}` has no samples", u.client_id)));
        }
        total += u.num_samples;
        let step = u.delta.sub(&mean)?;
        mean.add_scaled(&step, T::lit(u.num_samples as f64 / total as f64))?;
    }
    Ok(mean)
}

/// Applies one round of client updates. `num_clients` is the total client
/// population, used by the SCAFFOLD variate step.
pub fn aggregate<T: Scalar>(
    state: &ServerState<T>,
    updates: &[ClientUpdate<T>],
    strategy: &StrategyConfig,
    num_clients: usize,
) -> Result<ServerState<T>> {
    let mean = weighted_mean_delta(updates)?;
    let mut next = state.clone();
    next.round += 1;
    match strategy.name {
        StrategyName::Fedopt => server_step(&mut next, &mean, strategy)?,
        _ => next.params.add_scaled(&mean, T::one())?,
    }
    if strategy.name == StrategyName::Scaffold {
        let mut sorted: Vec<&ClientUpdate<T>> = updates.iter().collect();
        sorted.sort_by(|a, b| a.client_id.cmp(&b.client_id));
        let mut sum = state.params.zeros_like();
        for u in &sorted {
            let dc = u
                .control_delta
                .as_ref()
                .ok_or_else(|| Error::Contract(format!("scaffold update from `{}` lacks a control delta", u.client_id)))?;
            sum.add_scaled(dc, T::one())?;
        }
        let frac = T::lit(sorted.len() as f64 / num_clients.max(sorted.len()) as f64);
        let c = next.control.get_or_insert_with(|| state.params.zeros_like());
        c.add_scaled(&sum, frac / T::lit(sorted.len() as f64))?;
    }
    Ok(next)
}

/// FedOpt: `-mean` is the pseudo-gradient for the server optimizer.
fn server_step<T: Scalar>(state: &mut ServerState<T>, mean: &ParamSet<T>, s: &StrategyConfig) -> Result<()> {
    let lr = T::lit(s.server_lr);
    let b1 = T::lit(s.beta1);
    let mut g = mean.clone();
    g.scale(-T::one());
    match s.server_optimizer {
        ServerOptimizer::Momentum => {
            let v = state.moment1.get_or_insert_with(|| mean.zeros_like());
            v.scale(b1);
            v.add_scaled(&g, T::one())?;
            state.params.add_scaled(v, -lr)
        }
        ServerOptimizer::Adam => {
            let b2 = T::lit(s.beta2);
            let eps = T::lit(s.epsilon);
            let t = state.round as i32;
            let m = state.moment1.get_or_insert_with(|| mean.zeros_like());
            m.scale(b1);
            m.add_scaled(&g, T::one() - b1)?;
            let v = state.moment2.get_or_insert_with(|| mean.zeros_like());
            v.scale(b2);
            let g2 = {
                let mut sq = g.clone();
                for (_, t) in sq.iter_mut() {
                    *t = t.map(|x| x * x);
                }
                sq
            };
            v.add_scaled(&g2, T::one() - b2)?;
            let c1 = T::one() - b1.powi(t);
            let c2 = T::one() - b2.powi(t);
            let m = state.moment1.as_ref().unwrap();
            let v = state.moment2.as_ref().unwrap();
            for ((_, w), ((_, mt), (_, vt))) in state.params.iter_mut().zip(m.iter().zip(v.iter())) {
                for ((wi, &mi), &vi) in w.data_mut().iter_mut().zip(mt.data()).zip(vt.data()) {
                    *wi -= lr * (mi / c1) / ((vi / c2).sqrt() + eps);
                }
            }
            Ok(())
        }
    }
}
