use rand::seq::SliceRandom;

use super::{StrategyConfig, StrategyName};
use crate::corruption::CorruptedView;
use crate::error::{Error, Result};
use crate::model::{loss_and_grad, Architecture, Mode, SampleInput};
use crate::numerics::{sgd_step_in_place, GradSet, ParamSet};
use crate::rng::{self, Stream};
use crate::scalar::Scalar;

/// Model inputs and observed labels for every dataset sample, as seen
/// through a corrupted view.
#[derive(Debug, Clone)]
pub struct PreparedData<T> {
    pub inputs: Vec<SampleInput<T>>,
    pub labels: Vec<Option<usize>>,
}

impl<T: Scalar> PreparedData<T> {
    pub fn new(arch: &Architecture, view: &CorruptedView) -> Result<Self> {
        let ds = view.dataset();
        let names: Vec<&str> = ds.manifest().modality_names().collect();
        let inputs = (0..view.len())
            .map(|i| {
                let avail = view.available(i);
                SampleInput::from_sample(arch, ds.sample(i), |m| {
                    names.iter().position(|&n| n == m).is_some_and(|k| avail[k])
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let labels = (0..view.len()).map(|i| view.label(i)).collect();
        Ok(PreparedData { inputs, labels })
    }

    /// Labelled, with at least one modality the model consumes.
    pub fn is_trainable(&self, i: usize) -> bool {
        self.labels[i].is_some() && self.inputs[i].any_available()
    }

    pub fn trainable(&self, indices: &[usize]) -> Vec<usize> {
        indices.iter().copied().filter(|&i| self.is_trainable(i)).collect()
    }
}

/// Per-client state that persists across rounds.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientState<T> {
    pub client_id: String,
    /// SCAFFOLD control variate `c_i`.
    pub control: Option<ParamSet<T>>,
    /// Counts of observed training labels.
    pub label_histogram: Vec<usize>,
}

impl<T: Scalar> ClientState<T> {
    pub fn new(client_id: &str, data: &PreparedData<T>, cell: &[usize], num_classes: usize) -> Self {
        let mut label_histogram = vec![0; num_classes];
        for i in data.trainable(cell) {
            if let Some(y) = data.labels[i] {
                label_histogram[y] += 1;
            }
        }
        ClientState {
            client_id: client_id.to_owned(),
            control: None,
            label_histogram,
        }
    }
}

/// What a client sends back: parameter-shaped tensors and scalars only.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientUpdate<T> {
    pub client_id: String,
    /// `w_local - w_global`.
    pub delta: ParamSet<T>,
    /// Labelled samples trained on.
    pub num_samples: usize,
    /// Change of the SCAFFOLD control variate.
    pub control_delta: Option<ParamSet<T>>,
    /// Mean minibatch loss.
    pub train_loss: f64,
    pub steps: usize,
}

/// FedRS logit scale: 1 for classes the client has labels for, `alpha_rs` otherwise.
fn restricted_scale<T: Scalar>(hist: &[usize], alpha_rs: f64) -> Vec<T> {
    hist.iter()
        .map(|&n| if n > 0 { T::one() } else { T::lit(alpha_rs) })
        .collect()
}

/// Runs the configured local epochs on one client.
///
/// The shuffle order and all dropout masks come from the stream keyed by
/// `(seed, round, client id)`.
#[allow(clippy::too_many_arguments)]
pub fn local_train<T: Scalar>(
    arch: &Architecture,
    global: &ParamSet<T>,
    data: &PreparedData<T>,
    cell: &[usize],
    strategy: &StrategyConfig,
    state: &mut ClientState<T>,
    server_control: Option<&ParamSet<T>>,
    round: u64,
    seed: u64,
) -> Result<ClientUpdate<T>> {
    let id = state.client_id.clone();
    let diverged = |reason: String| Error::ClientDivergence {
        client: id.clone(),
        reason,
    };
    let mut order = data.trainable(cell);
    if order.is_empty() {
        return Err(Error::Contract(format!("client `{id}` has no trainable samples")));
    }
    let lr = T::lit(strategy.lr);
    let scale = (strategy.name == StrategyName::Fedrs).then(|| restricted_scale::<T>(&state.label_histogram, strategy.alpha_rs));
    let scaffold = strategy.name == StrategyName::Scaffold;
    let correction = if scaffold {
        let c = match server_control {
            Some(c) => c.clone(),
            None => global.zeros_like(),
        };
        let ci = state.control.get_or_insert_with(|| global.zeros_like());
        Some(c.sub(ci)?)
    } else {
        None
    };

    let mut rng = rng::stream(seed, Stream::LocalTraining, &[round, rng::hash_str(&id)]);
    let mut w = global.clone();
    let mut loss_sum = 0.0;
    let mut steps = 0usize;
    for _ in 0..strategy.local_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(strategy.batch_size) {
            let batch: Vec<SampleInput<T>> = chunk.iter().map(|&i| data.inputs[i].clone()).collect();
            let labels: Vec<Option<usize>> = chunk.iter().map(|&i| data.labels[i]).collect();
            let (loss, mut g): (T, GradSet<T>) =
                loss_and_grad(arch, &w, &batch, &labels, scale.as_deref(), Mode::Train(&mut rng)).map_err(|e| match e {
                    Error::Numeric(what) => diverged(format!("non-finite {what} at step {steps}")),
                    other => other,
                })?;
            if !loss.is_finite() {
                return Err(diverged(format!("non-finite loss at step {steps}")));
            }
            if strategy.name == StrategyName::Fedprox {
                g.add_scaled(&w.sub(global)?, T::lit(strategy.mu))?;
            }
            if let Some(corr) = &correction {
                g.add_scaled(corr, T::one())?;
            }
            sgd_step_in_place(&mut w, &g, lr).map_err(|e| match e {
                Error::Divergence { tensor } => diverged(format!("non-finite gradient in `{tensor}`")),
                other => other,
            })?;
            loss_sum += loss.as_f64();
            steps += 1;
        }
    }
    if let Some(name) = w.first_non_finite() {
        return Err(diverged(format!("non-finite parameter `{name}`")));
    }
    let delta = w.sub(global)?;
    let control_delta = if scaffold {
        // c_i+ = c_i - c + (w_global - w_local) / (K lr)
        let ci = state.control.as_ref().expect("initialised above");
        let mut next = ci.clone();
        next.add_scaled(correction.as_ref().expect("scaffold"), -T::one())?;
        next.add_scaled(&delta, -T::one() / (T::lit(steps as f64) * lr))?;
        let dc = next.sub(ci)?;
        state.control = Some(next);
        Some(dc)
    } else {
        None
    };
    Ok(ClientUpdate {
        client_id: id,
        delta,
        num_samples: order.len(),
        control_delta,
        train_loss: loss_sum / steps as f64,
        steps,
    })
}
