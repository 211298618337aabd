//! Dirichlet label-skew partitioning.
//!
//! Procedure for one draw, all randomness from a single ChaCha stream keyed by
//! `(seed, attempt)`:
//!
//! 1. Bucket the input indices by label, ascending class, preserving order.
//! 2. For each class `c` in ascending order draw `g_j ~ Gamma(α, 1)` for
//!    clients `j = 0..N` (in order) and set `p_c = g / Σg`.
//! 3. For each sample of class `c`, in order, draw `u ~ U[0, 1)` and assign
//!    it to the first client `j` whose cumulative probability exceeds `u`
//!    (the last client if rounding leaves `u` uncovered).
//!
//! A draw is accepted when every client holds at least
//! [`MIN_CLIENT_SAMPLES`]; otherwise the next attempt is tried, up to
//! [`MAX_REDRAWS`] attempts.

use std::collections::BTreeMap;

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{ClientPartition, Provenance};
use crate::datastore::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

pub const MIN_CLIENT_SAMPLES: usize = 2;
pub const MAX_REDRAWS: usize = 100;

fn draw_once(
    by_class: &[Vec<usize>],
    alpha: f64,
    num_clients: usize,
    rng: &mut impl Rng,
) -> Option<Vec<Vec<usize>>> {
    let gamma = Gamma::new(alpha, 1.0).ok()?;
    let mut cells = vec![Vec::new(); num_clients];
    for members in by_class {
        let g: Vec<f64> = (0..num_clients).map(|_| gamma.sample(rng)).collect();
        let total: f64 = g.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return None;
        }
        let mut cum = Vec::with_capacity(num_clients);
        let mut acc = 0.0;
        for v in &g {
            acc += v / total;
            cum.push(acc);
        }
        for &i in members {
            let u: f64 = rng.random();
            let j = cum.iter().position(|&c| c > u).unwrap_or(num_clients - 1);
            cells[j].push(i);
        }
    }
    cells.iter().all(|c| c.len() >= MIN_CLIENT_SAMPLES).then_some(cells)
}

fn bucket_by_label(dataset: &Dataset, indices: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut by_class = vec![Vec::new(); dataset.num_classes()];
    for &i in indices {
        let s = dataset.sample(i);
        let y = s
            .label
            .ok_or_else(|| Error::Contract(format!("Dirichlet partitioning needs labels; `{}` has none", s.id)))?;
        by_class[y].push(i);
    }
    Ok(by_class)
}

fn split_with_retries(
    by_class: &[Vec<usize>],
    alpha: f64,
    num_clients: usize,
    seed: u64,
    coord: u64,
) -> Result<Vec<Vec<usize>>> {
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("Dirichlet alpha must be positive, got {alpha}")));
    }
    if num_clients == 0 {
        return Err(Error::Config("num_clients must be >= 1".into()));
    }
    for attempt in 0..MAX_REDRAWS {
        let mut rng = rng::stream(seed, Stream::Partition, &[coord, attempt as u64]);
        if let Some(mut cells) = draw_once(by_class, alpha, num_clients, &mut rng) {
            for c in &mut cells {
                c.sort_unstable();
            }
            return Ok(cells);
        }
    }
    Err(Error::InfeasiblePartition {
        alpha,
        clients: num_clients,
        samples: by_class.iter().map(Vec::len).sum(),
        retries: MAX_REDRAWS,
    })
}

/// Splits `indices` over `num_clients` synthetic clients with per-class
/// Dirichlet(α) proportions. Client ids are `client000`, `client001`, ...
pub fn partition_dirichlet(
    dataset: &Dataset,
    indices: &[usize],
    alpha: f64,
    num_clients: usize,
    seed: u64,
) -> Result<ClientPartition> {
    let by_class = bucket_by_label(dataset, indices)?;
    let cells = split_with_retries(&by_class, alpha, num_clients, seed, 0)?;
    let cells: BTreeMap<String, Vec<usize>> = cells
        .into_iter()
        .enumerate()
        .map(|(j, c)| (format!("client{j:03}"), c))
        .collect();
    ClientPartition::new(cells, Provenance::Dirichlet { alpha, seed })
}

/// Splits each natural client's samples into `cells` Dirichlet cells; every
/// `(client, cell)` pair becomes a client named `{client}/{cell}`.
pub fn partition_dirichlet_within(
    dataset: &Dataset,
    indices: &[usize],
    alpha: f64,
    cells: usize,
    seed: u64,
) -> Result<ClientPartition> {
    let natural = super::partition_natural(dataset, indices)?;
    let mut out = BTreeMap::new();
    for (k, (client, members)) in natural.iter().enumerate() {
        let by_class = bucket_by_label(dataset, members)?;
        let split = split_with_retries(&by_class, alpha, cells, seed, k as u64 + 1)?;
        for (j, c) in split.into_iter().enumerate() {
            out.insert(format!("{client}/{j}"), c);
        }
    }
    ClientPartition::new(out, Provenance::NestedDirichlet { alpha, cells, seed })
}
