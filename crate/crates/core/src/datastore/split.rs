use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use super::{Dataset, Split};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Train and test sample indices of one evaluation run.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Train/test indices from the per-sample split tags. Validation samples are
/// held out of both.
pub fn split_predefined(dataset: &Dataset) -> Result<Fold> {
    let mut fold = Fold { train: Vec::new(), test: Vec::new() };
    for (i, s) in dataset.samples().iter().enumerate() {
        match s.split {
            Some(Split::Train) => fold.train.push(i),
            Some(Split::Test) => fold.test.push(i),
            Some(Split::Val) => {}
            None => return Err(Error::Schema(format!("sample `{}` has no split tag", s.id))),
        }
    }
    Ok(fold)
}

/// K-fold split. When every sample has a client id the folds are built over
/// clients, so a client's samples never straddle train and test; otherwise
/// over individual samples. Units are shuffled with `seed` and dealt
/// round-robin, so fold sizes differ by at most one unit.
pub fn split_kfold(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::Config(format!("k-fold needs k >= 2, got {k}")));
    }
    let by_client = !dataset.is_empty() && dataset.samples().iter().all(|s| s.client_id.is_some());
    let mut units: Vec<Vec<usize>> = if by_client {
        let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
        for (i, s) in dataset.samples().iter().enumerate() {
            groups.entry(s.client_id.as_deref().unwrap()).or_default().push(i);
        }
        groups.into_values().collect()
    } else {
        (0..dataset.len()).map(|i| vec![i]).collect()
    };
    if units.len() < k {
        return Err(Error::InfeasibleFold { k, clients: units.len() });
    }
    units.shuffle(&mut rng::stream(seed, Stream::Fold, &[k as u64]));
    let mut assignment = vec![0usize; dataset.len()];
    for (u, members) in units.iter().enumerate() {
        for &i in members {
            assignment[i] = u % k;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (test, train): (Vec<usize>, Vec<usize>) = (0..dataset.len()).partition(|&i| assignment[i] == f);
            Fold { train, test }
        })
        .collect())
}
