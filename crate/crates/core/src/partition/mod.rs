//! Non-IID client partitions: natural client ids or Dirichlet label skew.

mod dirichlet;
mod report;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

pub use dirichlet::{partition_dirichlet, partition_dirichlet_within, MAX_REDRAWS, MIN_CLIENT_SAMPLES};
pub use report::{heterogeneity_report, label_entropy, total_variation, ClientStats, HeterogeneityReport};

use crate::datastore::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Provenance {
    Natural,
    Dirichlet { alpha: f64, seed: u64 },
    /// Each natural client split into Dirichlet cells.
    NestedDirichlet { alpha: f64, cells: usize, seed: u64 },
    Imported,
}

/// Client id to sample indices. Cells are disjoint; ids iterate in sorted order.
#[derive(Debug, Clone, PartialEq)]
pub struct ClientPartition {
    cells: BTreeMap<String, Vec<usize>>,
    provenance: Provenance,
}

impl ClientPartition {
    pub fn new(cells: BTreeMap<String, Vec<usize>>, provenance: Provenance) -> Result<Self> {
        let mut seen = std::collections::HashSet::new();
        for (id, idx) in &cells {
            for &i in idx {
                if !seen.insert(i) {
                    return Err(Error::Schema(format!("sample {i} assigned twice (client `{id}`)")));
                }
            }
        }
        Ok(ClientPartition { cells, provenance })
    }

    pub fn provenance(&self) -> &Provenance {
        &self.provenance
    }

    pub fn clients(&self) -> impl Iterator<Item = &str> {
        self.cells.keys().map(String::as_str)
    }

    pub fn num_clients(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, client: &str) -> Option<&[usize]> {
        self.cells.get(client).map(Vec::as_slice)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &[usize])> {
        self.cells.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn sizes(&self) -> Vec<usize> {
        self.cells.values().map(Vec::len).collect()
    }

    /// Writes `{"provenance": ..., "clients": {id: [sample ids]}}`.
    pub fn save(&self, dataset: &Dataset, path: &Path) -> Result<()> {
        let file = PartitionFile {
            provenance: self.provenance.clone(),
            clients: self
                .cells
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(|&i| dataset.sample(i).id.clone()).collect()))
                .collect(),
        };
        let text = serde_json::to_string_pretty(&file).expect("partition serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(dataset: &Dataset, path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: PartitionFile = serde_json::from_str(&text).map_err(|e| Error::Parse {
            line: e.line(),
            msg: e.to_string(),
        })?;
        let index: HashMap<&str, usize> = dataset
            .samples()
            .iter()
            .enumerate()
            .map(|(i, s)| (s.id.as_str(), i))
            .collect();
        let mut cells = BTreeMap::new();
        for (client, ids) in file.clients {
            let idx = ids
                .iter()
                .map(|id| {
                    index
                        .get(id.as_str())
                        .copied()
                        .ok_or_else(|| Error::Schema(format!("partition names unknown sample `{id}`")))
                })
                .collect::<Result<Vec<_>>>()?;
            cells.insert(client, idx);
        }
        ClientPartition::new(cells, file.provenance)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PartitionFile {
    provenance: Provenance,
    clients: BTreeMap<String, Vec<String>>,
}

/// Groups the given samples by their own client id.
pub fn partition_natural(dataset: &Dataset, indices: &[usize]) -> Result<ClientPartition> {
    let mut cells: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for &i in indices {
        let s = dataset.sample(i);
        let client = s.client_id.as_ref().ok_or_else(|| Error::MissingClientId(s.id.clone()))?;
        cells.entry(client.clone()).or_default().push(i);
    }
    for v in cells.values_mut() {
        v.sort_unstable();
    }
    ClientPartition::new(cells, Provenance::Natural)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datastore::{DatasetManifest, Protocol, Sample};
    use crate::evaluation::MetricName;
    use crate::numerics::Tensor;
    use indexmap::IndexMap;

    pub(crate) fn label_only(labels: &[(usize, Option<&str>)]) -> Dataset {
        let manifest = DatasetManifest {
            name: "t".into(),
            modalities: vec![crate::datastore::ModalitySpec {
                name: "x".into(),
                dim: 1,
                max_len: 1,
                encoder: crate::datastore::EncoderKind::RnnOnly,
            }],
            num_classes: labels.iter().map(|l| l.0).max().unwrap_or(1).max(1) + 1,
            protocol: Protocol::Kfold(2),
            metric: MetricName::Acc,
        };
        let samples = labels
            .iter()
            .enumerate()
            .map(|(i, (y, c))| Sample {
                id: format!("s{i}"),
                client_id: c.map(str::to_string),
                label: Some(*y),
                split: None,
                modalities: IndexMap::from([("x".to_string(), Tensor::zeros(&[1, 1]))]),
                available: IndexMap::from([("x".to_string(), true)]),
            })
            .collect();
        Dataset::new(manifest, samples).unwrap()
    }

    #[test]
    fn natural_groups_by_client() {
        let mut rows = Vec::new();
        for (c, n) in [("a", 5), ("b", 7), ("c", 9)] {
            rows.extend((0..n).map(|i| (i % 2, Some(c))));
        }
        let ds = label_only(&rows);
        let all: Vec<usize> = (0..ds.len()).collect();
        let p = partition_natural(&ds, &all).unwrap();
        assert_eq!(p.sizes(), vec![5, 7, 9]);

        let reversed: Vec<usize> = all.iter().rev().copied().collect();
        assert_eq!(partition_natural(&ds, &reversed).unwrap(), p);
    }

    #[test]
    fn natural_single_client() {
        let ds = label_only(&[(0, Some("only")), (1, Some("only")), (0, Some("only"))]);
        let p = partition_natural(&ds, &[0, 1, 2]).unwrap();
        assert_eq!(p.num_clients(), 1);
        assert_eq!(p.cell("only").unwrap(), &[0, 1, 2]);
    }

    #[test]
    fn natural_requires_client_ids() {
        let ds = label_only(&[(0, Some("a")), (1, None)]);
        assert!(matches!(partition_natural(&ds, &[0, 1]), Err(Error::MissingClientId(id)) if id == "s1"));
    }

    #[test]
    fn export_import_round_trip() {
        let ds = label_only(&[(0, Some("a")), (1, Some("b")), (0, Some("a"))]);
        let p = partition_natural(&ds, &[0, 1, 2]).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("partition.json");
        p.save(&ds, &path).unwrap();
        assert_eq!(ClientPartition::load(&ds, &path).unwrap(), p);
    }
}
