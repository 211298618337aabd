//! Seeded emulators for missing modalities, missing labels and erroneous
//! labels. Each emulator returns a new overlay on top of an untouched
//! [`Dataset`]; only training samples are ever corrupted.

mod transition;

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub use transition::{build_transition_matrix, error_targets, TransitionMatrix};

use crate::datastore::Dataset;
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Sparsity of the label-error matrix used by the benchmark protocol.
pub const DEFAULT_SPARSITY: f64 = 0.4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorruptionConfig {
    /// Per-(sample, modality) missing rate `q`.
    #[serde(default)]
    pub missing_modality: f64,
    /// Per-sample missing-label rate `l`.
    #[serde(default)]
    pub missing_label: f64,
    /// Erroneous-label ratio `e` (off-diagonal mass of each transition row).
    #[serde(default)]
    pub label_error: f64,
    #[serde(default = "default_sparsity")]
    pub sparsity: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_sparsity() -> f64 {
    DEFAULT_SPARSITY
}

impl Default for CorruptionConfig {
    fn default() -> Self {
        CorruptionConfig {
            missing_modality: 0.0,
            missing_label: 0.0,
            label_error: 0.0,
            sparsity: DEFAULT_SPARSITY,
            seed: 0,
        }
    }
}

impl CorruptionConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("missing_modality", self.missing_modality),
            ("missing_label", self.missing_label),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.label_error) {
            return Err(Error::Config(format!("label_error must lie in [0, 1), got {}", self.label_error)));
        }
        if !(0.0..1.0).contains(&self.sparsity) {
            return Err(Error::Config(format!("sparsity must lie in [0, 1), got {}", self.sparsity)));
        }
        Ok(())
    }

    pub fn is_clean(&self) -> bool {
        self.missing_modality == 0.0 && self.missing_label == 0.0 && self.label_error == 0.0
    }
}

/// Observed availability and labels layered over a dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct CorruptedView {
    dataset: Dataset,
    train: Vec<bool>,
    available: Vec<Vec<bool>>,
    labels: Vec<Option<usize>>,
}

impl CorruptedView {
    /// Clean view; `train` lists the indices the emulators may corrupt.
    pub fn new(dataset: &Dataset, train: &[usize]) -> Self {
        let names: Vec<&str> = dataset.manifest().modality_names().collect();
        let mut is_train = vec![false; dataset.len()];
        for &i in train {
            is_train[i] = true;
        }
        CorruptedView {
            available: dataset
                .samples()
                .iter()
                .map(|s| names.iter().map(|m| s.is_available(m)).collect())
                .collect(),
            labels: dataset.samples().iter().map(|s| s.label).collect(),
            train: is_train,
            dataset: dataset.clone(),
        }
    }

    pub fn dataset(&self) -> &Dataset {
        &self.dataset
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn is_train(&self, i: usize) -> bool {
        self.train[i]
    }

    pub fn label(&self, i: usize) -> Option<usize> {
        self.labels[i]
    }

    /// Availability flags in manifest modality order.
    pub fn available(&self, i: usize) -> &[bool] {
        &self.available[i]
    }

    /// Labelled with at least one available modality.
    pub fn is_trainable(&self, i: usize) -> bool {
        self.labels[i].is_some() && self.available[i].iter().any(|&a| a)
    }

    fn train_indices(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.len()).filter(|&i| self.train[i])
    }

    /// Writes one JSON line per training sample: id, availability, observed label.
    pub fn save_overlay(&self, path: &Path) -> Result<()> {
        let names: Vec<&str> = self.dataset.manifest().modality_names().collect();
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut w = BufWriter::new(file);
        for i in self.train_indices() {
            let rec = OverlayRecord {
                id: self.dataset.sample(i).id.clone(),
                available: names.iter().map(|m| m.to_string()).zip(self.available[i].iter().copied()).collect(),
                label: self.labels[i],
            };
            writeln!(w, "{}", serde_json::to_string(&rec).expect("overlay serializes")).map_err(|e| Error::io(path, e))?;
        }
        w.flush().map_err(|e| Error::io(path, e))
    }

    /// Replays an overlay written by [`save_overlay`](Self::save_overlay).
    pub fn load_overlay(dataset: &Dataset, train: &[usize], path: &Path) -> Result<Self> {
        let mut view = CorruptedView::new(dataset, train);
        let index: HashMap<&str, usize> =
            dataset.samples().iter().enumerate().map(|(i, s)| (s.id.as_str(), i)).collect();
        let names: Vec<String> = dataset.manifest().modality_names().map(str::to_string).collect();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: OverlayRecord =
                serde_json::from_str(&line).map_err(|e| Error::Parse { line: n + 1, msg: e.to_string() })?;
            let i = *index
                .get(rec.id.as_str())
                .ok_or_else(|| Error::Schema(format!("overlay line {}: unknown sample `{}`", n + 1, rec.id)))?;
            if !view.train[i] {
                return Err(Error::Schema(format!("overlay corrupts non-training sample `{}`", rec.id)));
            }
            for (k, m) in names.iter().enumerate() {
                view.available[i][k] = *rec
                    .available
                    .get(m)
                    .ok_or_else(|| Error::Schema(format!("overlay line {}: missing modality `{m}`", n + 1)))?;
            }
            if let Some(y) = rec.label {
                if y >= dataset.num_classes() {
                    return Err(Error::LabelRange { label: y, num_classes: dataset.num_classes() });
                }
            }
            view.labels[i] = rec.label;
        }
        Ok(view)
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlayRecord {
    id: String,
    available: IndexMap<String, bool>,
    label: Option<usize>,
}

/// Marks each (training sample, modality) slot unavailable with probability `q`.
pub fn apply_missing_modalities(view: &CorruptedView, q: f64, seed: u64) -> Result<CorruptedView> {
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Config(format!("missing modality rate must lie in [0, 1], got {q}")));
    }
    let mut out = view.clone();
    let mut rng = rng::stream(seed, Stream::MissingModality, &[]);
    for i in view.train_indices() {
        for a in out.available[i].iter_mut() {
            if rng.random::<f64>() < q {
                *a = false;
            }
        }
    }
    Ok(out)
}

/// Erases each training label with probability `l`.
pub fn apply_missing_labels(view: &CorruptedView, l: f64, seed: u64) -> Result<CorruptedView> {
    if !(0.0..=1.0).contains(&l) {
        return Err(Error::Config(format!("missing label rate must lie in [0, 1], got {l}")));
    }
    let mut out = view.clone();
    let mut rng = rng::stream(seed, Stream::MissingLabel, &[]);
    for i in view.train_indices() {
        if rng.random::<f64>() < l {
            out.labels[i] = None;
        }
    }
    Ok(out)
}

/// Resamples every observed training label `i` from row `i` of `q`.
pub fn apply_erroneous_labels(view: &CorruptedView, q: &TransitionMatrix, seed: u64) -> Result<CorruptedView> {
    let c = view.dataset.num_classes();
    if q.num_classes() != c {
        return Err(Error::Schema(format!(
            "transition matrix is {0}x{0}, dataset has {c} classes",
            q.num_classes()
        )));
    }
    let mut out = view.clone();
    let mut rng = rng::stream(seed, Stream::LabelError, &[]);
    for i in view.train_indices() {
        if let Some(y) = out.labels[i] {
            out.labels[i] = Some(q.sample_row(y, rng.random()));
        }
    }
    Ok(out)
}

/// Applies all three emulators in the order modalities, labels, label errors.
pub fn apply_corruption(view: &CorruptedView, cfg: &CorruptionConfig) -> Result<CorruptedView> {
    cfg.validate()?;
    let mut out = view.clone();
    if cfg.missing_modality > 0.0 {
        out = apply_missing_modalities(&out, cfg.missing_modality, cfg.seed)?;
    }
    if cfg.missing_label > 0.0 {
        out = apply_missing_labels(&out, cfg.missing_label, cfg.seed)?;
    }
    if cfg.label_error > 0.0 {
        let q = build_transition_matrix(view.dataset.num_classes(), cfg.label_error, cfg.sparsity, cfg.seed)?;
        out = apply_erroneous_labels(&out, &q, cfg.seed)?;
    }
    Ok(out)
}
