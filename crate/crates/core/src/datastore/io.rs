use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::sidecar::read_block;
use super::{validate_sample, Dataset, DatasetManifest, Sample, Split};
use crate::error::{Error, Result};
use crate::numerics::Tensor;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const SIDECAR_FILE: &str = "samples.bin";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Record {
    id: String,
    client_id: Option<String>,
    label: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    split: Option<Split>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    modalities: Option<IndexMap<String, Vec<Vec<f64>>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    available: Option<IndexMap<String, bool>>,
}

/// Rounds to 10 significant decimal digits.
fn round10(v: f64) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    format!("{v:.9e}").parse().unwrap()
}

fn to_rows(t: &Tensor<f64>) -> Vec<Vec<f64>> {
    (0..t.rows()).map(|r| t.row(r).iter().map(|&v| round10(v)).collect()).collect()
}

/// Writes `manifest.json` and `samples.jsonl` into `dir`. With `binary`, the
/// modality arrays go to a `samples.bin` sidecar instead of the line records.
pub fn save_dataset(dataset: &Dataset, dir: &Path, binary: bool) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(dataset.manifest()).expect("manifest serializes");
    fs::write(&manifest_path, text + "\n").map_err(|e| Error::io(&manifest_path, e))?;

    let samples_path = dir.join(SAMPLES_FILE);
    let file = File::create(&samples_path).map_err(|e| Error::io(&samples_path, e))?;
    let mut w = BufWriter::new(file);
    for s in dataset.samples() {
        let rec = Record {
            id: s.id.clone(),
            client_id: s.client_id.clone(),
            label: s.label,
            split: s.split,
            modalities: (!binary)
                .then(|| s.modalities.iter().map(|(k, t)| (k.clone(), to_rows(t))).collect()),
            available: Some(s.available.clone()),
        };
        let line = serde_json::to_string(&rec).expect("record serializes");
        writeln!(w, "{line}").map_err(|e| Error::io(&samples_path, e))?;
    }
    w.flush().map_err(|e| Error::io(&samples_path, e))?;
    if binary {
        super::write_sidecar(dataset, &dir.join(SIDECAR_FILE))?;
    }
    Ok(())
}

fn rows_to_tensor(
    manifest: &DatasetManifest,
    modality: &str,
    rows: Vec<Vec<f64>>,
    line: usize,
) -> Result<Tensor<f64>> {
    let spec = manifest
        .modality(modality)
        .ok_or_else(|| Error::Schema(format!("line {line}: unknown modality `{modality}`")))?;
    let mut data = Vec::with_capacity(rows.len() * spec.dim);
    let n = rows.len();
    for r in rows {
        if r.len() != spec.dim {
            return Err(Error::Schema(format!(
                "line {line}: modality `{modality}` has a row of width {}, manifest dim is {}",
                r.len(),
                spec.dim
            )));
        }
        data.extend(r);
    }
    Tensor::matrix(n, spec.dim, data)
}

/// Reads a dataset directory written by [`save_dataset`].
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let manifest_path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse {
        line: e.line(),
        msg: format!("{}: {e}", manifest_path.display()),
    })?;
    manifest.validate()?;

    let samples_path = dir.join(SAMPLES_FILE);
    let file = File::open(&samples_path).map_err(|e| Error::io(&samples_path, e))?;
    let mut sidecar: Option<BufReader<File>> = None;
    let mut samples = Vec::new();
    for (i, line) in BufReader::new(file).lines().enumerate() {
        let lineno = i + 1;
        let line = line.map_err(|e| Error::io(&samples_path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: Record = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: lineno,
            msg: e.to_string(),
        })?;
        let mut modalities = IndexMap::new();
        match rec.modalities {
            Some(mut m) => {
                for spec in &manifest.modalities {
                    let rows = m.shift_remove(&spec.name).ok_or_else(|| {
                        Error::Schema(format!("line {lineno}: missing modality `{}`", spec.name))
                    })?;
                    modalities.insert(spec.name.clone(), rows_to_tensor(&manifest, &spec.name, rows, lineno)?);
                }
                if let Some(extra) = m.keys().next() {
                    return Err(Error::Schema(format!("line {lineno}: unknown modality `{extra}`")));
                }
            }
            None => {
                if sidecar.is_none() {
                    let p = dir.join(SIDECAR_FILE);
                    sidecar = Some(BufReader::new(File::open(&p).map_err(|e| Error::io(&p, e))?));
                }
                let r = sidecar.as_mut().unwrap();
                for spec in &manifest.modalities {
                    modalities.insert(spec.name.clone(), read_block(r)?);
                }
            }
        }
        let available = match rec.available {
            Some(a) => a,
            None => modalities.iter().map(|(k, t)| (k.clone(), t.rows() > 0)).collect(),
        };
        let sample = Sample {
            id: rec.id,
            client_id: rec.client_id,
            label: rec.label,
            split: rec.split,
            modalities,
            available,
        };
        validate_sample(&manifest, &sample).map_err(|e| match e {
            Error::Schema(m) => Error::Schema(format!("line {lineno}: {m}")),
            other => other,
        })?;
        samples.push(sample);
    }
    Dataset::new(manifest, samples)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ten_significant_digits() {
        assert_eq!(round10(0.123456789012345), 0.1234567890);
        assert_eq!(round10(-98765.4321098765), -98765.43211);
        assert_eq!(round10(0.0), 0.0);
    }
}
