use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use fedmm::datastore::{generate_synthetic, save_dataset, SyntheticSpec};
use fedmm::evaluation::{MetricName, RunSummary};
use fedmm::federation::{run_experiment, Executor, RunResult};
use fedmm::model::save_checkpoint;
use fedmm::{Error, Result};
use serde::{Deserialize, Serialize};

use crate::config::{io_err, read_toml, Overrides, RunFile};

pub const ROUND_LOG: &str = "rounds.jsonl";
pub const SUMMARY_FILE: &str = "summary.json";
pub const CHECKPOINT_FILE: &str = "model.ckpt";
pub const RESOLVED_CONFIG: &str = "config.resolved.json";

pub fn synth(spec_path: &Path, out: &Path, binary: bool) -> Result<()> {
    let spec: SyntheticSpec = read_toml(spec_path)?;
    spec.validate()?;
    let ds = generate_synthetic(&spec)?;
    save_dataset(&ds, out, binary)?;
    println!("wrote {} samples to {}", ds.len(), out.display());
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    pub fold: Option<usize>,
    pub final_metrics: BTreeMap<MetricName, f64>,
}

/// Contents of `summary.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryFile {
    pub dataset: String,
    pub strategy: String,
    pub fusion: String,
    pub unimodal: Option<String>,
    /// The dataset's headline metric.
    pub metric: MetricName,
    pub rounds: u64,
    pub runs: Vec<RunRecord>,
    pub summary: BTreeMap<MetricName, RunSummary>,
}

impl SummaryFile {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(SUMMARY_FILE);
        let text = fs::read_to_string(&path).map_err(|e| io_err(&path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
    }

    pub fn headline(&self) -> Option<&RunSummary> {
        self.summary.get(&self.metric)
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("serializable");
    fs::write(path, text + "\n").map_err(|e| io_err(path, e))
}

/// Loads, overrides and validates a run configuration.
pub fn resolve(config: &Path, overrides: &Overrides) -> Result<RunFile> {
    let mut cfg = RunFile::load(config)?;
    overrides.apply(&mut cfg)?;
    cfg.validate()?;
    cfg.output_dir()?;
    Ok(cfg)
}

/// Runs one experiment into `cfg.out`. The round log is flushed after every
/// round so a failing run leaves its history behind.
pub fn execute(cfg: &RunFile, exec: &Executor) -> Result<SummaryFile> {
    let out = cfg.output_dir()?;
    let dataset = cfg.load_dataset()?;
    fs::create_dir_all(&out).map_err(|e| io_err(&out, e))?;
    write_json(&out.join(RESOLVED_CONFIG), cfg)?;
    let log_path = out.join(ROUND_LOG);
    let mut log = BufWriter::new(File::create(&log_path).map_err(|e| io_err(&log_path, e))?);
    let experiment = cfg.experiment();
    let result = run_experiment::<f64>(&experiment, &dataset, exec, |r| {
        let line = serde_json::to_string(r).expect("serializable");
        writeln!(log, "{line}")
            .and_then(|_| log.flush())
            .map_err(|e| io_err(&log_path, e))
    })?;
    save_checkpoint(&result.final_params, &out.join(CHECKPOINT_FILE))?;
    let summary = SummaryFile {
        dataset: dataset.manifest().name.clone(),
        strategy: experiment.strategy.name.to_string(),
        fusion: match result.arch.config.fusion {
            fedmm::model::FusionScheme::Concat => "concat".into(),
            fedmm::model::FusionScheme::Attention => "attention".into(),
        },
        unimodal: experiment.unimodal.clone(),
        metric: dataset.manifest().metric,
        rounds: experiment.rounds,
        runs: result.runs.iter().map(record).collect(),
        summary: result.summary,
    };
    write_json(&out.join(SUMMARY_FILE), &summary)?;
    Ok(summary)
}

fn record(r: &RunResult) -> RunRecord {
    RunRecord {
        run: r.run,
        seed: r.seed,
        fold: r.fold,
        final_metrics: r.final_metrics.clone(),
    }
}

pub fn run(config: &Path, overrides: &Overrides, exec: &Executor) -> Result<()> {
    let cfg = resolve(config, overrides)?;
    let s = execute(&cfg, exec)?;
    for (m, v) in &s.summary {
        println!("{m}: {:.4} ± {:.4} ({} runs)", v.mean, v.std, v.runs);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Axis {
    /// Missing-modality rate.
    Q,
    /// Missing-label rate.
    L,
    /// Erroneous-label ratio.
    E,
}

impl Axis {
    fn name(self) -> &'static str {
        match self {
            Axis::Q => "q",
            Axis::L => "l",
            Axis::E => "e",
        }
    }

    fn set(self, cfg: &mut RunFile, v: f64) {
        match self {
            Axis::Q => cfg.corruption.missing_modality = v,
            Axis::L => cfg.corruption.missing_label = v,
            Axis::E => cfg.corruption.label_error = v,
        }
    }
}

/// One row of the sweep table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: f64,
    pub metric: String,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    /// Percent change of `mean` relative to the value-0 cell.
    pub relative_change: Option<f64>,
    pub status: String,
}

pub fn sweep(config: &Path, overrides: &Overrides, axis: Axis, values: &[f64], exec: &Executor) -> Result<bool> {
    let base = resolve(config, overrides)?;
    let root = base.output_dir()?;
    let mut grid: Vec<f64> = values.to_vec();
    if !grid.contains(&0.0) {
        grid.insert(0, 0.0);
    }
    for &v in &grid {
        let mut cell = base.clone();
        axis.set(&mut cell, v);
        cell.validate()?;
    }
    let mut cells = Vec::new();
    for &v in &grid {
        let mut cell = base.clone();
        axis.set(&mut cell, v);
        cell.out = Some(root.join(format!("{}-{v}", axis.name())));
        let outcome = execute(&cell, exec);
        if let Err(e) = &outcome {
            eprintln!("cell {}={v} failed: {e}", axis.name());
        }
        cells.push((v, outcome));
    }
    let baseline = cells
        .iter()
        .find(|(v, _)| *v == 0.0)
        .and_then(|(_, o)| o.as_ref().ok())
        .and_then(|s| s.headline().map(|h| h.mean));
    let rows: Vec<SweepRow> = cells
        .iter()
        .map(|(v, outcome)| match outcome {
            Ok(s) => {
                let h = s.headline();
                let mean = h.map(|h| h.mean);
                SweepRow {
                    axis: axis.name().into(),
                    value: *v,
                    metric: s.metric.to_string(),
                    mean,
                    std: h.map(|h| h.std),
                    relative_change: match (mean, baseline) {
                        (Some(_), _) if *v == 0.0 => Some(0.0),
                        (Some(m), Some(b)) if b != 0.0 => Some(100.0 * (m - b) / b),
                        _ => None,
                    },
                    status: "ok".into(),
                }
            }
            Err(e) => SweepRow {
                axis: axis.name().into(),
                value: *v,
                metric: String::new(),
                mean: None,
                std: None,
                relative_change: None,
                status: format!("failed: {e}"),
            },
        })
        .collect();
    let csv_path = root.join("sweep.csv");
    let mut w = csv::Writer::from_path(&csv_path).map_err(|e| csv_err(&csv_path, e))?;
    for r in &rows {
        w.serialize(r).map_err(|e| csv_err(&csv_path, e))?;
    }
    w.flush().map_err(|e| io_err(&csv_path, e))?;
    let table = render_table(
        &["axis", "value", "metric", "mean", "std", "rel. change %", "status"],
        &rows
            .iter()
            .map(|r| {
                vec![
                    r.axis.clone(),
                    format!("{}", r.value),
                    r.metric.clone(),
                    fmt_opt(r.mean),
                    fmt_opt(r.std),
                    r.relative_change.map_or("-".into(), |c| format!("{c:+.2}")),
                    r.status.clone(),
                ]
            })
            .collect::<Vec<_>>(),
    );
    fs::write(root.join("sweep.txt"), &table).map_err(|e| io_err(&root.join("sweep.txt"), e))?;
    print!("{table}");
    Ok(rows.iter().any(|r| r.status == "ok"))
}

fn csv_err(path: &Path, e: csv::Error) -> Error {
    io_err(path, std::io::Error::other(e))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or("-".into(), |x| format!("{x:.4}"))
}

/// Left-aligned plain-text table.
pub fn render_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = header.iter().map(|h| h.len()).collect();
    for r in rows {
        for (w, c) in widths.iter_mut().zip(r) {
            *w = (*w).max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        parts.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    out += &line(widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().iter().map(|s| s.as_str()).collect());
    for r in rows {
        out += &line(r.iter().map(|s| s.as_str()).collect());
    }
    out
}

pub fn report(dirs: &[PathBuf], csv_out: Option<&Path>) -> Result<()> {
    let header = ["dataset", "strategy", "fusion", "modalities", "metric", "mean", "std", "runs", "source"];
    let mut rows = Vec::new();
    for dir in dirs {
        let row = match SummaryFile::load(dir) {
            Ok(s) => {
                let h = s.headline();
                vec![
                    s.dataset.clone(),
                    s.strategy.clone(),
                    s.fusion.clone(),
                    s.unimodal.clone().unwrap_or_else(|| "all".into()),
                    s.metric.to_string(),
                    fmt_opt(h.map(|h| h.mean)),
                    fmt_opt(h.map(|h| h.std)),
                    h.map_or("0".into(), |h| h.runs.to_string()),
                    dir.display().to_string(),
                ]
            }
            Err(_) => {
                let mut r = vec!["absent".to_string(); 1];
                r.extend(std::iter::repeat_n("-".to_string(), header.len() - 2));
                r.push(dir.display().to_string());
                r
            }
        };
        rows.push(row);
    }
    rows.sort_by(|a, b| a[..4].cmp(&b[..4]));
    let text_rows: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut t = r[..5].to_vec();
            t.push(if r[5] == "-" { "-".into() } else { format!("{} ± {}", r[5], r[6]) });
            t.extend_from_slice(&r[7..]);
            t
        })
        .collect();
    let text_header = ["dataset", "strategy", "fusion", "modalities", "metric", "mean ± std", "runs", "source"];
    print!("{}", render_table(&text_header, &text_rows));
    if let Some(path) = csv_out {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
        w.write_record(header).map_err(|e| csv_err(path, e))?;
        for r in &rows {
            w.write_record(r).map_err(|e| csv_err(path, e))?;
        }
        w.flush().map_err(|e| io_err(path, e))?;
    }
    Ok(())
}
