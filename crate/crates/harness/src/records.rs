//! Experiment records and CSV exports.

use std::fmt;
use std::path::Path;

use tensorized::nn::Tensor;
use tensorized::{Error, Result};

pub const RECORD_HEADER: [&str; 7] = [
    "run_id", "model", "dataset", "metric", "value", "epoch", "wall_ms",
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Metric {
    Ari,
    MseDenoise,
    ParamCount,
    EpochLoss,
    EpochWallMs,
}

impl Metric {
    pub fn name(self) -> &'static str {
        match self {
            Metric::Ari => "ari",
            Metric::MseDenoise => "mse_denoise",
            Metric::ParamCount => "param_count",
            Metric::EpochLoss => "epoch_loss",
            Metric::EpochWallMs => "epoch_wall_ms",
        }
    }
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One metric value of one run. `epoch` is -1 for end-of-run values.
#[derive(Debug, Clone, PartialEq)]
pub struct Record {
    pub run_id: String,
    pub model: String,
    pub dataset: String,
    pub metric: Metric,
    pub value: f64,
    pub epoch: i64,
    pub wall_ms: f64,
}

impl Record {
    pub fn new(
        run_id: &str,
        model: &str,
        dataset: &str,
        metric: Metric,
        value: f64,
        epoch: i64,
    ) -> Self {
        Record {
            run_id: run_id.to_string(),
            model: model.to_string(),
            dataset: dataset.to_string(),
            metric,
            value,
            epoch,
            wall_ms: 0.0,
        }
    }
}

fn io_error(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    }
}

/// Writes a headered CSV table.
pub fn write_table<S: AsRef<str>>(path: &Path, header: &[S], rows: &[Vec<String>]) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|source| Error::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    let mut w = csv::Writer::from_path(path).map_err(|e| io_error(path, e))?;
    w.write_record(header.iter().map(AsRef::as_ref))
        .map_err(|e| io_error(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| io_error(path, e))?;
    }
    w.flush().map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn write_records(path: &Path, records: &[Record]) -> Result<()> {
    let rows: Vec<Vec<String>> = records
        .iter()
        .map(|r| {
            vec![
                r.run_id.clone(),
                r.model.clone(),
                r.dataset.clone(),
                r.metric.to_string(),
                r.value.to_string(),
                r.epoch.to_string(),
                r.wall_ms.to_string(),
            ]
        })
        .collect();
    write_table(path, &RECORD_HEADER, &rows)
}

fn numbered(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}{i}")).collect()
}

fn label_field(labels: Option<&[usize]>, i: usize) -> String {
    labels.map_or_else(|| "-1".to_string(), |l| l[i].to_string())
}

/// `id,label,e1..eh`, one row per selected point.
pub fn write_embeddings(
    path: &Path,
    ids: &[usize],
    labels: Option<&[usize]>,
    embed: &Tensor,
) -> Result<()> {
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend(numbered("e", embed.cols()));
    let rows = ids
        .iter()
        .enumerate()
        .map(|(r, &id)| {
            let mut row = vec![id.to_string(), label_field(labels, id)];
            row.extend(embed.row(r).iter().map(f64::to_string));
            row
        })
        .collect::<Vec<_>>();
    write_table(path, &header, &rows)
}

/// `z1,z2,p1..pd`: decoded samples at latent grid points.
pub fn write_latent_samples(path: &Path, grid: &[Vec<f64>], samples: &[Vec<f64>]) -> Result<()> {
    let d = samples.first().map_or(0, Vec::len);
    let mut header = vec!["z1".to_string(), "z2".to_string()];
    header.extend(numbered("p", d));
    let rows = grid
        .iter()
        .zip(samples)
        .map(|(z, s)| {
            let mut row = vec![
                z[0].to_string(),
                z.get(1).copied().unwrap_or(0.0).to_string(),
            ];
            row.extend(s.iter().map(f64::to_string));
            row
        })
        .collect::<Vec<_>>();
    write_table(path, &header, &rows)
}

/// `id,label,p1..pd`: reconstructions (or inputs) of selected points.
pub fn write_reconstructions(
    path: &Path,
    ids: &[usize],
    labels: Option<&[usize]>,
    recon: &[Vec<f64>],
) -> Result<()> {
    let d = recon.first().map_or(0, Vec::len);
    let mut header = vec!["id".to_string(), "label".to_string()];
    header.extend(numbered("p", d));
    let rows = ids
        .iter()
        .zip(recon)
        .map(|(&id, r)| {
            let mut row = vec![id.to_string(), label_field(labels, id)];
            row.extend(r.iter().map(f64::to_string));
            row
        })
        .collect::<Vec<_>>();
    write_table(path, &header, &rows)
}
