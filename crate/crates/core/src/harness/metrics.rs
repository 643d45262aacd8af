use std::fs::File;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::trainer::UpdateStats;

pub const METRICS_COLUMNS: [&str; 10] = [
    "update",
    "env_steps",
    "mean_return_100ep",
    "policy_loss",
    "value_loss",
    "entropy",
    "aux_loss",
    "aux_accuracy",
    "grad_norm",
    "wall_ms",
];

/// One row of `metrics.csv`. Optional fields are written as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub update: u64,
    pub env_steps: u64,
    pub mean_return_100ep: Option<f64>,
    pub policy_loss: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub aux_loss: Option<f64>,
    pub aux_accuracy: Option<f64>,
    pub grad_norm: f64,
    pub wall_ms: u64,
}

impl MetricsRecord {
    pub fn from_stats(stats: &UpdateStats, wall_ms: u64) -> Self {
        Self {
            update: stats.update,
            env_steps: stats.env_steps,
            mean_return_100ep: stats.mean_return_100ep,
            policy_loss: stats.loss.policy_loss,
            value_loss: stats.loss.value_loss,
            entropy: stats.loss.entropy,
            aux_loss: stats.loss.aux_loss,
            aux_accuracy: stats.loss.aux_accuracy,
            grad_norm: stats.grad_norm,
            wall_ms,
        }
    }
}

pub struct MetricsWriter {
    inner: csv::Writer<File>,
}

impl MetricsWriter {
    pub fn create(path: &Path) -> Result<Self> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        Ok(Self {
            inner: csv::WriterBuilder::new().has_headers(true).from_writer(file),
        })
    }

    pub fn write(&mut self, record: &MetricsRecord) -> Result<()> {
        self.inner.serialize(record)?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.inner
            .flush()
            .map_err(|e| Error::Csv(csv::Error::from(e)))
    }
}

/// Reads `metrics.csv`, rejecting files whose header differs from
/// [`METRICS_COLUMNS`].
pub fn read_metrics(path: &Path) -> Result<Vec<MetricsRecord>> {
    let mut reader = csv::Reader::from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header != METRICS_COLUMNS {
        return Err(Error::Config(format!(
            "{}: unexpected metrics header {header:?}",
            path.display()
        )));
    }
    reader
        .deserialize()
        .map(|r| r.map_err(Error::from))
        .collect()
}
