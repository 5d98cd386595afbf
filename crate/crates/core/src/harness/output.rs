//! Result tables: CSV rows plus a JSON sidecar with the resolved config.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use super::config::{ExperimentConfig, SweepKind};
use crate::error::Result;

/// One CSV row. Columns follow the declared field order; `status` is
/// appended after the normative columns.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub scheme: String,
    pub basis: String,
    pub geometry: String,
    pub d_over_lambda: f64,
    pub n_t: usize,
    pub n_r: usize,
    pub n_users: usize,
    pub eta: f64,
    pub m: usize,
    /// Sparsity parameter: `K` for OMP, `K_p` for modified OMP.
    pub k_p: Option<usize>,
    pub bits: Option<u32>,
    pub snr_db: Option<f64>,
    pub metric_name: String,
    pub mean: Option<f64>,
    pub stderr: Option<f64>,
    pub trials: usize,
    /// `ok`, `underdetermined` (`K_p > M`, minimum-norm solve) or
    /// `invalid: <reason>`.
    pub status: String,
    /// Per-trial values in trial order.
    #[serde(skip)]
    pub samples: Vec<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ResultTable {
    pub sweep: SweepKind,
    /// CSI dimension `N`.
    pub n: usize,
    pub m_grid: Vec<usize>,
    pub warnings: Vec<String>,
    pub config: ExperimentConfig,
    #[serde(skip)]
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        for row in &self.rows {
            out.serialize(row)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("CSV output is UTF-8"))
    }

    pub fn sidecar_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Writes the CSV to `path` and the sidecar next to it; returns the
    /// sidecar path.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<PathBuf> {
        let path = path.as_ref();
        let mut w = BufWriter::new(File::create(path)?);
        self.write_csv(&mut w)?;
        w.flush()?;
        let sidecar = sidecar_path(path);
        std::fs::write(&sidecar, self.sidecar_json()? + "\n")?;
        Ok(sidecar)
    }

    /// Rows matching a scheme label, basis label and metric.
    pub fn select(&self, scheme: &str, basis: &str, metric: &str) -> impl Iterator<Item = &ResultRow> + '_ {
        let (scheme, basis, metric) = (scheme.to_owned(), basis.to_owned(), metric.to_owned());
        self.rows
            .iter()
            .filter(move |r| r.scheme == scheme && r.basis == basis && r.metric_name == metric)
    }
}

/// `results.csv` → `results.config.json`.
pub fn sidecar_path(csv: &Path) -> PathBuf {
    csv.with_extension("config.json")
}
