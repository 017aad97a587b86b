use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, ExperimentKind};
use crate::error::{io_err, Result};

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

/// One CSV row. Columns that do not apply to a quantity are left empty.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Row {
    pub quantity: String,
    pub eps: Option<f64>,
    pub tau: Option<f64>,
    pub t: Option<f64>,
    pub k: Option<usize>,
    pub replicas: Option<usize>,
    pub value: f64,
    pub error: Option<f64>,
    pub reference: Option<f64>,
    pub reference_error: Option<f64>,
}

impl Row {
    pub fn new(quantity: &str, value: f64) -> Self {
        Self { quantity: quantity.into(), value, ..Self::default() }
    }
    pub fn eps(mut self, eps: f64) -> Self {
        self.eps = Some(eps);
        self
    }
    pub fn tau(mut self, tau: f64) -> Self {
        self.tau = Some(tau);
        self
    }
    pub fn t(mut self, t: f64) -> Self {
        self.t = Some(t);
        self
    }
    pub fn k(mut self, k: usize) -> Self {
        self.k = Some(k);
        self
    }
    pub fn replicas(mut self, n: usize) -> Self {
        self.replicas = Some(n);
        self
    }
    pub fn error(mut self, e: f64) -> Self {
        self.error = Some(e);
        self
    }
    pub fn reference(mut self, value: f64, error: Option<f64>) -> Self {
        self.reference = Some(value);
        self.reference_error = error;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: ExperimentKind,
    pub config_digest: String,
    pub code_version: String,
    pub seed: u64,
    pub wall_time_s: f64,
    pub rows: Vec<Row>,
    pub checks: Vec<Check>,
}

impl ResultRecord {
    pub fn all_passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    /// The CSV body; depends only on the rows.
    pub fn csv_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in &self.rows {
            w.serialize(r)?;
        }
        w.into_inner().map_err(|e| csv::Error::from(e.into_error())).map_err(Into::into)
    }

    /// Writes `<name>.csv` and the `<name>.json` sidecar into `dir`; returns both paths.
    pub fn write(&self, config: &ExperimentConfig, dir: &Path) -> Result<(PathBuf, PathBuf)> {
        std::fs::create_dir_all(dir).map_err(io_err(dir))?;
        let name = self.experiment.name();
        let csv_path = dir.join(format!("{name}.csv"));
        std::fs::write(&csv_path, self.csv_bytes()?).map_err(io_err(&csv_path))?;
        let json_path = dir.join(format!("{name}.json"));
        let sidecar = serde_json::json!({ "record": self, "config": config });
        std::fs::write(&json_path, serde_json::to_vec_pretty(&sidecar)?).map_err(io_err(&json_path))?;
        Ok((csv_path, json_path))
    }
}
