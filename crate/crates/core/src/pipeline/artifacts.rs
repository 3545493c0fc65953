//! Run-directory layout and (de)serialization of every persisted artifact.
//!
//! ```text
//! <run>/config.json        echo of the experiment config
//! <run>/envs/real.json     the N real training environments
//! <run>/envs/dataset_*.json one file per synthetic dataset
//! <run>/policies/policy_*.json
//! <run>/cost_matrix.csv    N x m rollout costs, headed by digests
//! <run>/posterior.json
//! <run>/report.json
//! <run>/eval.json          written by held-out evaluation
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::bound::{BoundReport, SimplexDistribution};
use crate::envsim::{EnvironmentSpec, SyntheticDataset, ENV_SCHEMA};
use crate::error::{Error, Result};
use crate::es::{PolicyParams, PolicyRecord};

use super::config::{ExperimentConfig, CONFIG_SCHEMA};
use super::CostMatrix;

pub const POSTERIOR_SCHEMA: &str = "pacgen_posterior_v1";
pub const EVAL_SCHEMA: &str = "pacgen_eval_v1";

pub const CONFIG_FILE: &str = "config.json";
pub const REAL_ENVS_FILE: &str = "envs/real.json";
pub const COST_MATRIX_FILE: &str = "cost_matrix.csv";
pub const POSTERIOR_FILE: &str = "posterior.json";
pub const REPORT_FILE: &str = "report.json";
pub const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSet {
    pub schema: String,
    pub environments: Vec<EnvironmentSpec>,
}

/// Posterior weights at full precision so `C . q` can be recomputed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PosteriorRecord {
    pub schema: String,
    pub prior: SimplexDistribution,
    pub posterior: SimplexDistribution,
    pub cost_vector: Vec<f64>,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Held-out estimate of the deployed posterior's true expected cost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub schema: String,
    pub n_eval: usize,
    pub eval_seed: u64,
    #[serde(serialize_with = "crate::digest::serialize_sig")]
    pub estimate: f64,
    #[serde(serialize_with = "crate::digest::serialize_sig")]
    pub standard_error: f64,
    /// False when `n_eval == 1`; the standard error is then reported as 0.
    pub standard_error_defined: bool,
}

/// Config echo written to `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigEcho {
    pub schema: String,
    pub config_digest: String,
    pub config: ExperimentConfig,
}

fn artifact_err(path: &Path, message: impl std::fmt::Display) -> Error {
    Error::Artifact {
        path: path.to_path_buf(),
        message: message.to_string(),
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| artifact_err(path, e))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| artifact_err(path, e))?;
    serde_json::from_str(&text).map_err(|e| artifact_err(path, e))
}

fn check_schema(path: &Path, found: &str, expected: &str) -> Result<()> {
    if found != expected {
        return Err(artifact_err(
            path,
            format!("schema `{found}`, expected `{expected}`"),
        ));
    }
    Ok(())
}

/// A run directory, for reading or writing.
#[derive(Debug, Clone)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    fn dataset_file(index: usize) -> String {
        format!("envs/dataset_{index:04}.json")
    }

    fn policy_file(index: usize) -> String {
        format!("policies/policy_{index:04}.json")
    }

    pub fn write_config(&self, config: &ExperimentConfig) -> Result<()> {
        write_json(
            &self.path(CONFIG_FILE),
            &ConfigEcho {
                schema: CONFIG_SCHEMA.to_string(),
                config_digest: config.digest(),
                config: config.clone(),
            },
        )
    }

    pub fn read_config(&self) -> Result<ExperimentConfig> {
        let path = self.path(CONFIG_FILE);
        let echo: ConfigEcho = read_json(&path)?;
        check_schema(&path, &echo.schema, CONFIG_SCHEMA)?;
        echo.config.validate()?;
        Ok(echo.config)
    }

    pub fn write_environments(
        &self,
        real: &[EnvironmentSpec],
        datasets: &[SyntheticDataset],
    ) -> Result<()> {
        write_json(
            &self.path(REAL_ENVS_FILE),
            &EnvironmentSet {
                schema: ENV_SCHEMA.to_string(),
                environments: real.to_vec(),
            },
        )?;
        for (i, d) in datasets.iter().enumerate() {
            write_json(&self.path(&Self::dataset_file(i)), d)?;
        }
        Ok(())
    }

    pub fn read_real_environments(&self) -> Result<Vec<EnvironmentSpec>> {
        let path = self.path(REAL_ENVS_FILE);
        let set: EnvironmentSet = read_json(&path)?;
        check_schema(&path, &set.schema, ENV_SCHEMA)?;
        Ok(set.environments)
    }

    pub fn read_dataset(&self, index: usize) -> Result<SyntheticDataset> {
        let path = self.path(&Self::dataset_file(index));
        let d: SyntheticDataset = read_json(&path)?;
        check_schema(&path, &d.schema, ENV_SCHEMA)?;
        Ok(d)
    }

    pub fn write_policies(&self, records: &[PolicyRecord]) -> Result<()> {
        for r in records {
            write_json(&self.path(&Self::policy_file(r.index)), r)?;
        }
        Ok(())
    }

    pub fn read_policies(&self, m: usize) -> Result<Vec<PolicyParams>> {
        (0..m)
            .map(|i| {
                let path = self.path(&Self::policy_file(i));
                let r: PolicyRecord = read_json(&path)?;
                check_schema(&path, &r.schema, crate::es::POLICY_SCHEMA)?;
                if r.index != i {
                    return Err(artifact_err(&path, format!("holds policy {}", r.index)));
                }
                Ok(PolicyParams(r.theta))
            })
            .collect()
    }

    pub fn write_cost_matrix(&self, matrix: &CostMatrix) -> Result<()> {
        let path = self.path(COST_MATRIX_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| artifact_err(&path, e))?;
        let mut header = vec!["env".to_string()];
        header.extend(matrix.col_labels.iter().cloned());
        w.write_record(&header)?;
        for (i, label) in matrix.row_labels.iter().enumerate() {
            let mut row = vec![label.clone()];
            row.extend(matrix.row(i).iter().map(|v| v.to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_cost_matrix(&self) -> Result<CostMatrix> {
        let path = self.path(COST_MATRIX_FILE);
        let mut r = csv::Reader::from_path(&path).map_err(|e| artifact_err(&path, e))?;
        let header = r.headers()?.clone();
        let col_labels: Vec<String> = header.iter().skip(1).map(str::to_string).collect();
        let mut row_labels = Vec::new();
        let mut entries = Vec::new();
        for record in r.records() {
            let record = record?;
            if record.len() != col_labels.len() + 1 {
                return Err(artifact_err(&path, "ragged row"));
            }
            row_labels.push(record[0].to_string());
            for cell in record.iter().skip(1) {
                entries.push(
                    cell.parse::<f64>()
                        .map_err(|e| artifact_err(&path, format!("`{cell}`: {e}")))?,
                );
            }
        }
        CostMatrix::from_parts(row_labels, col_labels, entries)
    }

    pub fn write_posterior(&self, record: &PosteriorRecord) -> Result<()> {
        write_json(&self.path(POSTERIOR_FILE), record)
    }

    pub fn read_posterior(&self) -> Result<PosteriorRecord> {
        let path = self.path(POSTERIOR_FILE);
        let p: PosteriorRecord = read_json(&path)?;
        check_schema(&path, &p.schema, POSTERIOR_SCHEMA)?;
        Ok(p)
    }

    pub fn write_report(&self, report: &BoundReport) -> Result<()> {
        let path = self.path(REPORT_FILE);
        fs::create_dir_all(&self.root)?;
        fs::write(&path, report.to_json()).map_err(|e| artifact_err(&path, e))
    }

    pub fn read_report(&self) -> Result<BoundReport> {
        let path = self.path(REPORT_FILE);
        let r: BoundReport = read_json(&path)?;
        check_schema(&path, &r.schema, crate::bound::REPORT_SCHEMA)?;
        if !(r.raw_bound >= r.empirical_cost && r.pac_bound == r.raw_bound.min(1.0)) {
            return Err(artifact_err(&path, "bound fields are inconsistent"));
        }
        Ok(r)
    }

    pub fn write_eval(&self, record: &EvalRecord) -> Result<()> {
        write_json(&self.path(EVAL_FILE), record)
    }

    /// `Ok(None)` when no evaluation has been run.
    pub fn read_eval(&self) -> Result<Option<EvalRecord>> {
        let path = self.path(EVAL_FILE);
        if !path.exists() {
            return Ok(None);
        }
        let e: EvalRecord = read_json(&path)?;
        check_schema(&path, &e.schema, EVAL_SCHEMA)?;
        Ok(Some(e))
    }
}
