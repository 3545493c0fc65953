use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{run_pipeline, ExperimentConfig, RunDir};
use crate::bound::BoundReport;
use crate::error::{Error, Result};

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    /// Obstacle count of the generative model.
    NObstaclesGen,
    /// Number of real training environments.
    NReal,
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::NObstaclesGen => "n_obstacles_gen",
            SweepAxis::NReal => "n_real",
        }
    }

    fn apply(self, config: &mut ExperimentConfig, value: usize) {
        match self {
            SweepAxis::NObstaclesGen => config.generative.n_obstacles = value,
            SweepAxis::NReal => config.n_real = value,
        }
    }
}

impl fmt::Display for SweepAxis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "n_obstacles_gen" | "generative.n_obstacles" => Ok(SweepAxis::NObstaclesGen),
            "n_real" | "N" => Ok(SweepAxis::NReal),
            other => Err(Error::config(
                "axis",
                format!("unknown sweep axis `{other}` (expected n_obstacles_gen or n_real)"),
            )),
        }
    }
}

/// One cell of a sweep. Failed cells carry the error text instead of a report.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub axis: SweepAxis,
    pub value: usize,
    pub seed: u64,
    pub run_dir: PathBuf,
    pub outcome: std::result::Result<BoundReport, String>,
}

#[derive(Serialize, Deserialize)]
struct SweepCsvRow {
    axis: String,
    value: usize,
    seed: u64,
    status: String,
    n_real: Option<usize>,
    n_obstacles_gen: Option<usize>,
    m: Option<usize>,
    l: Option<usize>,
    delta: Option<f64>,
    empirical_cost: Option<f64>,
    kl: Option<f64>,
    regularizer: Option<f64>,
    raw_bound: Option<f64>,
    pac_bound: Option<f64>,
    real_env_digest: Option<String>,
    run_dir: String,
    error: Option<String>,
}

/// Run the pipeline for every `(value, seed)` pair. Each cell gets its own
/// run directory under `base.output_dir/cells`, and a long-format table is
/// written to `base.output_dir/sweep.csv`. Within one seed every cell sees
/// the same real environments, because those depend only on the master
/// seed. A failing cell is recorded and the sweep carries on.
pub fn sweep(
    base: &ExperimentConfig,
    axis: SweepAxis,
    values: &[usize],
    seeds: &[u64],
) -> Result<Vec<SweepRow>> {
    if values.is_empty() || seeds.is_empty() {
        return Err(Error::config(
            "sweep",
            "axis values and seeds must be nonempty",
        ));
    }
    let mut rows = Vec::with_capacity(values.len() * seeds.len());
    for &value in values {
        for &seed in seeds {
            let mut config = base.clone();
            axis.apply(&mut config, value);
            config.master_seed = seed;
            config.output_dir = base
                .output_dir
                .join("cells")
                .join(format!("{axis}-{value}"))
                .join(format!("seed-{seed}"));
            let outcome = run_pipeline(&config).map_err(|e| e.to_string());
            rows.push(SweepRow {
                axis,
                value,
                seed,
                run_dir: config.output_dir,
                outcome,
            });
        }
    }
    write_sweep_csv(&base.output_dir, &rows)?;
    Ok(rows)
}

fn write_sweep_csv(dir: &std::path::Path, rows: &[SweepRow]) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let mut w = csv::Writer::from_path(dir.join(SWEEP_FILE))?;
    for row in rows {
        let report = row.outcome.as_ref().ok();
        let sig = |x: f64| crate::digest::round_sig(x);
        w.serialize(SweepCsvRow {
            axis: row.axis.name().to_string(),
            value: row.value,
            seed: row.seed,
            status: if report.is_some() { "ok" } else { "failed" }.to_string(),
            n_real: report.map(|r| r.n_real),
            n_obstacles_gen: report.map(|r| r.provenance.n_obstacles_gen),
            m: report.map(|r| r.m),
            l: report.map(|r| r.l),
            delta: report.map(|r| sig(r.delta)),
            empirical_cost: report.map(|r| sig(r.empirical_cost)),
            kl: report.map(|r| sig(r.kl)),
            regularizer: report.map(|r| sig(r.regularizer)),
            raw_bound: report.map(|r| sig(r.raw_bound)),
            pac_bound: report.map(|r| sig(r.pac_bound)),
            real_env_digest: report.map(|r| r.provenance.real_env_digest.clone()),
            run_dir: row.run_dir.display().to_string(),
            error: row.outcome.as_ref().err().cloned(),
        })?;
    }
    w.flush()?;
    Ok(())
}

/// Cell run directories listed in a sweep table, with their status.
pub fn read_sweep_cells(dir: &std::path::Path) -> Result<Vec<(RunDir, bool)>> {
    let mut r = csv::Reader::from_path(dir.join(SWEEP_FILE))?;
    r.deserialize::<SweepCsvRow>()
        .map(|row| {
            let row = row?;
            Ok((RunDir::new(row.run_dir), row.status == "ok"))
        })
        .collect()
}
