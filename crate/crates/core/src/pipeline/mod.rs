//! End-to-end experiment: sample real and synthetic environments, train one
//! policy per synthetic dataset, evaluate every policy on every real
//! environment, optimize the posterior over datasets and certify the bound.
//!
//! All randomness flows from `master_seed` through the named streams in
//! [`crate::streams`]. Parallel stages write into pre-indexed slots and every
//! reduction runs in index order, so results do not depend on the number of
//! worker threads.

mod artifacts;
mod config;
mod sweep;

use rayon::prelude::*;

use crate::bound::{BoundReport, Provenance, SimplexDistribution, SolverSummary};
use crate::digest::{json_digest, round_sig};
use crate::envsim::{
    environment_at, sample_real_environments, sample_synthetic_datasets, DistributionSpec,
    EnvironmentSpec, Simulator, SyntheticDataset,
};
use crate::error::{Error, Result};
use crate::es::{derive_es_seed, pushforward_policies, PolicyParams, PolicyRecord, POLICY_SCHEMA};
use crate::simplex::{optimize_posterior, RepProblem, SolveResult};
use crate::streams::{self, STREAM_SCHEME};

pub use artifacts::{
    ConfigEcho, EnvironmentSet, EvalRecord, PosteriorRecord, RunDir, COST_MATRIX_FILE, EVAL_FILE,
    EVAL_SCHEMA, POSTERIOR_SCHEMA, REPORT_FILE,
};
pub use config::{ExperimentConfig, CONFIG_SCHEMA};
pub use sweep::{read_sweep_cells, sweep, SweepAxis, SweepRow, SWEEP_FILE};

/// Rollout costs of `m` policies (columns) on `N` real environments (rows).
#[derive(Debug, Clone, PartialEq)]
pub struct CostMatrix {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    entries: Vec<f64>,
}

impl CostMatrix {
    pub fn from_parts(
        row_labels: Vec<String>,
        col_labels: Vec<String>,
        entries: Vec<f64>,
    ) -> Result<Self> {
        let expected = row_labels.len() * col_labels.len();
        if entries.len() != expected {
            return Err(Error::Dimension {
                what: "cost matrix entries",
                expected,
                got: entries.len(),
            });
        }
        if let Some(v) = entries.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::domain(format!(
                "cost matrix entry {v} outside [0, 1]"
            )));
        }
        Ok(Self {
            row_labels,
            col_labels,
            entries,
        })
    }

    pub fn rows(&self) -> usize {
        self.row_labels.len()
    }

    pub fn cols(&self) -> usize {
        self.col_labels.len()
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.entries[row * self.cols() + col]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        &self.entries[row * self.cols()..(row + 1) * self.cols()]
    }

    /// Per-policy mean cost over the real environments, summed in row order.
    pub fn column_means(&self) -> Vec<f64> {
        let n = self.rows() as f64;
        (0..self.cols())
            .map(|j| (0..self.rows()).map(|i| self.get(i, j)).sum::<f64>() / n)
            .collect()
    }
}

/// Entry `(i, j)` is the rollout cost of policy `j` on real environment `i`.
pub fn build_cost_matrix(
    sim: &Simulator,
    policies: &[PolicyParams],
    real_envs: &[EnvironmentSpec],
    horizon: usize,
) -> Result<CostMatrix> {
    if policies.is_empty() || real_envs.is_empty() {
        return Err(Error::domain(
            "cost matrix needs at least one policy and one environment",
        ));
    }
    let rows: Vec<Vec<f64>> = real_envs
        .par_iter()
        .enumerate()
        .map(|(i, env)| {
            policies
                .iter()
                .enumerate()
                .map(|(j, theta)| {
                    sim.rollout_cost(env, theta.as_slice(), horizon)
                        .map_err(|e| Error::domain(format!("cell ({i}, {j}): {e}")))
                })
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<_>>()?;
    CostMatrix::from_parts(
        real_envs.iter().map(EnvironmentSpec::digest).collect(),
        policies.iter().map(json_digest).collect(),
        rows.concat(),
    )
}

/// Held-out estimate of the posterior's expected cost on fresh environments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrueCostEstimate {
    pub estimate: f64,
    pub standard_error: f64,
    /// False for a single evaluation environment.
    pub standard_error_defined: bool,
}

/// Mean over `n_eval` fresh environments of the exact posterior expectation
/// `sum_j q_j cost(env, theta_j)`. Environment `e` comes from the stream
/// `(eval_seed, EVAL, e)`, disjoint from every training stream.
#[allow(clippy::too_many_arguments)]
pub fn estimate_true_cost(
    sim: &Simulator,
    posterior: &SimplexDistribution,
    policies: &[PolicyParams],
    real_dist: &DistributionSpec,
    horizon: usize,
    n_eval: usize,
    eval_seed: u64,
) -> Result<TrueCostEstimate> {
    if n_eval == 0 {
        return Err(Error::domain("n_eval must be at least 1"));
    }
    if posterior.len() != policies.len() {
        return Err(Error::Dimension {
            what: "posterior vs policies",
            expected: policies.len(),
            got: posterior.len(),
        });
    }
    let per_env: Vec<f64> = (0..n_eval)
        .into_par_iter()
        .map(|e| {
            let env = environment_at(real_dist, eval_seed, streams::EVAL, e);
            let mut expected = 0.0;
            for (&w, theta) in posterior.weights().iter().zip(policies) {
                if w > 0.0 {
                    expected += w * sim.rollout_cost(&env, theta.as_slice(), horizon)?;
                }
            }
            Ok(expected)
        })
        .collect::<Result<_>>()?;

    let n = n_eval as f64;
    let mean = per_env.iter().sum::<f64>() / n;
    if n_eval == 1 {
        return Ok(TrueCostEstimate {
            estimate: mean,
            standard_error: 0.0,
            standard_error_defined: false,
        });
    }
    let var = per_env.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    Ok(TrueCostEstimate {
        estimate: mean,
        standard_error: (var / n).sqrt(),
        standard_error_defined: true,
    })
}

/// Seed for held-out evaluation of a run.
pub fn default_eval_seed(master_seed: u64) -> u64 {
    streams::derive_seed(master_seed, streams::EVAL, &[])
}

/// Everything a pipeline run produces, in memory.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub report: BoundReport,
    pub real_envs: Vec<EnvironmentSpec>,
    pub datasets: Vec<SyntheticDataset>,
    pub policies: Vec<PolicyParams>,
    pub cost_matrix: CostMatrix,
    pub cost_vector: Vec<f64>,
    pub prior: SimplexDistribution,
    pub solve: SolveResult,
}

/// Digest identifying the set of real environments of a run.
pub fn real_env_digest(envs: &[EnvironmentSpec]) -> String {
    json_digest(envs)
}

fn run(config: &ExperimentConfig, out: Option<&RunDir>) -> Result<PipelineRun> {
    config.validate()?;
    let sim = config.simulator.simulator();
    let seed = config.master_seed;
    if let Some(dir) = out {
        dir.write_config(config)?;
    }

    let real_envs = sample_real_environments(&config.real, config.n_real, seed);
    let datasets = sample_synthetic_datasets(&config.generative, config.m, config.l, seed)
        .map_err(Error::in_stage("sample"))?;
    if let Some(dir) = out {
        dir.write_environments(&real_envs, &datasets)?;
    }

    // Persisted parameters carry 12 significant digits; use exactly those.
    let policies: Vec<PolicyParams> =
        pushforward_policies(&sim, &datasets, &config.es, seed, config.horizon)
            .map_err(Error::in_stage("train"))?
            .into_iter()
            .map(|p| PolicyParams(p.0.into_iter().map(round_sig).collect()))
            .collect();
    if let Some(dir) = out {
        let records: Vec<PolicyRecord> = policies
            .iter()
            .zip(&datasets)
            .enumerate()
            .map(|(i, (p, d))| PolicyRecord {
                schema: POLICY_SCHEMA.to_string(),
                index: i,
                theta: p.0.clone(),
                es: config.es.with_seed(derive_es_seed(seed, i)),
                dataset_digest: d.digest(),
                master_seed: seed,
                stream_scheme: STREAM_SCHEME.to_string(),
            })
            .collect();
        dir.write_policies(&records)?;
    }

    let mut cost_matrix = build_cost_matrix(&sim, &policies, &real_envs, config.horizon)
        .map_err(Error::in_stage("evaluate"))?;
    cost_matrix.col_labels = datasets.iter().map(SyntheticDataset::digest).collect();
    if let Some(dir) = out {
        dir.write_cost_matrix(&cost_matrix)?;
    }
    let cost_vector = cost_matrix.column_means();

    let prior = SimplexDistribution::uniform(config.m)?;
    let problem = RepProblem::new(
        cost_vector.clone(),
        prior.clone(),
        config.n_real,
        config.delta,
    )
    .map_err(Error::in_stage("optimize"))?;
    let solve =
        optimize_posterior(&problem, &config.solver).map_err(Error::in_stage("optimize"))?;
    if let Some(dir) = out {
        dir.write_posterior(&PosteriorRecord {
            schema: POSTERIOR_SCHEMA.to_string(),
            prior: prior.clone(),
            posterior: solve.posterior.clone(),
            cost_vector: cost_vector.clone(),
            objective: solve.objective,
            iterations: solve.iterations,
            converged: solve.converged,
        })?;
    }

    let report = BoundReport::certify(
        problem.inputs(),
        &solve.posterior,
        &prior,
        config.l,
        SolverSummary {
            objective: solve.objective,
            iterations: solve.iterations,
            converged: solve.converged,
            posterior: solve.posterior.weights().to_vec(),
        },
        Provenance {
            master_seed: seed,
            stream_scheme: STREAM_SCHEME.to_string(),
            config_digest: config.digest(),
            real_env_digest: real_env_digest(&real_envs),
            n_obstacles_real: config.real.n_obstacles,
            n_obstacles_gen: config.generative.n_obstacles,
            horizon: config.horizon,
        },
    )
    .map_err(Error::in_stage("report"))?;
    if let Some(dir) = out {
        dir.write_report(&report)?;
    }

    Ok(PipelineRun {
        report,
        real_envs,
        datasets,
        policies,
        cost_matrix,
        cost_vector,
        prior,
        solve,
    })
}

/// Run the whole pipeline without touching the filesystem.
pub fn execute(config: &ExperimentConfig) -> Result<PipelineRun> {
    run(config, None)
}

/// Run the whole pipeline, writing every artifact under `config.output_dir`
/// as soon as its stage completes.
pub fn run_pipeline(config: &ExperimentConfig) -> Result<BoundReport> {
    run_pipeline_full(config).map(|r| r.report)
}

/// [`run_pipeline`] returning the in-memory artifacts as well.
pub fn run_pipeline_full(config: &ExperimentConfig) -> Result<PipelineRun> {
    let dir = RunDir::new(&config.output_dir);
    run(config, Some(&dir))
}

/// Evaluate a persisted run on `n_eval` held-out environments and write
/// `eval.json`.
pub fn evaluate_run(dir: &RunDir, n_eval: usize, eval_seed: Option<u64>) -> Result<EvalRecord> {
    let config = dir.read_config()?;
    let posterior = dir.read_posterior()?.posterior;
    let policies = dir.read_policies(config.m)?;
    let sim = config.simulator.simulator();
    let eval_seed = eval_seed.unwrap_or_else(|| default_eval_seed(config.master_seed));
    let est = estimate_true_cost(
        &sim,
        &posterior,
        &policies,
        &config.real,
        config.horizon,
        n_eval,
        eval_seed,
    )?;
    let record = EvalRecord {
        schema: EVAL_SCHEMA.to_string(),
        n_eval,
        eval_seed,
        estimate: est.estimate,
        standard_error: est.standard_error,
        standard_error_defined: est.standard_error_defined,
    };
    dir.write_eval(&record)?;
    Ok(record)
}

/// Run `f` on a dedicated pool of `workers` threads.
pub fn with_workers<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::domain(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}
