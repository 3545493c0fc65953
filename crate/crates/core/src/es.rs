//! Seeded evolutionary strategies: the deterministic map from a synthetic
//! dataset to policy parameters.
//!
//! Each iteration draws `population_size / 2` standard-normal directions
//! `eps_j` from the config's stream, evaluates the loss at `theta +- sigma eps_j`
//! and steps against the smoothed gradient estimate
//! `sum_j L(theta + sigma eps_j) eps_j / (population_size * sigma)`, where the
//! sum runs over all antithetic members in draw order. Everything runs in a
//! fixed order, so equal inputs give bit-identical outputs.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bound::SimplexDistribution;
use crate::envsim::{Simulator, SyntheticDataset};
use crate::error::{Error, Result};
use crate::streams::{self, Stream};

pub const POLICY_SCHEMA: &str = "pacgen_policy_v1";

/// Hyperparameters shared by every dataset's training run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EsParams {
    pub population_size: usize,
    pub sigma: f64,
    pub learning_rate: f64,
    pub iterations: usize,
}

impl Default for EsParams {
    fn default() -> Self {
        Self {
            population_size: 32,
            sigma: 0.05,
            learning_rate: 0.02,
            iterations: 300,
        }
    }
}

impl EsParams {
    pub fn validate(&self) -> Result<()> {
        if self.population_size == 0 || !self.population_size.is_multiple_of(2) {
            return Err(Error::config(
                "es.population_size",
                "must be a positive even number",
            ));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::config("es.sigma", "must be positive"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::config("es.learning_rate", "must be positive"));
        }
        Ok(())
    }

    pub fn with_seed(self, seed: u64) -> EsConfig {
        EsConfig { params: self, seed }
    }
}

/// Hyperparameters plus the seed of the perturbation stream.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsConfig {
    #[serde(flatten)]
    pub params: EsParams,
    pub seed: u64,
}

impl EsConfig {
    pub fn new(params: EsParams, seed: u64) -> Self {
        Self { params, seed }
    }
}

/// Flat parameter vector of a policy network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PolicyParams(pub Vec<f64>);

impl PolicyParams {
    pub fn zeros(n: usize) -> Self {
        Self(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Mean rollout cost of `theta` over the dataset, in dataset order.
pub fn dataset_loss(
    sim: &Simulator,
    theta: &[f64],
    dataset: &SyntheticDataset,
    horizon: usize,
) -> Result<f64> {
    if dataset.is_empty() {
        return Err(Error::domain("dataset loss over an empty dataset"));
    }
    let mut total = 0.0;
    for env in &dataset.environments {
        total += sim.rollout_cost(env, theta, horizon)?;
    }
    Ok(total / dataset.len() as f64)
}

/// Antithetic estimate of the Gaussian-smoothed gradient of `loss` at
/// `theta`, drawing `population / 2` directions from `stream`. Losses are
/// clamped to `[0, 1]`; a non-finite loss is an error.
pub fn smoothed_gradient<L>(
    loss: &mut L,
    theta: &[f64],
    sigma: f64,
    population: usize,
    stream: &mut Stream,
) -> Result<Vec<f64>, NonFinite>
where
    L: FnMut(&[f64]) -> Result<f64>,
{
    let n = theta.len();
    let mut grad = vec![0.0; n];
    let mut probe = vec![0.0; n];
    let mut eps = vec![0.0; n];
    for _ in 0..population / 2 {
        for e in eps.iter_mut() {
            *e = StandardNormal.sample(stream);
        }
        for sign in [1.0, -1.0] {
            for ((p, t), e) in probe.iter_mut().zip(theta).zip(&eps) {
                *p = t + sign * sigma * e;
            }
            let value = loss(&probe).map_err(NonFinite::Loss)?;
            if !value.is_finite() {
                return Err(NonFinite::Value);
            }
            let value = value.clamp(0.0, 1.0);
            for (g, e) in grad.iter_mut().zip(&eps) {
                *g += value * sign * e;
            }
        }
    }
    let scale = 1.0 / (population as f64 * sigma);
    grad.iter_mut().for_each(|g| *g *= scale);
    Ok(grad)
}

/// Why a gradient estimate failed.
#[derive(Debug)]
pub enum NonFinite {
    /// The loss itself returned an error.
    Loss(Error),
    /// The loss returned NaN or infinity.
    Value,
}

/// Run ES on an arbitrary loss.
pub fn minimize<L>(mut loss: L, config: &EsConfig, init: &[f64]) -> Result<Vec<f64>>
where
    L: FnMut(&[f64]) -> Result<f64>,
{
    config.params.validate()?;
    let p = &config.params;
    let mut theta = init.to_vec();
    if let Some(i) = theta.iter().position(|x| !x.is_finite()) {
        return Err(Error::domain(format!(
            "initial parameter {i} is not finite"
        )));
    }
    let mut stream = streams::stream_from_seed(config.seed);
    for iteration in 0..p.iterations {
        let grad = smoothed_gradient(&mut loss, &theta, p.sigma, p.population_size, &mut stream)
            .map_err(|e| match e {
                NonFinite::Loss(err) => err,
                NonFinite::Value => Error::NonFiniteLoss { iteration },
            })?;
        for (t, g) in theta.iter_mut().zip(&grad) {
            *t -= p.learning_rate * g;
        }
    }
    Ok(theta)
}

/// Train one policy on one synthetic dataset.
pub fn train_policy(
    sim: &Simulator,
    dataset: &SyntheticDataset,
    horizon: usize,
    config: &EsConfig,
    init: &PolicyParams,
) -> Result<PolicyParams> {
    let expected = sim.architecture().n_params();
    if init.len() != expected {
        return Err(Error::Dimension {
            what: "initial policy parameters",
            expected,
            got: init.len(),
        });
    }
    if dataset.is_empty() {
        return Err(Error::domain("cannot train on an empty dataset"));
    }
    minimize(
        |theta| dataset_loss(sim, theta, dataset, horizon),
        config,
        init.as_slice(),
    )
    .map(PolicyParams)
}

/// Seed of the ES stream for dataset `index`.
pub fn derive_es_seed(master_seed: u64, index: usize) -> u64 {
    streams::derive_seed(master_seed, streams::ES, &[index as u64])
}

/// Train every dataset with its own config, possibly in parallel. Output
/// order always matches input order.
pub fn train_all(
    sim: &Simulator,
    jobs: &[(&SyntheticDataset, EsConfig)],
    horizon: usize,
) -> Result<Vec<PolicyParams>> {
    let init = PolicyParams::zeros(sim.architecture().n_params());
    jobs.par_iter()
        .enumerate()
        .map(|(index, (dataset, config))| {
            train_policy(sim, dataset, horizon, config, &init).map_err(|e| Error::Policy {
                index,
                source: Box::new(e),
            })
        })
        .collect()
}

/// The push-forward of the datasets through the trainer: policy `i` is
/// trained on `datasets[i]` from zero initialization with the seed
/// [`derive_es_seed`]`(master_seed, i)`.
pub fn pushforward_policies(
    sim: &Simulator,
    datasets: &[SyntheticDataset],
    params: &EsParams,
    master_seed: u64,
    horizon: usize,
) -> Result<Vec<PolicyParams>> {
    if datasets.is_empty() {
        return Err(Error::domain("push-forward needs at least one dataset"));
    }
    let jobs: Vec<_> = datasets
        .iter()
        .enumerate()
        .map(|(i, d)| (d, params.with_seed(derive_es_seed(master_seed, i))))
        .collect();
    train_all(sim, &jobs, horizon)
}

/// Label each policy by its first bitwise-identical occurrence, so equal
/// parameter vectors share a label. Labels are dense and start at 0.
pub fn identical_policy_labels(policies: &[PolicyParams]) -> Vec<usize> {
    let mut reps: Vec<&PolicyParams> = Vec::new();
    policies
        .iter()
        .map(|p| {
            let bits = |q: &PolicyParams| q.0.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
            match reps.iter().position(|r| bits(r) == bits(p)) {
                Some(label) => label,
                None => {
                    reps.push(p);
                    reps.len() - 1
                }
            }
        })
        .collect()
}

/// Distribution of `label[i]` when `i ~ q`: the image of `q` under a
/// deterministic lookup. Labels must be dense in `0..=max`.
pub fn pushforward_distribution(
    q: &SimplexDistribution,
    labels: &[usize],
) -> Result<SimplexDistribution> {
    if labels.len() != q.len() {
        return Err(Error::Dimension {
            what: "push-forward labels",
            expected: q.len(),
            got: labels.len(),
        });
    }
    let n_targets = labels.iter().max().map_or(0, |m| m + 1);
    let mut mass = vec![0.0; n_targets];
    for (&label, &w) in labels.iter().zip(q.weights()) {
        mass[label] += w;
    }
    SimplexDistribution::new(mass)
}

/// One persisted trained policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyRecord {
    pub schema: String,
    pub index: usize,
    #[serde(serialize_with = "crate::digest::serialize_sig_vec")]
    pub theta: Vec<f64>,
    pub es: EsConfig,
    pub dataset_digest: String,
    pub master_seed: u64,
    pub stream_scheme: String,
}
