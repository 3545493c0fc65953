//! Minimizing the PAC-Bayes bound over discrete posteriors.
//!
//! The objective `F(q) = (sqrt(C.q + R(q)) + sqrt(R(q)))^2` with
//! `R(q) = (KL(q || q0) + ln(2 sqrt(N) / delta)) / (2N)` is smooth but not
//! convex on the simplex: `2 sqrt(R (C.q + R))` is a geometric mean.
//! It does have a one-dimensional structure. Writing
//! `(sqrt(a) + sqrt(b))^2 = min over t in (0, 1) of a/t + b/(1 - t)` shows that
//! every minimizer is a Gibbs posterior `q_i ~ q0_i exp(-beta C_i)` with
//! `beta in [0, 2N]`.
//!
//! [`optimize_posterior`] scans that family for a starting point and then
//! refines with exponentiated-gradient mirror descent, which keeps every
//! iterate strictly inside the simplex. [`brute_force_posterior`] enumerates
//! a grid and exists to cross-check it.

use serde::{Deserialize, Serialize};

use crate::bound::{
    empirical_posterior_cost, kl_discrete, quad_pac_bound, regularizer, BoundInputs,
    SimplexDistribution,
};
use crate::error::{Error, Result};

/// Largest simplex dimension the grid oracle will enumerate.
pub const BRUTE_FORCE_MAX_DIM: usize = 4;

const STOP_WINDOW: usize = 10;
const MAX_HALVINGS: usize = 60;
const GIBBS_SCAN_POINTS: usize = 400;

/// One instance of the posterior optimization problem.
#[derive(Debug, Clone, PartialEq)]
pub struct RepProblem {
    inputs: BoundInputs,
    prior: SimplexDistribution,
}

impl RepProblem {
    pub fn new(
        cost_vector: Vec<f64>,
        prior: SimplexDistribution,
        n_real: usize,
        delta: f64,
    ) -> Result<Self> {
        let inputs = BoundInputs::new(n_real, delta, cost_vector)?;
        if inputs.cost_vector.len() != prior.len() {
            return Err(Error::Dimension {
                what: "RepProblem prior",
                expected: inputs.cost_vector.len(),
                got: prior.len(),
            });
        }
        if !prior.has_full_support() {
            return Err(Error::domain("prior must have full support"));
        }
        Ok(Self { inputs, prior })
    }

    /// Problem with the uniform prior over `cost_vector.len()` items.
    pub fn with_uniform_prior(cost_vector: Vec<f64>, n_real: usize, delta: f64) -> Result<Self> {
        let prior = SimplexDistribution::uniform(cost_vector.len())?;
        Self::new(cost_vector, prior, n_real, delta)
    }

    pub fn dim(&self) -> usize {
        self.prior.len()
    }

    pub fn cost_vector(&self) -> &[f64] {
        &self.inputs.cost_vector
    }

    pub fn prior(&self) -> &SimplexDistribution {
        &self.prior
    }

    pub fn inputs(&self) -> &BoundInputs {
        &self.inputs
    }

    pub fn n_real(&self) -> usize {
        self.inputs.n_real
    }

    pub fn delta(&self) -> f64 {
        self.inputs.delta
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverConfig {
    pub max_iters: usize,
    pub step_size: f64,
    /// Stop once the objective drops by less than this over the last 10 iterations.
    pub tolerance: f64,
    /// Minimum weight used when evaluating KL gradients.
    pub floor: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            max_iters: 50_000,
            step_size: 0.1,
            tolerance: 1e-10,
            floor: 1e-12,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_iters == 0 {
            return Err(Error::config("solver.max_iters", "must be positive"));
        }
        if !(self.step_size > 0.0 && self.step_size.is_finite()) {
            return Err(Error::config("solver.step_size", "must be positive"));
        }
        if !(self.tolerance > 0.0) {
            return Err(Error::config("solver.tolerance", "must be positive"));
        }
        if !(self.floor > 0.0) {
            return Err(Error::config("solver.floor", "must be positive"));
        }
        Ok(())
    }

    fn validate_for(&self, m: usize) -> Result<()> {
        self.validate()?;
        if self.floor > 1.0 / m as f64 {
            return Err(Error::config(
                "solver.floor",
                format!("floor {} exceeds 1/m = {}", self.floor, 1.0 / m as f64),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub posterior: SimplexDistribution,
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// The bound value `F(q)` for posterior `q`.
pub fn rep_objective(problem: &RepProblem, q: &SimplexDistribution) -> Result<f64> {
    let cost = empirical_posterior_cost(problem.cost_vector(), q)?;
    let kl = kl_discrete(q, problem.prior())?;
    quad_pac_bound(cost, regularizer(kl, problem.n_real(), problem.delta())?)
}

/// Gradient of [`rep_objective`] with respect to the weights of `q`.
///
/// `q` must be strictly positive; clamp with [`SimplexDistribution::floored`]
/// before calling near the boundary.
pub fn rep_gradient(problem: &RepProblem, q: &SimplexDistribution) -> Result<Vec<f64>> {
    if q.len() != problem.dim() {
        return Err(Error::Dimension {
            what: "rep_gradient",
            expected: problem.dim(),
            got: q.len(),
        });
    }
    if let Some(i) = q.weights().iter().position(|&w| w <= 0.0) {
        return Err(Error::domain(format!(
            "gradient requested at boundary point (q[{i}] = 0); clamp to a floor first"
        )));
    }
    let n = problem.n_real() as f64;
    let cost = empirical_posterior_cost(problem.cost_vector(), q)?;
    let kl = kl_discrete(q, problem.prior())?;
    let reg = regularizer(kl, problem.n_real(), problem.delta())?;

    let outer = (cost + reg).sqrt();
    let inner = reg.sqrt();
    let root = outer + inner;
    let d_cost = root / outer;
    let d_reg = root * (1.0 / outer + 1.0 / inner);

    Ok(problem
        .cost_vector()
        .iter()
        .zip(q.weights())
        .zip(problem.prior().weights())
        .map(|((&c, &qi), &pi)| d_cost * c + d_reg * ((qi / pi).ln() + 1.0) / (2.0 * n))
        .collect())
}

/// Gibbs posterior `q_i ~ q0_i exp(-beta C_i)`.
pub fn gibbs_posterior(problem: &RepProblem, beta: f64) -> Result<SimplexDistribution> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(Error::domain(format!(
            "inverse temperature {beta} must be finite and >= 0"
        )));
    }
    let c_min = problem
        .cost_vector()
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min);
    let masses = problem
        .cost_vector()
        .iter()
        .zip(problem.prior().weights())
        .map(|(&c, &p)| p * (-beta * (c - c_min)).exp())
        .collect();
    SimplexDistribution::normalized(masses)
}

/// Best of the prior and an evenly spaced scan of Gibbs posteriors with
/// `beta in (0, 2N]`.
fn gibbs_start(problem: &RepProblem) -> Result<(SimplexDistribution, f64)> {
    let mut best = (
        problem.prior().clone(),
        rep_objective(problem, problem.prior())?,
    );
    let beta_max = 2.0 * problem.n_real() as f64;
    for k in 1..=GIBBS_SCAN_POINTS {
        let q = gibbs_posterior(problem, beta_max * k as f64 / GIBBS_SCAN_POINTS as f64)?;
        let value = rep_objective(problem, &q)?;
        if value < best.1 {
            best = (q, value);
        }
    }
    Ok(best)
}

/// Minimize the bound over the simplex: Gibbs-family scan for a starting
/// point, then exponentiated-gradient mirror descent with backtracking.
pub fn optimize_posterior(problem: &RepProblem, config: &SolverConfig) -> Result<SolveResult> {
    solve(problem, config, |_, _| {})
}

/// [`optimize_posterior`] with a hook that sees every accepted iterate.
pub(crate) fn solve(
    problem: &RepProblem,
    config: &SolverConfig,
    mut observe: impl FnMut(usize, &[f64]),
) -> Result<SolveResult> {
    let m = problem.dim();
    config.validate_for(m)?;

    let prior_objective = rep_objective(problem, problem.prior())?;
    let (mut q, mut objective) = if m == 1 {
        (problem.prior().clone(), prior_objective)
    } else {
        gibbs_start(problem)?
    };
    let mut history = vec![objective];
    let mut converged = m == 1;
    let mut iterations = 0;
    observe(0, q.weights());

    while !converged && iterations < config.max_iters {
        let grad = rep_gradient(problem, &q.floored(config.floor)?)?;
        let g_min = grad.iter().copied().fold(f64::INFINITY, f64::min);

        let mut step = config.step_size;
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let masses: Vec<f64> = q
                .weights()
                .iter()
                .zip(&grad)
                .map(|(&w, &g)| w * (-step * (g - g_min)).exp())
                .collect();
            let candidate = SimplexDistribution::normalized(masses)?;
            let value = rep_objective(problem, &candidate)?;
            if value <= objective {
                accepted = Some((candidate, value));
                break;
            }
            step *= 0.5;
        }

        iterations += 1;
        let Some((candidate, value)) = accepted else {
            // No descent at any step size: stationary to machine precision.
            converged = true;
            break;
        };
        q = candidate;
        objective = value;
        history.push(objective);
        observe(iterations, q.weights());

        if history.len() > STOP_WINDOW
            && history[history.len() - 1 - STOP_WINDOW] - objective < config.tolerance
        {
            converged = true;
        }
    }

    let posterior = q.floored(config.floor)?;
    let objective = rep_objective(problem, &posterior)?;
    if objective >= prior_objective {
        return Ok(SolveResult {
            posterior: problem.prior().clone(),
            objective: prior_objective,
            iterations,
            converged,
        });
    }
    Ok(SolveResult {
        posterior,
        objective,
        iterations,
        converged,
    })
}

/// Grid search over the simplex with spacing `grid_step`; ties go to the
/// lexicographically first grid point. Only for `m <= 4`.
pub fn brute_force_posterior(problem: &RepProblem, grid_step: f64) -> Result<SolveResult> {
    let m = problem.dim();
    if m > BRUTE_FORCE_MAX_DIM {
        return Err(Error::Unsupported(format!(
            "grid enumeration over {m} items (max {BRUTE_FORCE_MAX_DIM})"
        )));
    }
    if !(grid_step > 0.0 && grid_step <= 1.0) {
        return Err(Error::domain(format!(
            "grid step {grid_step} outside (0, 1]"
        )));
    }
    let ticks = (1.0 / grid_step).round() as usize;

    let mut best: Option<(Vec<usize>, f64)> = None;
    let mut counts = vec![0usize; m];
    let mut evaluated = 0;
    enumerate_compositions(&mut counts, 0, ticks, &mut |counts| {
        let weights: Vec<f64> = counts.iter().map(|&k| k as f64 / ticks as f64).collect();
        let q = SimplexDistribution::new(weights)?;
        let value = rep_objective(problem, &q)?;
        evaluated += 1;
        if best.as_ref().is_none_or(|(_, b)| value < *b) {
            best = Some((counts.to_vec(), value));
        }
        Ok(())
    })?;

    let (counts, objective) = best.expect("grid is nonempty");
    Ok(SolveResult {
        posterior: SimplexDistribution::new(
            counts.iter().map(|&k| k as f64 / ticks as f64).collect(),
        )?,
        objective,
        iterations: evaluated,
        converged: true,
    })
}

// Visits every vector of nonnegative integers summing to `remaining` in
// lexicographic order of (counts[0], counts[1], ...).
fn enumerate_compositions(
    counts: &mut [usize],
    pos: usize,
    remaining: usize,
    visit: &mut impl FnMut(&[usize]) -> Result<()>,
) -> Result<()> {
    if pos + 1 == counts.len() {
        counts[pos] = remaining;
        return visit(counts);
    }
    for k in 0..=remaining {
        counts[pos] = k;
        enumerate_compositions(counts, pos + 1, remaining - k, visit)?;
    }
    Ok(())
}
