//! PAC-Bayes arithmetic: discrete KL divergence, the complexity regularizer
//! and the quadratic upper bound on expected cost.
//!
//! All logarithms are natural, so KL is measured in nats. Sums run in index
//! order so results are bit-reproducible.

use serde::{Deserialize, Serialize};

use crate::digest::{serialize_sig, serialize_sig_vec};
use crate::error::{Error, Result};

/// Absolute tolerance on the weight sum of a [`SimplexDistribution`].
pub const SIMPLEX_TOLERANCE: f64 = 1e-9;

pub const REPORT_SCHEMA: &str = "pacgen_report_v1";

/// A probability vector over `m >= 1` items.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SimplexDistribution {
    weights: Vec<f64>,
}

impl SimplexDistribution {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::domain(
                "simplex distribution needs at least one weight",
            ));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::domain(format!("weight {i} is {w}, expected >= 0")));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > SIMPLEX_TOLERANCE {
            return Err(Error::domain(format!("weights sum to {total}, expected 1")));
        }
        Ok(Self { weights })
    }

    /// Scale nonnegative masses so they sum to one.
    pub fn normalized(masses: Vec<f64>) -> Result<Self> {
        let total: f64 = masses.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            return Err(Error::domain(format!(
                "cannot normalize masses with total {total}"
            )));
        }
        Self::new(masses.into_iter().map(|w| w / total).collect())
    }

    pub fn uniform(m: usize) -> Result<Self> {
        if m == 0 {
            return Err(Error::domain("uniform distribution over zero items"));
        }
        Ok(Self {
            weights: vec![1.0 / m as f64; m],
        })
    }

    pub fn point_mass(m: usize, index: usize) -> Result<Self> {
        if index >= m {
            return Err(Error::domain(format!(
                "point mass index {index} outside 0..{m}"
            )));
        }
        let mut weights = vec![0.0; m];
        weights[index] = 1.0;
        Ok(Self { weights })
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn has_full_support(&self) -> bool {
        self.weights.iter().all(|&w| w > 0.0)
    }

    /// Clamp every weight to at least `floor` and renormalize. Returns an
    /// exact copy when no weight is below the floor.
    pub fn floored(&self, floor: f64) -> Result<Self> {
        if self.weights.iter().all(|&w| w >= floor) {
            return Ok(self.clone());
        }
        Self::normalized(self.weights.iter().map(|&w| w.max(floor)).collect())
    }
}

impl TryFrom<Vec<f64>> for SimplexDistribution {
    type Error = Error;

    fn try_from(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)
    }
}

impl From<SimplexDistribution> for Vec<f64> {
    fn from(d: SimplexDistribution) -> Self {
        d.weights
    }
}

fn check_dims(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::Dimension {
            what,
            expected,
            got,
        });
    }
    Ok(())
}

/// `KL(q || q0)` in nats, using `0 ln(0/x) = 0`.
///
/// Fails if `q` puts mass where `q0` has none rather than returning infinity.
pub fn kl_discrete(q: &SimplexDistribution, q0: &SimplexDistribution) -> Result<f64> {
    check_dims("kl_discrete", q0.len(), q.len())?;
    let mut kl = 0.0;
    for (i, (&qi, &pi)) in q.weights().iter().zip(q0.weights()).enumerate() {
        if qi == 0.0 {
            continue;
        }
        if pi == 0.0 {
            return Err(Error::domain(format!(
                "posterior weight {qi} at index {i} where the prior has no mass"
            )));
        }
        kl += qi * (qi / pi).ln();
    }
    Ok(kl.max(0.0))
}

fn check_confidence(n_real: usize, delta: f64) -> Result<()> {
    if n_real == 0 {
        return Err(Error::domain("N must be at least 1"));
    }
    if !(delta > 0.0 && delta < 1.0) {
        return Err(Error::domain(format!("delta = {delta} outside (0, 1)")));
    }
    Ok(())
}

/// `(kl + ln(2 sqrt(N) / delta)) / (2N)`.
pub fn regularizer(kl: f64, n_real: usize, delta: f64) -> Result<f64> {
    if !(kl >= 0.0 && kl.is_finite()) {
        return Err(Error::domain(format!("kl = {kl} must be finite and >= 0")));
    }
    check_confidence(n_real, delta)?;
    let n = n_real as f64;
    Ok((kl + (2.0 * n.sqrt() / delta).ln()) / (2.0 * n))
}

/// `(sqrt(c + r) + sqrt(r))^2`, the unclamped bound.
pub fn quad_pac_bound(empirical_cost: f64, reg: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&empirical_cost) {
        return Err(Error::domain(format!(
            "empirical cost {empirical_cost} outside [0, 1]"
        )));
    }
    if !(reg >= 0.0 && reg.is_finite()) {
        return Err(Error::domain(format!(
            "regularizer {reg} must be finite and >= 0"
        )));
    }
    let root = (empirical_cost + reg).sqrt() + reg.sqrt();
    Ok(root * root)
}

/// Expected empirical cost `C . q` under the posterior.
pub fn empirical_posterior_cost(cost_vector: &[f64], q: &SimplexDistribution) -> Result<f64> {
    check_dims("empirical_posterior_cost", cost_vector.len(), q.len())?;
    let cost: f64 = cost_vector
        .iter()
        .zip(q.weights())
        .map(|(c, w)| c * w)
        .sum();
    // Rounding can push a convex combination of [0, 1] values a hair outside.
    Ok(cost.clamp(0.0, 1.0))
}

/// Inputs that a bound is certified for.
#[derive(Debug, Clone, PartialEq)]
pub struct BoundInputs {
    pub n_real: usize,
    pub delta: f64,
    pub cost_vector: Vec<f64>,
}

impl BoundInputs {
    pub fn new(n_real: usize, delta: f64, cost_vector: Vec<f64>) -> Result<Self> {
        check_confidence(n_real, delta)?;
        if cost_vector.is_empty() {
            return Err(Error::domain("cost vector is empty"));
        }
        if let Some((i, c)) = cost_vector
            .iter()
            .enumerate()
            .find(|(_, c)| !(0.0..=1.0).contains(*c))
        {
            return Err(Error::domain(format!(
                "cost entry {i} = {c} outside [0, 1]"
            )));
        }
        Ok(Self {
            n_real,
            delta,
            cost_vector,
        })
    }
}

/// Solver outcome as recorded in a report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSummary {
    #[serde(serialize_with = "serialize_sig")]
    pub objective: f64,
    pub iterations: usize,
    pub converged: bool,
    #[serde(serialize_with = "serialize_sig_vec")]
    pub posterior: Vec<f64>,
}

/// Where the numbers in a report came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub master_seed: u64,
    pub stream_scheme: String,
    pub config_digest: String,
    pub real_env_digest: String,
    pub n_obstacles_real: usize,
    pub n_obstacles_gen: usize,
    pub horizon: usize,
}

/// A certified bound together with everything needed to audit it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub schema: String,
    #[serde(serialize_with = "serialize_sig")]
    pub empirical_cost: f64,
    #[serde(serialize_with = "serialize_sig")]
    pub kl: f64,
    #[serde(serialize_with = "serialize_sig")]
    pub regularizer: f64,
    #[serde(serialize_with = "serialize_sig")]
    pub pac_bound: f64,
    #[serde(serialize_with = "serialize_sig")]
    pub raw_bound: f64,
    pub n_real: usize,
    pub m: usize,
    pub l: usize,
    #[serde(serialize_with = "serialize_sig")]
    pub delta: f64,
    pub solver: SolverSummary,
    pub provenance: Provenance,
}

impl BoundReport {
    /// Evaluate the bound for posterior `q` against uniform-or-not prior `q0`.
    pub fn certify(
        inputs: &BoundInputs,
        q: &SimplexDistribution,
        q0: &SimplexDistribution,
        l: usize,
        solver: SolverSummary,
        provenance: Provenance,
    ) -> Result<Self> {
        let empirical_cost = empirical_posterior_cost(&inputs.cost_vector, q)?;
        let kl = kl_discrete(q, q0)?;
        let regularizer = regularizer(kl, inputs.n_real, inputs.delta)?;
        let raw_bound = quad_pac_bound(empirical_cost, regularizer)?;
        debug_assert!(raw_bound >= empirical_cost);
        Ok(Self {
            schema: REPORT_SCHEMA.to_string(),
            empirical_cost,
            kl,
            regularizer,
            pac_bound: raw_bound.min(1.0),
            raw_bound,
            n_real: inputs.n_real,
            m: q.len(),
            l,
            delta: inputs.delta,
            solver,
            provenance,
        })
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn dist(w: &[f64]) -> SimplexDistribution {
        SimplexDistribution::new(w.to_vec()).unwrap()
    }

    #[test]
    fn simplex_validation() {
        assert!(SimplexDistribution::new(vec![]).is_err());
        assert!(SimplexDistribution::new(vec![0.5, 0.6]).is_err());
        assert!(SimplexDistribution::new(vec![1.5, -0.5]).is_err());
        assert!(SimplexDistribution::new(vec![f64::NAN, 1.0]).is_err());
        assert!(SimplexDistribution::new(vec![0.5, 0.5 + 5e-10]).is_ok());
        let json = serde_json::to_string(&dist(&[0.25, 0.75])).unwrap();
        assert_eq!(json, "[0.25,0.75]");
        assert!(serde_json::from_str::<SimplexDistribution>("[0.3,0.3]").is_err());
    }

    #[test]
    fn kl_examples() {
        let u = SimplexDistribution::uniform(4).unwrap();
        assert_eq!(kl_discrete(&u, &u).unwrap(), 0.0);
        let half = dist(&[0.5, 0.5]);
        let kl = kl_discrete(&dist(&[1.0, 0.0]), &half).unwrap();
        assert!((kl - std::f64::consts::LN_2).abs() < 1e-15);
        // 0.3 ln 0.6 + 0.7 ln 1.4
        let kl = kl_discrete(&dist(&[0.3, 0.7]), &half).unwrap();
        assert!((kl - 0.08228287850505178).abs() < 1e-15);
    }

    #[test]
    fn kl_errors() {
        let err = kl_discrete(&dist(&[0.5, 0.5]), &dist(&[1.0, 0.0])).unwrap_err();
        assert!(matches!(err, Error::Domain(_)));
        let err = kl_discrete(&dist(&[1.0]), &dist(&[0.5, 0.5])).unwrap_err();
        assert!(matches!(err, Error::Dimension { .. }));
    }

    #[test]
    fn regularizer_examples() {
        let r = regularizer(0.0, 100, 0.01).unwrap();
        assert!((r - 0.03800451229771041).abs() < 1e-15);
        let r = regularizer(1.0, 100, 0.01).unwrap();
        assert!((r - 0.04300451229771041).abs() < 1e-15);
        assert!(regularizer(0.0, 1_000_000_000, 0.01).unwrap() < 2e-8);
        assert!(regularizer(-1.0, 10, 0.1).is_err());
        assert!(regularizer(0.0, 0, 0.1).is_err());
        assert!(regularizer(0.0, 10, 1.0).is_err());
        assert!(regularizer(0.0, 10, 0.0).is_err());
    }

    #[test]
    fn quad_bound_examples() {
        assert_eq!(quad_pac_bound(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(quad_pac_bound(0.25, 0.0).unwrap(), 0.25);
        let b = quad_pac_bound(0.1, 0.04).unwrap();
        assert!((b - 0.3296662954709577).abs() < 1e-15);
        assert!(quad_pac_bound(1.1, 0.0).is_err());
        assert!(quad_pac_bound(0.5, -0.1).is_err());
    }

    #[test]
    fn empirical_cost_examples() {
        let q = dist(&[0.2, 0.5, 0.3]);
        assert!((empirical_posterior_cost(&[0.2, 0.2, 0.2], &q).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(
            empirical_posterior_cost(&[0.0, 1.0], &dist(&[1.0, 0.0])).unwrap(),
            0.0
        );
        let u = SimplexDistribution::uniform(3).unwrap();
        assert!((empirical_posterior_cost(&[0.1, 0.5, 0.9], &u).unwrap() - 0.5).abs() < 1e-15);
        assert!(empirical_posterior_cost(&[0.1], &u).is_err());
    }

    #[test]
    fn report_invariants_and_clamp() {
        let inputs = BoundInputs::new(5, 0.05, vec![0.9, 0.95]).unwrap();
        let q0 = SimplexDistribution::uniform(2).unwrap();
        let q = dist(&[0.8, 0.2]);
        let solver = SolverSummary {
            objective: 0.0,
            iterations: 0,
            converged: true,
            posterior: q.weights().to_vec(),
        };
        let prov = Provenance {
            master_seed: 1,
            stream_scheme: "s".into(),
            config_digest: "c".into(),
            real_env_digest: "r".into(),
            n_obstacles_real: 23,
            n_obstacles_gen: 23,
            horizon: 12,
        };
        let r = BoundReport::certify(&inputs, &q, &q0, 3, solver, prov).unwrap();
        assert!(r.raw_bound > 1.0);
        assert_eq!(r.pac_bound, 1.0);
        assert!(r.raw_bound >= r.empirical_cost);
        let floor = (2.0 * 5f64.sqrt() / 0.05).ln() / 10.0;
        assert!(r.regularizer > floor);
        let back: BoundReport = serde_json::from_str(&r.to_json()).unwrap();
        assert_eq!(back.schema, REPORT_SCHEMA);
        assert_eq!(back.m, 2);
    }

    fn simplex_point(m: usize) -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(0.01f64..1.0, m).prop_map(|v| {
            let s: f64 = v.iter().sum();
            v.into_iter().map(|x| x / s).collect()
        })
    }

    proptest! {
        #[test]
        fn kl_nonnegative_and_zero_on_diagonal(
            (a, b) in (1usize..8).prop_flat_map(|m| (simplex_point(m), simplex_point(m)))
        ) {
            let (qa, qb) = (dist(&a), dist(&b));
            let kl = kl_discrete(&qa, &qb).unwrap();
            prop_assert!(kl >= 0.0);
            prop_assert_eq!(kl_discrete(&qa, &qa).unwrap(), 0.0);
            let max_gap = a.iter().zip(&b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
            if max_gap > 1e-3 {
                prop_assert!(kl > 0.0);
            }
        }

        #[test]
        fn quad_bound_dominates_cost_plus_reg(c in 0.0f64..=1.0, r in 0.0f64..10.0) {
            let b = quad_pac_bound(c, r).unwrap();
            prop_assert!(b >= c + r - 1e-15 * (1.0 + c + r));
            prop_assert!(b >= c);
        }

        #[test]
        fn quad_bound_monotone(
            c in 0.0f64..=1.0, r in 0.0f64..2.0, dc in 0.0f64..1.0, dr in 0.0f64..1.0
        ) {
            let c2 = (c + dc).min(1.0);
            let base = quad_pac_bound(c, r).unwrap();
            prop_assert!(quad_pac_bound(c2, r).unwrap() >= base);
            prop_assert!(quad_pac_bound(c, r + dr).unwrap() >= base);
            prop_assert!(quad_pac_bound(c2, r + dr).unwrap() >= base);
        }

        #[test]
        fn regularizer_decreasing_in_n(
            kl in 0.0f64..20.0, delta in 1e-4f64..=0.5, n in 1usize..100_000, step in 1usize..100_000
        ) {
            let a = regularizer(kl, n, delta).unwrap();
            let b = regularizer(kl, n + step, delta).unwrap();
            prop_assert!(b < a);
        }
    }
}
