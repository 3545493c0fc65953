use std::path::PathBuf;

use serde::{Deserialize, Deserializer, Serialize};

use crate::digest::json_digest;
use crate::envsim::{DistributionSpec, Role, SimConfig};
use crate::error::{Error, Result};
use crate::es::EsParams;
use crate::simplex::SolverConfig;

pub const CONFIG_SCHEMA: &str = "pacgen_config_v1";

fn default_n_real() -> usize {
    100
}
fn default_m() -> usize {
    50
}
fn default_l() -> usize {
    50
}
fn default_horizon() -> usize {
    12
}
fn default_delta() -> f64 {
    0.01
}
fn default_real() -> DistributionSpec {
    DistributionSpec::standard(Role::Real)
}
fn default_generative() -> DistributionSpec {
    DistributionSpec::standard(Role::Generative)
}
fn default_output_dir() -> PathBuf {
    PathBuf::from("runs/latest")
}

/// Everything that determines an experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: String,
    #[serde(default)]
    pub master_seed: u64,
    /// Number of real-world training environments.
    #[serde(default = "default_n_real")]
    pub n_real: usize,
    /// Number of synthetic datasets (support of the prior).
    #[serde(default = "default_m")]
    pub m: usize,
    /// Environments per synthetic dataset.
    #[serde(default = "default_l")]
    pub l: usize,
    /// Primitive executions per rollout.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_delta")]
    pub delta: f64,
    #[serde(default = "default_real", deserialize_with = "real_section")]
    pub real: DistributionSpec,
    #[serde(
        default = "default_generative",
        deserialize_with = "generative_section"
    )]
    pub generative: DistributionSpec,
    #[serde(default)]
    pub simulator: SimConfig,
    #[serde(default)]
    pub es: EsParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            schema_version: CONFIG_SCHEMA.to_string(),
            master_seed: 0,
            n_real: default_n_real(),
            m: default_m(),
            l: default_l(),
            horizon: default_horizon(),
            delta: default_delta(),
            real: default_real(),
            generative: default_generative(),
            simulator: SimConfig::default(),
            es: EsParams::default(),
            solver: SolverConfig::default(),
            output_dir: default_output_dir(),
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != CONFIG_SCHEMA {
            return Err(Error::config(
                "schema_version",
                format!("expected `{CONFIG_SCHEMA}`, got `{}`", self.schema_version),
            ));
        }
        if self.n_real == 0 {
            return Err(Error::config("n_real", "must be at least 1"));
        }
        if self.m == 0 {
            return Err(Error::config("m", "must be at least 1"));
        }
        if self.l == 0 {
            return Err(Error::config("l", "must be at least 1"));
        }
        if self.horizon == 0 {
            return Err(Error::config("horizon", "must be at least 1"));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) {
            return Err(Error::config(
                "delta",
                format!("{} is outside (0, 1)", self.delta),
            ));
        }
        if self.real.role != Role::Real {
            return Err(Error::config("real.role", "must be `real`"));
        }
        if self.generative.role != Role::Generative {
            return Err(Error::config("generative.role", "must be `generative`"));
        }
        self.real.validate("real")?;
        self.generative.validate("generative")?;
        self.simulator.validate()?;
        self.es.validate()?;
        self.solver.validate()?;
        if self.solver.floor > 1.0 / self.m as f64 {
            return Err(Error::config("solver.floor", "must not exceed 1/m"));
        }
        Ok(())
    }

    /// Digest of every field that affects results (the output directory
    /// does not).
    pub fn digest(&self) -> String {
        let mut c = self.clone();
        c.output_dir = PathBuf::new();
        json_digest(&c)
    }
}

/// A distribution section where every field is optional and falls back to
/// the standard distribution for the section's role.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartialDistribution {
    role: Option<Role>,
    n_obstacles: Option<usize>,
    r_min: Option<f64>,
    r_max: Option<f64>,
    x_min: Option<f64>,
    x_max: Option<f64>,
    y_min: Option<f64>,
    y_max: Option<f64>,
    corridor_half_width: Option<f64>,
    corridor_length: Option<f64>,
}

impl PartialDistribution {
    fn resolve(self, role: Role) -> DistributionSpec {
        let base = DistributionSpec::standard(role);
        DistributionSpec {
            role: self.role.unwrap_or(role),
            n_obstacles: self.n_obstacles.unwrap_or(base.n_obstacles),
            r_min: self.r_min.unwrap_or(base.r_min),
            r_max: self.r_max.unwrap_or(base.r_max),
            x_min: self.x_min.unwrap_or(base.x_min),
            x_max: self.x_max.unwrap_or(base.x_max),
            y_min: self.y_min.unwrap_or(base.y_min),
            y_max: self.y_max.unwrap_or(base.y_max),
            corridor_half_width: self.corridor_half_width.unwrap_or(base.corridor_half_width),
            corridor_length: self.corridor_length.unwrap_or(base.corridor_length),
        }
    }
}

fn real_section<'de, D: Deserializer<'de>>(d: D) -> Result<DistributionSpec, D::Error> {
    PartialDistribution::deserialize(d).map(|p| p.resolve(Role::Real))
}

fn generative_section<'de, D: Deserializer<'de>>(d: D) -> Result<DistributionSpec, D::Error> {
    PartialDistribution::deserialize(d).map(|p| p.resolve(Role::Generative))
}
