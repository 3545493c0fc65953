//! Desk-scale 2D corridor navigation: a point robot with a fan of range
//! rays picks one of a fixed set of circular-arc motion primitives at every
//! step, and a rollout costs `1 - k/K` where `k` counts primitives executed
//! before the first collision.

mod motion;
mod policy;
mod sensor;
mod world;

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use motion::{
    execute_primitive, rollout_cost, MotionPrimitive, PrimitiveLibrary, RobotState, ARC_SAMPLES,
};
pub use policy::{policy_forward, PolicyArchitecture};
pub use sensor::{raycast_scan, RayScan};
pub use world::{
    environment_at, sample_environment, sample_real_environments, sample_synthetic_datasets,
    DatasetProvenance, DistributionSpec, EnvironmentSpec, Obstacle, Role, SyntheticDataset,
    ENV_SCHEMA,
};

/// Sensor, action set and policy shape shared by every rollout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimConfig {
    pub n_rays: usize,
    /// Total angular width of the ray fan, radians.
    pub fov: f64,
    /// Sensor range, meters.
    pub d_max: f64,
    pub n_primitives: usize,
    /// Heading changes are spread evenly over `[-max_turn, max_turn]`.
    pub max_turn: f64,
    /// Arc length of every primitive, meters.
    pub arc_length: f64,
    pub hidden: usize,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_rays: 16,
            fov: 2.0 * PI / 3.0,
            d_max: 5.0,
            n_primitives: 11,
            max_turn: PI / 3.0,
            arc_length: 1.25,
            hidden: 16,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_rays == 0 {
            return Err(Error::config("simulator.n_rays", "must be at least 1"));
        }
        if !(self.fov >= 0.0 && self.fov < 2.0 * PI) {
            return Err(Error::config("simulator.fov", "must lie in [0, 2 pi)"));
        }
        if !(self.d_max > 0.0 && self.d_max.is_finite()) {
            return Err(Error::config("simulator.d_max", "must be positive"));
        }
        if self.n_primitives < 2 {
            return Err(Error::config(
                "simulator.n_primitives",
                "need at least 2 primitives",
            ));
        }
        if !(self.max_turn > 0.0 && self.max_turn <= PI) {
            return Err(Error::config("simulator.max_turn", "must lie in (0, pi]"));
        }
        if !(self.arc_length > 0.0 && self.arc_length.is_finite()) {
            return Err(Error::config("simulator.arc_length", "must be positive"));
        }
        if self.hidden == 0 {
            return Err(Error::config("simulator.hidden", "must be at least 1"));
        }
        Ok(())
    }

    pub fn architecture(&self) -> PolicyArchitecture {
        PolicyArchitecture {
            inputs: self.n_rays,
            hidden: self.hidden,
            outputs: self.n_primitives,
        }
    }

    pub fn primitives(&self) -> PrimitiveLibrary {
        PrimitiveLibrary::evenly_spaced(self.n_primitives, self.max_turn, self.arc_length)
    }

    pub fn simulator(&self) -> Simulator {
        Simulator {
            config: self.clone(),
            architecture: self.architecture(),
            primitives: self.primitives(),
        }
    }
}

/// A ready-to-run simulator built from a [`SimConfig`].
#[derive(Debug, Clone)]
pub struct Simulator {
    config: SimConfig,
    architecture: PolicyArchitecture,
    primitives: PrimitiveLibrary,
}

impl Default for Simulator {
    fn default() -> Self {
        SimConfig::default().simulator()
    }
}

impl Simulator {
    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn architecture(&self) -> &PolicyArchitecture {
        &self.architecture
    }

    pub fn primitives(&self) -> &PrimitiveLibrary {
        &self.primitives
    }

    pub fn scan(&self, env: &EnvironmentSpec, state: &RobotState) -> RayScan {
        raycast_scan(
            env,
            state,
            self.config.n_rays,
            self.config.fov,
            self.config.d_max,
        )
    }

    pub fn select(&self, theta: &[f64], scan: &RayScan) -> Result<usize> {
        policy_forward(&self.architecture, theta, scan, self.config.d_max)
    }

    pub fn rollout_cost(
        &self,
        env: &EnvironmentSpec,
        theta: &[f64],
        horizon: usize,
    ) -> Result<f64> {
        rollout_cost(self, env, theta, horizon)
    }
}
