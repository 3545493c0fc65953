use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::digest::json_digest;
use crate::error::{Error, Result};
use crate::streams::{self, Stream};

pub const ENV_SCHEMA: &str = "pacgen_env_v1";

/// A disk obstacle; coordinates in meters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Obstacle {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

impl Obstacle {
    #[inline]
    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (dx, dy) = (x - self.x, y - self.y);
        dx * dx + dy * dy <= self.radius * self.radius
    }
}

/// A fully specified world: obstacles inside a corridor with walls at
/// `x = +-corridor_half_width`, running from `y = 0` to `y = corridor_length`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvironmentSpec {
    pub obstacles: Vec<Obstacle>,
    pub corridor_half_width: f64,
    pub corridor_length: f64,
}

impl EnvironmentSpec {
    pub fn empty(corridor_half_width: f64, corridor_length: f64) -> Self {
        Self {
            obstacles: Vec::new(),
            corridor_half_width,
            corridor_length,
        }
    }

    pub fn with_obstacles(mut self, obstacles: impl IntoIterator<Item = Obstacle>) -> Self {
        self.obstacles.extend(obstacles);
        self
    }

    /// True if `(x, y)` is inside an obstacle or beyond a corridor wall.
    #[inline]
    pub fn is_blocked(&self, x: f64, y: f64) -> bool {
        x.abs() >= self.corridor_half_width || self.obstacles.iter().any(|o| o.contains(x, y))
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Real,
    Generative,
}

/// Parameters of an environment distribution. Both the real-world
/// distribution and the generative model are instances of this.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub role: Role,
    pub n_obstacles: usize,
    pub r_min: f64,
    pub r_max: f64,
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
    pub corridor_half_width: f64,
    pub corridor_length: f64,
}

impl DistributionSpec {
    /// 23 obstacles, radii uniform on [5 cm, 30 cm], centers uniform on
    /// [-5 m, 5 m] x [0 m, 14 m].
    pub fn standard(role: Role) -> Self {
        Self {
            role,
            n_obstacles: 23,
            r_min: 0.05,
            r_max: 0.30,
            x_min: -5.0,
            x_max: 5.0,
            y_min: 0.0,
            y_max: 14.0,
            corridor_half_width: 5.0,
            corridor_length: 14.0,
        }
    }

    pub fn with_obstacle_count(mut self, n: usize) -> Self {
        self.n_obstacles = n;
        self
    }

    pub fn validate(&self, path: &str) -> Result<()> {
        let field = |f: &str| format!("{path}.{f}");
        let finite = [
            ("r_min", self.r_min),
            ("r_max", self.r_max),
            ("x_min", self.x_min),
            ("x_max", self.x_max),
            ("y_min", self.y_min),
            ("y_max", self.y_max),
            ("corridor_half_width", self.corridor_half_width),
            ("corridor_length", self.corridor_length),
        ];
        if let Some((name, _)) = finite.iter().find(|(_, v)| !v.is_finite()) {
            return Err(Error::config(field(name), "must be finite"));
        }
        if !(self.r_min > 0.0 && self.r_min < self.r_max) {
            return Err(Error::config(field("r_min"), "need 0 < r_min < r_max"));
        }
        if !(self.x_min < self.x_max) {
            return Err(Error::config(field("x_min"), "sampling rectangle is empty"));
        }
        if !(self.y_min < self.y_max) {
            return Err(Error::config(field("y_min"), "sampling rectangle is empty"));
        }
        if !(self.corridor_half_width > 0.0) {
            return Err(Error::config(
                field("corridor_half_width"),
                "must be positive",
            ));
        }
        if !(self.corridor_length > 0.0) {
            return Err(Error::config(field("corridor_length"), "must be positive"));
        }
        Ok(())
    }

    pub fn digest(&self) -> String {
        json_digest(self)
    }
}

/// Draw one environment. For each obstacle the radius is drawn first, then
/// the center `x`, then `y`.
pub fn sample_environment(dist: &DistributionSpec, stream: &mut Stream) -> EnvironmentSpec {
    let obstacles = (0..dist.n_obstacles)
        .map(|_| {
            let radius = stream.random_range(dist.r_min..=dist.r_max);
            let x = stream.random_range(dist.x_min..=dist.x_max);
            let y = stream.random_range(dist.y_min..=dist.y_max);
            Obstacle { x, y, radius }
        })
        .collect();
    EnvironmentSpec {
        obstacles,
        corridor_half_width: dist.corridor_half_width,
        corridor_length: dist.corridor_length,
    }
}

/// The `index`-th environment of a named family (`REAL`, `EVAL`, ...).
pub fn environment_at(
    dist: &DistributionSpec,
    master_seed: u64,
    tag: &str,
    index: usize,
) -> EnvironmentSpec {
    sample_environment(
        dist,
        &mut streams::stream(master_seed, tag, &[index as u64]),
    )
}

/// `count` real-world environments; environment `i` depends only on
/// `(master_seed, i)`, so a larger sample extends a smaller one.
pub fn sample_real_environments(
    dist: &DistributionSpec,
    count: usize,
    master_seed: u64,
) -> Vec<EnvironmentSpec> {
    (0..count)
        .map(|i| environment_at(dist, master_seed, streams::REAL, i))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetProvenance {
    pub master_seed: u64,
    pub dataset_index: usize,
    pub distribution_digest: String,
}

/// An ordered list of generated environments. It identifies one trained
/// policy.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub schema: String,
    pub environments: Vec<EnvironmentSpec>,
    pub provenance: DatasetProvenance,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.environments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.environments.is_empty()
    }

    pub fn digest(&self) -> String {
        json_digest(&self.environments)
    }
}

/// `m` datasets of `l` environments; environment `j` of dataset `i` comes
/// from the stream `(master_seed, GEN, i, j)`.
pub fn sample_synthetic_datasets(
    dist: &DistributionSpec,
    m: usize,
    l: usize,
    master_seed: u64,
) -> Result<Vec<SyntheticDataset>> {
    if m == 0 || l == 0 {
        return Err(Error::domain(format!(
            "need m >= 1 and l >= 1, got m = {m}, l = {l}"
        )));
    }
    let distribution_digest = dist.digest();
    Ok((0..m)
        .map(|i| SyntheticDataset {
            schema: ENV_SCHEMA.to_string(),
            environments: (0..l)
                .map(|j| {
                    let mut s = streams::stream(master_seed, streams::GEN, &[i as u64, j as u64]);
                    sample_environment(dist, &mut s)
                })
                .collect(),
            provenance: DatasetProvenance {
                master_seed,
                dataset_index: i,
                distribution_digest: distribution_digest.clone(),
            },
        })
        .collect())
}
