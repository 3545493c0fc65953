use serde::{Deserialize, Serialize};

use super::motion::RobotState;
use super::world::{EnvironmentSpec, Obstacle};

/// Smallest depth reported when the robot starts inside an obstacle or wall.
const MIN_DEPTH: f64 = 1e-9;

/// Range readings in `(0, d_max]`, ordered from the rightmost ray
/// (`heading - fov/2`) to the leftmost.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RayScan {
    pub depths: Vec<f64>,
}

/// Ray bearing for ray `k` of `n` spread evenly across `fov`.
pub(crate) fn ray_angle(heading: f64, k: usize, n: usize, fov: f64) -> f64 {
    if n == 1 {
        heading
    } else {
        heading - fov / 2.0 + fov * k as f64 / (n - 1) as f64
    }
}

/// Distance along the ray `(x, y) + t (dx, dy)` to the first obstacle or
/// wall, capped at `d_max`. `(dx, dy)` must be a unit vector.
fn cast(
    env: &EnvironmentSpec,
    obstacles: &[&Obstacle],
    x: f64,
    y: f64,
    dx: f64,
    dy: f64,
    d_max: f64,
) -> f64 {
    let w = env.corridor_half_width;
    if x.abs() >= w {
        return MIN_DEPTH;
    }
    let mut best = d_max;
    if dx > 0.0 {
        best = best.min((w - x) / dx);
    } else if dx < 0.0 {
        best = best.min((-w - x) / dx);
    }
    for o in obstacles {
        let (fx, fy) = (x - o.x, y - o.y);
        let c = fx * fx + fy * fy - o.radius * o.radius;
        if c <= 0.0 {
            return MIN_DEPTH;
        }
        let b = fx * dx + fy * dy;
        if b >= 0.0 {
            // Moving away from the center while outside the disk.
            continue;
        }
        let disc = b * b - c;
        if disc < 0.0 {
            continue;
        }
        let t = -b - disc.sqrt();
        if t < best {
            best = t;
        }
    }
    best.max(MIN_DEPTH)
}

/// Fan of `n_ray` rays centered on the robot heading.
pub fn raycast_scan(
    env: &EnvironmentSpec,
    state: &RobotState,
    n_ray: usize,
    fov: f64,
    d_max: f64,
) -> RayScan {
    // Obstacles farther than `d_max + radius` cannot be reached.
    let nearby: Vec<&Obstacle> = env
        .obstacles
        .iter()
        .filter(|o| {
            let (fx, fy) = (o.x - state.x, o.y - state.y);
            let r = d_max + o.radius;
            fx * fx + fy * fy <= r * r
        })
        .collect();
    let depths = (0..n_ray)
        .map(|k| {
            let a = ray_angle(state.heading, k, n_ray, fov);
            cast(env, &nearby, state.x, state.y, a.cos(), a.sin(), d_max)
        })
        .collect();
    RayScan { depths }
}
