use std::f64::consts::{FRAC_PI_2, PI};

use serde::{Deserialize, Serialize};

use super::world::EnvironmentSpec;
use super::Simulator;
use crate::error::{Error, Result};

/// Collision samples per primitive, evenly spaced in arc length.
pub const ARC_SAMPLES: usize = 100;

const STRAIGHT_CURVATURE: f64 = 1e-12;

/// Planar pose; heading is measured from the +x axis and kept in `(-pi, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RobotState {
    pub x: f64,
    pub y: f64,
    pub heading: f64,
}

pub(crate) fn wrap_angle(a: f64) -> f64 {
    let mut w = a.rem_euclid(2.0 * PI);
    if w > PI {
        w -= 2.0 * PI;
    }
    w
}

impl RobotState {
    pub fn new(x: f64, y: f64, heading: f64) -> Self {
        Self {
            x,
            y,
            heading: wrap_angle(heading),
        }
    }

    /// Corridor entrance, facing down the corridor (+y).
    pub fn start() -> Self {
        Self::new(0.0, 0.0, FRAC_PI_2)
    }
}

/// A constant-curvature arc.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionPrimitive {
    pub length: f64,
    pub heading_change: f64,
}

impl MotionPrimitive {
    /// Pose after travelling `s` meters along the arc from `from`.
    pub fn pose_at(&self, from: &RobotState, s: f64) -> RobotState {
        let kappa = self.heading_change / self.length;
        let (sin0, cos0) = from.heading.sin_cos();
        if kappa.abs() < STRAIGHT_CURVATURE {
            return RobotState {
                x: from.x + s * cos0,
                y: from.y + s * sin0,
                heading: from.heading,
            };
        }
        let h = from.heading + kappa * s;
        let (sin1, cos1) = h.sin_cos();
        RobotState {
            x: from.x + (sin1 - sin0) / kappa,
            y: from.y - (cos1 - cos0) / kappa,
            heading: wrap_angle(h),
        }
    }
}

/// The robot's action set, in a fixed order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PrimitiveLibrary {
    primitives: Vec<MotionPrimitive>,
}

impl PrimitiveLibrary {
    /// `count` arcs of equal length with heading changes evenly spaced over
    /// `[-max_turn, max_turn]`; index 0 is the hardest right turn.
    pub fn evenly_spaced(count: usize, max_turn: f64, length: f64) -> Self {
        assert!(count >= 2, "primitive library needs at least two entries");
        let primitives = (0..count)
            .map(|k| MotionPrimitive {
                length,
                heading_change: -max_turn + 2.0 * max_turn * k as f64 / (count - 1) as f64,
            })
            .collect();
        Self { primitives }
    }

    pub fn new(primitives: Vec<MotionPrimitive>) -> Result<Self> {
        if primitives.len() < 2 {
            return Err(Error::domain(
                "primitive library needs at least two entries",
            ));
        }
        for (i, a) in primitives.iter().enumerate() {
            if !(a.length > 0.0) {
                return Err(Error::domain(format!(
                    "primitive {i} has non-positive length"
                )));
            }
            if primitives[..i].contains(a) {
                return Err(Error::domain(format!(
                    "primitive {i} duplicates an earlier one"
                )));
            }
        }
        Ok(Self { primitives })
    }

    pub fn len(&self) -> usize {
        self.primitives.len()
    }

    pub fn is_empty(&self) -> bool {
        self.primitives.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&MotionPrimitive> {
        self.primitives.get(index)
    }

    pub fn iter(&self) -> impl Iterator<Item = &MotionPrimitive> {
        self.primitives.iter()
    }
}

/// Drive `primitive` from `state`. The arc is checked at [`ARC_SAMPLES`]
/// evenly spaced points; on the first blocked point the robot stops there
/// and the collision flag is set.
pub fn execute_primitive(
    env: &EnvironmentSpec,
    state: &RobotState,
    primitive: &MotionPrimitive,
) -> (RobotState, bool) {
    // Every point of the arc lies within `length` of the start.
    let reach = primitive.length;
    // Also drop disks that stay clear of the whole circle (or line) the arc
    // lies on; the margin keeps the filter conservative under rounding.
    let kappa = primitive.heading_change / primitive.length;
    let (sin0, cos0) = state.heading.sin_cos();
    let nearby: Vec<_> = env
        .obstacles
        .iter()
        .filter(|o| {
            let (dx, dy) = (o.x - state.x, o.y - state.y);
            let r = reach + o.radius;
            if dx * dx + dy * dy > r * r {
                return false;
            }
            let margin = o.radius + 1e-9;
            if kappa.abs() < STRAIGHT_CURVATURE {
                (dy * cos0 - dx * sin0).abs() <= margin
            } else {
                let rho = 1.0 / kappa;
                let (cx, cy) = (-rho * sin0, rho * cos0);
                ((dx - cx).hypot(dy - cy) - rho.abs()).abs() <= margin
            }
        })
        .collect();
    let wall = env.corridor_half_width;
    let near_wall = state.x.abs() + reach >= wall;
    if nearby.is_empty() && !near_wall {
        return (primitive.pose_at(state, primitive.length), false);
    }

    for i in 1..=ARC_SAMPLES {
        let s = primitive.length * i as f64 / ARC_SAMPLES as f64;
        let p = primitive.pose_at(state, s);
        if (near_wall && p.x.abs() >= wall) || nearby.iter().any(|o| o.contains(p.x, p.y)) {
            return (p, true);
        }
    }
    (primitive.pose_at(state, primitive.length), false)
}

/// Cost `1 - k/horizon` of one closed-loop run from [`RobotState::start`].
///
/// Each cycle scans, selects a primitive and executes it. `k` counts
/// collision-free executions; the run stops at the first collision. Ending a
/// primitive past the far end of the corridor finishes the run with every
/// remaining execution counted as a success.
pub fn rollout_cost(
    sim: &Simulator,
    env: &EnvironmentSpec,
    theta: &[f64],
    horizon: usize,
) -> Result<f64> {
    if horizon == 0 {
        return Err(Error::domain("rollout horizon must be positive"));
    }
    let mut state = RobotState::start();
    let mut successes = 0;
    for _ in 0..horizon {
        let scan = sim.scan(env, &state);
        let index = sim.select(theta, &scan)?;
        let primitive = sim.primitives().get(index).ok_or_else(|| {
            Error::domain(format!(
                "policy chose primitive {index} outside the library"
            ))
        })?;
        let (next, collided) = execute_primitive(env, &state, primitive);
        if collided {
            break;
        }
        successes += 1;
        state = next;
        if state.y >= env.corridor_length {
            successes = horizon;
            break;
        }
    }
    Ok((horizon - successes) as f64 / horizon as f64)
}
