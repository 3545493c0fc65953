use std::f64::consts::{FRAC_PI_2, FRAC_PI_3, FRAC_PI_6, PI};

use pacgen::envsim::{
    raycast_scan, sample_environment, sample_synthetic_datasets, DistributionSpec, EnvironmentSpec,
    Obstacle, RayScan, RobotState, Role, SimConfig, Simulator, SyntheticDataset, ENV_SCHEMA,
};
use pacgen::es::dataset_loss;
use pacgen::pipeline::with_workers;
use pacgen::streams::stream_from_seed;
use rand::Rng;
use rayon::prelude::*;

const N_PARAMS: usize = 459;

/// Depth of the first of `samples` evenly spaced points along the ray that
/// is blocked.
fn sampled_depth(
    env: &EnvironmentSpec,
    state: &RobotState,
    angle: f64,
    d_max: f64,
    samples: usize,
) -> f64 {
    let (dx, dy) = (angle.cos(), angle.sin());
    let near: Vec<&Obstacle> = env
        .obstacles
        .iter()
        .filter(|o| (o.x - state.x).hypot(o.y - state.y) <= d_max + o.radius)
        .collect();
    for k in 1..=samples {
        let t = d_max * k as f64 / samples as f64;
        let (x, y) = (state.x + t * dx, state.y + t * dy);
        let blocked = x.abs() >= env.corridor_half_width
            || near
                .iter()
                .any(|o| (x - o.x).powi(2) + (y - o.y).powi(2) <= o.radius.powi(2));
        if blocked {
            return t;
        }
    }
    d_max
}

fn random_scene(rng: &mut impl Rng) -> (EnvironmentSpec, RobotState) {
    let dist = DistributionSpec::standard(Role::Real).with_obstacle_count(rng.random_range(0..30));
    let env = sample_environment(&dist, &mut stream_from_seed(rng.random()));
    let state = RobotState::new(
        rng.random_range(-4.5..4.5),
        rng.random_range(0.0..14.0),
        rng.random_range(-PI..PI),
    );
    (env, state)
}

#[test]
fn raycast_matches_dense_sampling() {
    let cfg = SimConfig::default();
    let mut rng = stream_from_seed(404);
    for _ in 0..40 {
        let (env, state) = random_scene(&mut rng);
        let scan = raycast_scan(&env, &state, cfg.n_rays, cfg.fov, cfg.d_max);
        for (k, &depth) in scan.depths.iter().enumerate() {
            assert!(depth > 0.0 && depth <= cfg.d_max);
            let angle =
                state.heading - cfg.fov / 2.0 + cfg.fov * k as f64 / (cfg.n_rays - 1) as f64;
            let oracle = sampled_depth(&env, &state, angle, cfg.d_max, 100_000);
            assert!(
                (depth - oracle).abs() < 1e-3,
                "ray {k}: {depth} vs {oracle}"
            );
        }
    }
}

// Independent matrix arithmetic: explicit 2D weight matrices.
fn reference_forward(theta: &[f64], scan: &RayScan, d_max: f64) -> usize {
    let (n_in, n_h, n_out) = (16, 16, 11);
    let w1: Vec<Vec<f64>> = (0..n_h)
        .map(|j| theta[j * n_in..(j + 1) * n_in].to_vec())
        .collect();
    let b1 = &theta[n_h * n_in..n_h * n_in + n_h];
    let off = n_h * n_in + n_h;
    let w2: Vec<Vec<f64>> = (0..n_out)
        .map(|k| theta[off + k * n_h..off + (k + 1) * n_h].to_vec())
        .collect();
    let b2 = &theta[off + n_out * n_h..];
    let x: Vec<f64> = scan.depths.iter().map(|d| d / d_max).collect();
    let mut h = vec![0.0; n_h];
    for j in 0..n_h {
        let mut acc = b1[j];
        for i in 0..n_in {
            acc += w1[j][i] * x[i];
        }
        h[j] = acc.tanh();
    }
    let mut scores = vec![0.0; n_out];
    for k in 0..n_out {
        scores[k] = b2[k] + (0..n_h).map(|j| w2[k][j] * h[j]).sum::<f64>();
    }
    let best = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    scores.iter().position(|&s| s == best).unwrap()
}

#[test]
fn policy_matches_reference_network() {
    let sim = Simulator::default();
    let mut rng = stream_from_seed(7);
    for _ in 0..500 {
        let theta: Vec<f64> = (0..N_PARAMS).map(|_| rng.random_range(-2.0..2.0)).collect();
        let scan = RayScan {
            depths: (0..16).map(|_| rng.random_range(0.01..5.0)).collect(),
        };
        assert_eq!(
            sim.select(&theta, &scan).unwrap(),
            reference_forward(&theta, &scan, 5.0)
        );
    }
}

fn straight_policy() -> Vec<f64> {
    let mut theta = vec![0.0; N_PARAMS];
    theta[N_PARAMS - 11 + 5] = 1.0;
    theta
}

#[test]
fn rollout_edge_cases() {
    let sim = Simulator::default();
    let empty = EnvironmentSpec::empty(5.0, 14.0);
    assert_eq!(
        sim.rollout_cost(&empty, &vec![0.0; N_PARAMS], 12).unwrap(),
        0.0
    );
    assert_eq!(
        sim.rollout_cost(&empty, &straight_policy(), 12).unwrap(),
        0.0
    );

    let blocked = EnvironmentSpec::empty(5.0, 14.0).with_obstacles([Obstacle {
        x: 0.0,
        y: 0.0,
        radius: 0.3,
    }]);
    assert_eq!(
        sim.rollout_cost(&blocked, &vec![0.0; N_PARAMS], 12)
            .unwrap(),
        1.0
    );
    assert!(sim.rollout_cost(&empty, &[0.0; 3], 12).is_err());
    assert!(sim.rollout_cost(&empty, &straight_policy(), 0).is_err());
}

#[test]
fn zero_policy_collides_on_fourth_cycle() {
    // The zero policy always takes primitive 0: a -pi/3 turn over 1.25 m, so
    // it circles clockwise around (rho, 0) with rho = 1.25 / (pi/3), covering
    // 60 degrees per cycle. After travelling angle a the robot sits at
    // (rho (1 - cos a), rho sin a). Put a small disk on the middle of the
    // fourth arc, a = 7 pi / 6.
    let rho = 1.25 / FRAC_PI_3;
    let a = 7.0 * FRAC_PI_6;
    let center = (rho * (1.0 - a.cos()), rho * a.sin());
    let env = EnvironmentSpec::empty(5.0, 14.0).with_obstacles([Obstacle {
        x: center.0,
        y: center.1,
        radius: 0.1,
    }]);
    // Arcs one to three end at a = pi; the nearest point of those arcs is
    // 2 rho sin(pi/12) away from the disk center.
    assert!(2.0 * rho * (PI / 12.0).sin() > 0.1);
    let sim = Simulator::default();
    assert_eq!(
        sim.rollout_cost(&env, &vec![0.0; N_PARAMS], 12).unwrap(),
        0.75
    );
}

fn on_grid(cost: f64, k: usize) -> bool {
    (0..=k).any(|j| cost == j as f64 / k as f64)
}

#[test]
fn rollout_costs_are_quantized() {
    let sim = Simulator::default();
    let mut rng = stream_from_seed(12);
    let dist = DistributionSpec::standard(Role::Real);
    for _ in 0..1000 {
        let env = sample_environment(&dist, &mut stream_from_seed(rng.random()));
        let theta: Vec<f64> = (0..N_PARAMS).map(|_| rng.random_range(-1.0..1.0)).collect();
        let cost = sim.rollout_cost(&env, &theta, 12).unwrap();
        assert!(on_grid(cost, 12), "{cost}");
    }
}

#[test]
fn adding_obstacles_never_helps_a_blind_policy() {
    // Policies that ignore the scan follow a fixed path, so an extra
    // obstacle can only bring the first collision earlier.
    let sim = Simulator::default();
    let mut rng = stream_from_seed(99);
    let dist = DistributionSpec::standard(Role::Real);
    for _ in 0..300 {
        let mut theta = vec![0.0; N_PARAMS];
        for b in theta.iter_mut().skip(N_PARAMS - 11) {
            *b = rng.random_range(-1.0..1.0);
        }
        let env = sample_environment(&dist, &mut stream_from_seed(rng.random()));
        let before = sim.rollout_cost(&env, &theta, 12).unwrap();
        let extra = sample_environment(
            &dist.clone().with_obstacle_count(1),
            &mut stream_from_seed(rng.random()),
        );
        let more = env.clone().with_obstacles(extra.obstacles);
        assert!(sim.rollout_cost(&more, &theta, 12).unwrap() >= before);
    }
}

#[test]
fn rollouts_are_deterministic_across_thread_counts() {
    let sim = Simulator::default();
    let dist = DistributionSpec::standard(Role::Real);
    let mut rng = stream_from_seed(3);
    let cases: Vec<(EnvironmentSpec, Vec<f64>)> = (0..64)
        .map(|_| {
            let env = sample_environment(&dist, &mut stream_from_seed(rng.random()));
            let theta = (0..N_PARAMS).map(|_| rng.random_range(-1.0..1.0)).collect();
            (env, theta)
        })
        .collect();
    let serial: Vec<f64> = cases
        .iter()
        .map(|(e, t)| sim.rollout_cost(e, t, 12).unwrap())
        .collect();
    let parallel: Vec<f64> = with_workers(4, || {
        cases
            .par_iter()
            .map(|(e, t)| sim.rollout_cost(e, t, 12).unwrap())
            .collect()
    })
    .unwrap();
    assert_eq!(serial, parallel);
}

// Open-loop re-simulation of the zero policy, written independently of the
// simulator: primitive 0 forever, 100 collision samples per arc, goal when
// an arc ends past the corridor.
fn zero_policy_cost(env: &EnvironmentSpec, horizon: usize) -> f64 {
    let turn = -FRAC_PI_3;
    let len = 1.25;
    let (mut x, mut y, mut h) = (0.0f64, 0.0f64, FRAC_PI_2);
    for cycle in 0..horizon {
        let kappa = turn / len;
        for i in 1..=100 {
            let s = len * i as f64 / 100.0;
            let px = x + ((h + kappa * s).sin() - h.sin()) / kappa;
            let py = y - ((h + kappa * s).cos() - h.cos()) / kappa;
            let hit = px.abs() >= env.corridor_half_width
                || env
                    .obstacles
                    .iter()
                    .any(|o| (px - o.x).hypot(py - o.y) <= o.radius);
            if hit {
                return (horizon - cycle) as f64 / horizon as f64;
            }
        }
        x += ((h + turn).sin() - h.sin()) / kappa;
        y -= ((h + turn).cos() - h.cos()) / kappa;
        h += turn;
        if y >= env.corridor_length {
            return 0.0;
        }
    }
    0.0
}

#[test]
fn dataset_loss_matches_resimulation() {
    let sim = Simulator::default();
    let dist = DistributionSpec::standard(Role::Generative);
    let data = sample_synthetic_datasets(&dist, 1, 5, 17).unwrap();
    let expected = data[0]
        .environments
        .iter()
        .map(|e| zero_policy_cost(e, 12))
        .sum::<f64>()
        / 5.0;
    let loss = dataset_loss(&sim, &vec![0.0; N_PARAMS], &data[0], 12).unwrap();
    assert_eq!(loss, expected);

    // Dense worlds so the re-simulation exercises collisions too.
    let dense = dist.with_obstacle_count(200);
    let data = sample_synthetic_datasets(&dense, 1, 5, 17).unwrap();
    let costs: Vec<f64> = data[0]
        .environments
        .iter()
        .map(|e| zero_policy_cost(e, 12))
        .collect();
    assert!(costs.iter().any(|&c| c > 0.0));
    let loss = dataset_loss(&sim, &vec![0.0; N_PARAMS], &data[0], 12).unwrap();
    assert!((loss - costs.iter().sum::<f64>() / 5.0).abs() < 1e-15);
}

#[test]
fn dataset_loss_is_a_mean() {
    let sim = Simulator::default();
    let free = EnvironmentSpec::empty(5.0, 14.0);
    let blocked = free.clone().with_obstacles([Obstacle {
        x: 0.0,
        y: 0.0,
        radius: 0.3,
    }]);
    let mut data =
        sample_synthetic_datasets(&DistributionSpec::standard(Role::Generative), 1, 1, 0)
            .unwrap()
            .remove(0);
    data.environments = vec![free.clone()];
    assert_eq!(
        dataset_loss(&sim, &vec![0.0; N_PARAMS], &data, 12).unwrap(),
        0.0
    );
    data.environments = vec![free, blocked];
    assert_eq!(
        dataset_loss(&sim, &vec![0.0; N_PARAMS], &data, 12).unwrap(),
        0.5
    );
    data.environments.clear();
    assert!(dataset_loss(&sim, &vec![0.0; N_PARAMS], &data, 12).is_err());
}

#[test]
fn dataset_json_round_trip() {
    let data =
        sample_synthetic_datasets(&DistributionSpec::standard(Role::Generative), 2, 3, 1).unwrap();
    let text = serde_json::to_string(&data[1]).unwrap();
    let back: SyntheticDataset = serde_json::from_str(&text).unwrap();
    assert_eq!(back, data[1]);
    assert_eq!(back.schema, ENV_SCHEMA);
}
