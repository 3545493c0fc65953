use std::fs;
use std::path::Path;

use pacgen::bound::{kl_discrete, quad_pac_bound, regularizer};
use pacgen::digest::round_sig;
use pacgen::envsim::{DistributionSpec, Role, Simulator};
use pacgen::es::{derive_es_seed, pushforward_policies, train_policy, EsParams, PolicyParams};
use pacgen::pipeline::{
    build_cost_matrix, estimate_true_cost, evaluate_run, execute, read_sweep_cells, run_pipeline,
    run_pipeline_full, sweep, with_workers, ExperimentConfig, RunDir, SweepAxis, COST_MATRIX_FILE,
    REPORT_FILE, SWEEP_FILE,
};
use pacgen::SimplexDistribution;

fn smoke_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        n_real: 20,
        m: 5,
        l: 5,
        es: EsParams {
            iterations: 50,
            ..EsParams::default()
        },
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

fn tiny_config(dir: &Path) -> ExperimentConfig {
    ExperimentConfig {
        n_real: 8,
        m: 3,
        l: 2,
        es: EsParams {
            iterations: 5,
            population_size: 8,
            ..EsParams::default()
        },
        output_dir: dir.to_path_buf(),
        ..ExperimentConfig::default()
    }
}

#[test]
fn smoke_run_writes_consistent_artifacts() {
    let tmp = tempfile::tempdir().unwrap();
    let config = smoke_config(tmp.path());
    let report = run_pipeline(&config).unwrap();
    let dir = RunDir::new(tmp.path());

    assert_eq!(dir.read_report().unwrap(), {
        // The persisted report carries 12 significant digits.
        let text = fs::read_to_string(tmp.path().join(REPORT_FILE)).unwrap();
        serde_json::from_str(&text).unwrap()
    });
    assert!(report.raw_bound >= report.empirical_cost);
    assert!(report.pac_bound <= 1.0);
    assert_eq!((report.n_real, report.m, report.l), (20, 5, 5));
    assert_eq!(dir.read_config().unwrap(), config);
    assert_eq!(dir.read_real_environments().unwrap().len(), 20);
    for i in 0..5 {
        assert_eq!(dir.read_dataset(i).unwrap().len(), 5);
    }
    assert!(dir.read_eval().unwrap().is_none());

    // C . q recomputed from the persisted matrix and posterior.
    let matrix = dir.read_cost_matrix().unwrap();
    let posterior = dir.read_posterior().unwrap();
    assert_eq!(matrix.column_means(), posterior.cost_vector);
    let cq: f64 = posterior
        .cost_vector
        .iter()
        .zip(posterior.posterior.weights())
        .map(|(c, w)| c * w)
        .sum();
    assert_eq!(cq, report.empirical_cost);
    let kl = kl_discrete(&posterior.posterior, &posterior.prior).unwrap();
    assert_eq!(kl, report.kl);
    let reg = regularizer(kl, 20, config.delta).unwrap();
    assert_eq!(quad_pac_bound(cq, reg).unwrap(), report.raw_bound);

    // Persisted policies reproduce every matrix entry.
    let policies = dir.read_policies(5).unwrap();
    let envs = dir.read_real_environments().unwrap();
    let sim = config.simulator.simulator();
    for (i, env) in envs.iter().enumerate() {
        for (j, p) in policies.iter().enumerate() {
            assert_eq!(
                sim.rollout_cost(env, p.as_slice(), 12).unwrap(),
                matrix.get(i, j)
            );
        }
    }
}

#[test]
fn single_dataset_bound_has_no_kl() {
    let tmp = tempfile::tempdir().unwrap();
    let config = ExperimentConfig {
        m: 1,
        ..tiny_config(tmp.path())
    };
    let run = execute(&config).unwrap();
    let c = run.cost_vector[0];
    let n = config.n_real as f64;
    let r = ((2.0 * n.sqrt() / config.delta).ln()) / (2.0 * n);
    let expected = ((c + r).sqrt() + r.sqrt()).powi(2);
    assert_eq!(run.report.kl, 0.0);
    assert!((run.report.raw_bound - expected).abs() < 1e-12);
    assert_eq!(run.report.solver.posterior, vec![1.0]);
}

#[test]
fn results_do_not_depend_on_worker_count() {
    let read = |dir: &Path| {
        (
            fs::read(dir.join(REPORT_FILE)).unwrap(),
            fs::read(dir.join(COST_MATRIX_FILE)).unwrap(),
        )
    };
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    with_workers(1, || run_pipeline(&tiny_config(a.path())).unwrap()).unwrap();
    with_workers(4, || run_pipeline(&tiny_config(b.path())).unwrap()).unwrap();
    assert_eq!(read(a.path()), read(b.path()));
}

#[test]
fn same_seed_same_report_and_different_seed_differs() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    let a = execute(&config).unwrap();
    let b = execute(&config).unwrap();
    assert_eq!(a.report.to_json(), b.report.to_json());
    let c = execute(&ExperimentConfig {
        master_seed: 1,
        ..config
    })
    .unwrap();
    assert_ne!(
        a.report.provenance.real_env_digest,
        c.report.provenance.real_env_digest
    );
}

#[test]
fn cost_matrix_matches_cell_by_cell() {
    let tmp = tempfile::tempdir().unwrap();
    let run = execute(&tiny_config(tmp.path())).unwrap();
    let sim = Simulator::default();
    let matrix = build_cost_matrix(&sim, &run.policies, &run.real_envs, 12).unwrap();
    for (i, env) in run.real_envs.iter().enumerate() {
        for (j, p) in run.policies.iter().enumerate() {
            assert_eq!(
                matrix.get(i, j),
                sim.rollout_cost(env, p.as_slice(), 12).unwrap()
            );
        }
    }
    assert_eq!(matrix.row_labels, run.cost_matrix.row_labels);
}

#[test]
fn parallel_pushforward_matches_serial_training() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    let run = execute(&config).unwrap();
    let sim = Simulator::default();
    let parallel = with_workers(3, || {
        pushforward_policies(&sim, &run.datasets, &config.es, 0, 12).unwrap()
    })
    .unwrap();
    let init = PolicyParams::zeros(459);
    for (i, d) in run.datasets.iter().enumerate() {
        let serial = train_policy(
            &sim,
            d,
            12,
            &config.es.with_seed(derive_es_seed(0, i)),
            &init,
        )
        .unwrap();
        assert_eq!(serial, parallel[i]);
        let rounded: Vec<f64> = serial.0.iter().map(|&x| round_sig(x)).collect();
        assert_eq!(rounded, run.policies[i].0);
    }
}

#[test]
fn sweep_cells_share_real_environments_per_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tiny_config(tmp.path());
    let rows = sweep(&base, SweepAxis::NObstaclesGen, &[5, 23], &[0, 1]).unwrap();
    assert_eq!(rows.len(), 4);
    let digest = |value: usize, seed: u64| {
        let row = rows
            .iter()
            .find(|r| r.value == value && r.seed == seed)
            .unwrap();
        row.outcome
            .as_ref()
            .unwrap()
            .provenance
            .real_env_digest
            .clone()
    };
    assert_eq!(digest(5, 0), digest(23, 0));
    assert_eq!(digest(5, 1), digest(23, 1));
    assert_ne!(digest(5, 0), digest(5, 1));
    for r in &rows {
        let report = r.outcome.as_ref().unwrap();
        assert_eq!(report.provenance.n_obstacles_gen, r.value);
        assert_eq!(report.provenance.master_seed, r.seed);
    }

    assert!(tmp.path().join(SWEEP_FILE).exists());
    let cells = read_sweep_cells(tmp.path()).unwrap();
    assert_eq!(cells.len(), 4);
    for (dir, ok) in cells {
        assert!(ok);
        dir.read_report().unwrap();
    }
}

#[test]
fn sweep_records_failed_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tiny_config(tmp.path());
    let rows = sweep(&base, SweepAxis::NReal, &[0, 4], &[2]).unwrap();
    assert!(rows[0].outcome.as_ref().unwrap_err().contains("n_real"));
    assert!(rows[1].outcome.is_ok());
    let cells = read_sweep_cells(tmp.path()).unwrap();
    assert_eq!(
        cells.iter().map(|c| c.1).collect::<Vec<_>>(),
        vec![false, true]
    );
    assert!("n_real".parse::<SweepAxis>().is_ok());
    assert!("bogus".parse::<SweepAxis>().is_err());
}

#[test]
fn true_cost_estimate_is_consistent() {
    let tmp = tempfile::tempdir().unwrap();
    let config = tiny_config(tmp.path());
    let run = run_pipeline_full(&config).unwrap();
    let sim = Simulator::default();
    let real = DistributionSpec::standard(Role::Real);

    // A point mass on policy j gives that policy's mean cost.
    let j = 1;
    let point = SimplexDistribution::point_mass(3, j).unwrap();
    let est = estimate_true_cost(&sim, &point, &run.policies, &real, 12, 40, 9).unwrap();
    let single = estimate_true_cost(
        &sim,
        &SimplexDistribution::uniform(1).unwrap(),
        &run.policies[j..=j],
        &real,
        12,
        40,
        9,
    )
    .unwrap();
    assert_eq!(est, single);

    // Linear in the posterior.
    let q = run.solve.posterior.clone();
    let mix = estimate_true_cost(&sim, &q, &run.policies, &real, 12, 40, 9).unwrap();
    let parts: f64 = (0..3)
        .map(|k| {
            let p = SimplexDistribution::point_mass(3, k).unwrap();
            q.weights()[k]
                * estimate_true_cost(&sim, &p, &run.policies, &real, 12, 40, 9)
                    .unwrap()
                    .estimate
        })
        .sum();
    assert!((mix.estimate - parts).abs() < 1e-12);
    assert!(mix.standard_error_defined);

    let one = estimate_true_cost(&sim, &q, &run.policies, &real, 12, 1, 9).unwrap();
    assert!(!one.standard_error_defined);
    assert!(estimate_true_cost(&sim, &q, &run.policies, &real, 12, 0, 9).is_err());
    assert!(estimate_true_cost(&sim, &point, &run.policies[..2], &real, 12, 5, 9).is_err());

    // Persisted evaluation reproduces the in-memory one.
    let dir = RunDir::new(tmp.path());
    let record = evaluate_run(&dir, 40, Some(9)).unwrap();
    assert_eq!(record.estimate, mix.estimate);
    let persisted = dir.read_eval().unwrap().unwrap();
    assert_eq!(persisted.estimate, round_sig(record.estimate));
    assert_eq!(persisted.standard_error, round_sig(record.standard_error));
}

#[test]
fn invalid_configs_fail_before_work() {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = tiny_config(tmp.path());
    config.delta = 1.5;
    let err = run_pipeline(&config).unwrap_err().to_string();
    assert!(err.contains("delta"), "{err}");
    assert!(!tmp.path().join(REPORT_FILE).exists());

    let mut config = tiny_config(tmp.path());
    config.es.sigma = 0.0;
    assert!(execute(&config).unwrap_err().to_string().contains("sigma"));
}

#[test]
fn one_cell_sweep_equals_a_single_run() {
    let tmp = tempfile::tempdir().unwrap();
    let base = tiny_config(tmp.path());
    let rows = sweep(&base, SweepAxis::NReal, &[base.n_real], &[base.master_seed]).unwrap();
    assert_eq!(rows.len(), 1);
    let direct = execute(&base).unwrap().report;
    let from_sweep = rows[0].outcome.as_ref().unwrap();
    // Only the output directory differs, and it is not part of the digest.
    assert_eq!(from_sweep.to_json(), direct.to_json());
}

#[test]
fn duplicate_environments_give_identical_rows() {
    let tmp = tempfile::tempdir().unwrap();
    let run = execute(&tiny_config(tmp.path())).unwrap();
    let envs = vec![run.real_envs[0].clone(), run.real_envs[0].clone()];
    let matrix = build_cost_matrix(&Simulator::default(), &run.policies, &envs, 12).unwrap();
    assert_eq!(matrix.row(0), matrix.row(1));
}

#[test]
fn independent_evaluations_agree_within_three_standard_errors() {
    let tmp = tempfile::tempdir().unwrap();
    let run = execute(&tiny_config(tmp.path())).unwrap();
    let sim = Simulator::default();
    let real = DistributionSpec::standard(Role::Real);
    let q = &run.solve.posterior;
    let a = estimate_true_cost(&sim, q, &run.policies, &real, 12, 2000, 100).unwrap();
    let b = estimate_true_cost(&sim, q, &run.policies, &real, 12, 2000, 200).unwrap();
    assert_ne!(a.estimate, b.estimate);
    let se = a.standard_error.hypot(b.standard_error);
    assert!(
        (a.estimate - b.estimate).abs() <= 3.0 * se,
        "{a:?} vs {b:?}"
    );
}
