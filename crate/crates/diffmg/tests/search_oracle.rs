mod common;

use diffmg::linalg::DenseMatrix;
use diffmg::model::{DagAssignment, Model, Split, TrainConfig};
use diffmg::oracle::{
    brute_force_search, darts_reference_forward, hard_assignment, prop1_numeric_check,
    task_specs, OracleError,
};
use diffmg::search::{derive, mixture_assignment, run_search, ArchParams, SearchConfig, SearchRun};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_config(k: usize, epochs: usize) -> SearchConfig {
    SearchConfig {
        k_states: k,
        epochs,
        restarts: 1,
        train: TrainConfig {
            hidden: 8,
            ..TrainConfig::default()
        },
        ..SearchConfig::default()
    }
}

fn indices_of(spec: &diffmg::space::SearchSpaceSpec, names: &[&str]) -> Vec<usize> {
    names
        .iter()
        .enumerate()
        .map(|(l, n)| {
            spec.candidates(l)
                .iter()
                .position(|c| c.to_string() == *n)
                .unwrap_or_else(|| panic!("{n} is not a candidate on link {l}"))
        })
        .collect()
}

#[test]
fn strongly_preferred_lambda_is_derived() {
    let toy = common::load("toy");
    let model = Model::new(&toy.graph, &toy.features, &toy.task);
    let config = small_config(2, 4);
    let mut run = SearchRun::new(model, &config, 0).unwrap();
    let spec = run.specs()[0].clone();
    let wanted = indices_of(&spec, &["S-A", "O", "A-P"]);
    for (l, &m) in wanted.iter().enumerate() {
        run.archs_mut()[0].lambda_mut(l)[m] += 100.0;
    }
    for _ in 0..config.epochs {
        let rec = run.search_epoch().unwrap();
        assert_eq!(rec.sampled[0], wanted);
    }
    assert_eq!(run.derive(), vec![spec.meta_graph(&wanted).unwrap()]);
}

#[test]
fn search_runs_are_reproducible() {
    let toy = common::load("toy");
    let model = Model::new(&toy.graph, &toy.features, &toy.task);
    let config = SearchConfig {
        epsilon0: 0.5,
        restarts: 3,
        ..small_config(3, 6)
    };
    let a = run_search(model, &config, 1).unwrap();
    let b = run_search(model, &config, 3).unwrap();
    assert_eq!(a.meta_graphs, b.meta_graphs);
    assert_eq!(a.report, b.report);
    assert_ne!(
        a.report.restarts[0].final_lambdas,
        a.report.restarts[1].final_lambdas,
        "restarts should draw different streams"
    );
}

#[test]
fn one_hot_mixture_equals_the_hard_forward() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for rec in [false, true] {
        let inst = common::random_instance(&mut rng, rec);
        let model = Model::new(&inst.graph, &inst.features, &inst.task);
        let specs = task_specs(&model, 3).unwrap();
        let params = model.init_params(6, &mut rng);
        let paths: Vec<Vec<usize>> = specs.iter().map(|s| common::random_path(s, &mut rng)).collect();
        let archs: Vec<ArchParams> = specs
            .iter()
            .zip(&paths)
            .map(|(s, p)| {
                ArchParams::from_lambdas(
                    s.candidate_sizes()
                        .iter()
                        .zip(p)
                        .map(|(&n, &m)| (0..n).map(|j| if j == m { 1000.0 } else { 0.0 }).collect())
                        .collect(),
                )
            })
            .collect();
        let mixture = darts_reference_forward(&model, &params, &specs, &archs, Split::Train).unwrap();
        let hard: Vec<DagAssignment> = specs
            .iter()
            .zip(&paths)
            .map(|(s, p)| DagAssignment::from_meta_graph(&s.meta_graph(p).unwrap(), 1.0))
            .collect();
        let reference = model.forward(&params, &hard, Split::Train, None).unwrap();
        assert!((mixture.loss - reference.loss).abs() <= 1e-10, "{} vs {}", mixture.loss, reference.loss);
        for ((s, a), p) in specs.iter().zip(&archs).zip(&paths) {
            assert_eq!(derive(a, s), s.meta_graph(p).unwrap());
        }
    }
}

#[test]
fn uniform_mixture_is_the_average_of_candidates() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let inst = common::random_instance(&mut rng, false);
    let model = Model::new(&inst.graph, &inst.features, &inst.task);
    let specs = task_specs(&model, 1).unwrap();
    let n = specs[0].candidate_sizes()[0];
    assert_eq!(n, 3);
    let params = model.init_params(5, &mut rng);
    let arch = ArchParams::zeros(&specs[0]);
    let mixed = model
        .forward(&params, &[mixture_assignment(&arch, &specs[0])], Split::Train, None)
        .unwrap();
    let h1 = &mixed.dag_traces[0].states[1];
    let mut expected = DenseMatrix::zeros(h1.n_rows(), h1.n_cols());
    for m in 0..n {
        let single = DagAssignment::from_meta_graph(&specs[0].meta_graph(&[m]).unwrap(), 1.0);
        let t = model.forward(&params, &[single], Split::Train, None).unwrap();
        for (e, x) in expected.values_mut().iter_mut().zip(t.dag_traces[0].states[1].values()) {
            *e += x / n as f64;
        }
    }
    for (a, b) in h1.values().iter().zip(expected.values()) {
        assert!((a - b).abs() <= 1e-12);
    }
}

#[test]
fn temperature_check_refuses_ties() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let inst = common::random_instance(&mut rng, false);
    let model = Model::new(&inst.graph, &inst.features, &inst.task);
    let specs = task_specs(&model, 2).unwrap();
    let params = model.init_params(4, &mut rng);
    let archs: Vec<ArchParams> = specs.iter().map(ArchParams::zeros).collect();
    let err = prop1_numeric_check(&model, &params, &specs, &archs, 0, 0, Split::Train, &[1.0, 0.1]);
    assert!(matches!(err, Err(OracleError::Tie { link: 0 })));
    let err = prop1_numeric_check(&model, &params, &specs, &archs, 0, 0, Split::Train, &[0.1, 1.0]);
    assert!(matches!(err, Err(OracleError::BadTemperatures)));
}

#[test]
fn temperature_check_holds_for_tiny_margins() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let inst = common::random_instance(&mut rng, false);
    let model = Model::new(&inst.graph, &inst.features, &inst.task);
    let specs = task_specs(&model, 2).unwrap();
    let params = model.init_params(4, &mut rng);
    let archs: Vec<ArchParams> = specs.iter().map(|s| common::ladder_arch(s, 1e-5, &mut rng)).collect();
    let temperatures = [1.0, 1e-2, 1e-4, 1e-6, 1e-8];
    for link in 0..specs[0].links().len() {
        let report =
            prop1_numeric_check(&model, &params, &specs, &archs, 0, link, Split::Train, &temperatures).unwrap();
        assert!(report.passed(), "{report:?}");
    }
}

#[test]
fn brute_force_ranks_every_single_link_graph() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let inst = common::random_instance(&mut rng, false);
    let model = Model::new(&inst.graph, &inst.features, &inst.task);
    let config = TrainConfig {
        hidden: 6,
        epochs: 10,
        ..TrainConfig::default()
    };
    let a = brute_force_search(&model, 1, &config, 10, 2).unwrap();
    let b = brute_force_search(&model, 1, &config, 10, 1).unwrap();
    assert_eq!(a.len(), 3);
    assert_eq!(a.iter().map(|r| r.rank).collect::<Vec<_>>(), vec![1, 2, 3]);
    assert!(a.windows(2).all(|w| w[0].metric >= w[1].metric));
    assert_eq!(
        a.iter().map(|r| (r.metric, r.meta_graphs.clone())).collect::<Vec<_>>(),
        b.iter().map(|r| (r.metric, r.meta_graphs.clone())).collect::<Vec<_>>()
    );
    let err = brute_force_search(&model, 1, &config, 2, 1);
    assert!(matches!(err, Err(OracleError::CapExceeded { cap: 2, .. })));
}

#[test]
fn hard_assignment_uses_alpha_as_coefficient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let inst = common::random_instance(&mut rng, false);
    let model = Model::new(&inst.graph, &inst.features, &inst.task);
    let spec = &task_specs(&model, 2).unwrap()[0];
    let arch = common::ladder_arch(spec, 0.7, &mut rng);
    let path = common::random_path(spec, &mut rng);
    let dag = hard_assignment(spec, &arch, &path);
    for (l, &m) in path.iter().enumerate() {
        let branches = dag.branches(l);
        assert_eq!(branches.len(), 1);
        assert!((branches[0].coefficient - arch.alpha(l)[m]).abs() < 1e-15);
    }
}
