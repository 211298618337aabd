mod common;

use common::{canonical_dataset, experiment, manifest, small_model, tiny_config};
use fedmm::corruption::CorruptedView;
use fedmm::datastore::{split_predefined, EncoderKind};
use fedmm::federation::{
    local_train, run_experiment, setup_run, ClientState, Executor, PreparedData, RunEnv, ServerOptimizer,
    StrategyConfig, StrategyName,
};
use fedmm::model::{init_params, loss_and_grad, Architecture, FusionScheme, Mode};
use fedmm::numerics::{sgd_step, ParamSet};
use fedmm::rng::{self, Stream};
use rand::seq::SliceRandom;

fn bits(p: &ParamSet<f64>) -> Vec<u64> {
    p.flatten().iter().map(|v| v.to_bits()).collect()
}

fn max_diff(a: &ParamSet<f64>, b: &ParamSet<f64>) -> f64 {
    a.flatten().iter().zip(b.flatten()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn env(strategy: StrategyConfig, rate: f64, seed: u64) -> (fedmm::federation::ExperimentConfig, RunEnv<f64>) {
    let ds = canonical_dataset(6, [10, 14], 3);
    let cfg = experiment(strategy, 3, rate);
    let fold = split_predefined(&ds).unwrap();
    let env = setup_run(&cfg, &ds, 0, seed, None, &fold).unwrap();
    (cfg, env)
}

fn trajectory(strategy: StrategyConfig, rounds: usize) -> Vec<ParamSet<f64>> {
    let (cfg, mut env) = env(strategy, 0.5, 7);
    let exec = Executor::Serial;
    (0..rounds)
        .map(|_| {
            env.step(&cfg, &exec).unwrap();
            env.server.params.clone()
        })
        .collect()
}

#[test]
fn fedprox_with_zero_mu_is_fedavg_bitwise() {
    let mut prox = StrategyConfig::named(StrategyName::Fedprox);
    prox.mu = 0.0;
    let a = trajectory(StrategyConfig::default(), 3);
    let b = trajectory(prox, 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn fedrs_with_unit_scale_is_fedavg() {
    let mut rs = StrategyConfig::named(StrategyName::Fedrs);
    rs.alpha_rs = 1.0;
    let a = trajectory(StrategyConfig::default(), 3);
    let b = trajectory(rs, 3);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(bits(x), bits(y));
    }
}

#[test]
fn degenerate_fedopt_momentum_is_fedavg() {
    let mut opt = StrategyConfig::named(StrategyName::Fedopt);
    opt.server_optimizer = ServerOptimizer::Momentum;
    opt.beta1 = 0.0;
    opt.server_lr = 1.0;
    let a = trajectory(StrategyConfig::default(), 3);
    let b = trajectory(opt, 3);
    for (x, y) in a.iter().zip(&b) {
        assert!(max_diff(x, y) < 1e-12);
    }
}

#[test]
fn scaffold_first_round_is_fedavg_then_diverges() {
    let a = trajectory(StrategyConfig::default(), 2);
    let b = trajectory(StrategyConfig::named(StrategyName::Scaffold), 2);
    assert!(max_diff(&a[0], &b[0]) < 1e-12);
    assert!(max_diff(&a[1], &b[1]) > 0.0);
}

#[test]
fn fedprox_pulls_towards_global_model() {
    let mut strong = StrategyConfig::named(StrategyName::Fedprox);
    strong.mu = 5.0;
    let (mut cfg, mut e0) = env(StrategyConfig::default(), 1.0, 2);
    cfg.strategy.batch_size = 2;
    let start = e0.server.params.clone();
    e0.step(&cfg, &Executor::Serial).unwrap();
    let (mut cfg1, mut e1) = env(strong.clone(), 1.0, 2);
    cfg1.strategy = strong;
    cfg1.strategy.batch_size = 2;
    e1.step(&cfg1, &Executor::Serial).unwrap();
    assert!(max_diff(&e1.server.params, &start) < max_diff(&e0.server.params, &start));
}

#[test]
fn single_step_delta_is_minus_lr_times_gradient() {
    let m = manifest(&[("a", 2, 6, EncoderKind::ConvRnn), ("b", 3, 5, EncoderKind::RnnOnly)], 3);
    let mut cfg = tiny_config(4, FusionScheme::Concat, 1);
    cfg.dropout = 0.0;
    let arch = Architecture::new(&m, cfg).unwrap();
    let ds = canonical_dataset(1, [5, 5], 1);
    let _ = ds;
    // Build a dataset matching the toy manifest.
    let spec = fedmm::datastore::SyntheticSpec {
        name: "toy".into(),
        num_clients: 1,
        samples_per_client: [5, 5],
        num_classes: 3,
        modalities: vec![
            fedmm::datastore::SynthModality { name: "a".into(), len: 6, dim: 2, encoder: EncoderKind::ConvRnn },
            fedmm::datastore::SynthModality { name: "b".into(), len: 5, dim: 3, encoder: EncoderKind::RnnOnly },
        ],
        separation: 1.0,
        noise: 0.3,
        test_fraction: 0.0,
        metric: fedmm::evaluation::MetricName::Acc,
        seed: 4,
    };
    let ds = fedmm::datastore::generate_synthetic(&spec).unwrap();
    let all: Vec<usize> = (0..ds.len()).collect();
    let view = CorruptedView::new(&ds, &all);
    let data = PreparedData::<f64>::new(&arch, &view).unwrap();
    let w0 = init_params::<f64>(&arch, 9);
    let mut st = ClientState::new("client000", &data, &all, 3);
    let mut s = StrategyConfig::default();
    s.batch_size = 16;
    s.lr = 0.1;
    let up = local_train(&arch, &w0, &data, &all, &s, &mut st, None, 1, 0).unwrap();
    assert_eq!(up.steps, 1);
    assert_eq!(up.num_samples, 5);

    // The mean loss is order-independent, so the full-batch gradient applies.
    let batch: Vec<_> = all.iter().map(|&i| data.inputs[i].clone()).collect();
    let labels: Vec<_> = all.iter().map(|&i| data.labels[i]).collect();
    let (_, g) = loss_and_grad(&arch, &w0, &batch, &labels, None, fedmm::model::EvalMode::Eval).unwrap();
    let mut want = g.clone();
    want.scale(-0.1);
    assert!(max_diff(&up.delta, &want) < 1e-12);
}

#[test]
fn one_client_collapses_to_centralized_sgd() {
    let ds = canonical_dataset(1, [40, 40], 5);
    let mut cfg = experiment(StrategyConfig::default(), 4, 1.0);
    cfg.model = small_model(FusionScheme::Attention);
    let fold = split_predefined(&ds).unwrap();
    let mut env: RunEnv<f64> = setup_run(&cfg, &ds, 0, 11, None, &fold).unwrap();
    let id = env.eligible[0].clone();
    let cell: Vec<usize> = env.partition.cell(&id).unwrap().to_vec();

    let mut w = env.server.params.clone();
    for round in 1..=4u64 {
        env.step(&cfg, &Executor::Serial).unwrap();
        let mut rng = rng::stream(11, Stream::LocalTraining, &[round, rng::hash_str(&id)]);
        let mut order = cell.clone();
        order.shuffle(&mut rng);
        for chunk in order.chunks(16) {
            let batch: Vec<_> = chunk.iter().map(|&i| env.data.inputs[i].clone()).collect();
            let labels: Vec<_> = chunk.iter().map(|&i| env.data.labels[i]).collect();
            let (_, g) = loss_and_grad(&env.arch, &w, &batch, &labels, None, Mode::Train(&mut rng)).unwrap();
            w = sgd_step(&w, &g, 0.05).unwrap();
        }
        assert!(max_diff(&w, &env.server.params) < 1e-12, "round {round}");
    }
}

#[test]
fn identical_clients_aggregate_to_any_single_update() {
    // Clients hold the same samples; with dropout off and one full batch the
    // shuffle only reorders the gradient sum.
    let ds = canonical_dataset(1, [20, 20], 8);
    let mut cfg = experiment(StrategyConfig::default(), 1, 1.0);
    cfg.model.dropout = 0.0;
    cfg.strategy.batch_size = 1000;
    let fold = split_predefined(&ds).unwrap();
    let env: RunEnv<f64> = setup_run(&cfg, &ds, 0, 1, None, &fold).unwrap();
    let cell = env.partition.cell(&env.eligible[0]).unwrap().to_vec();
    let mut updates = Vec::new();
    for k in 0..4 {
        let mut st = ClientState::new(&format!("k{k}"), &env.data, &cell, 4);
        updates.push(
            local_train(&env.arch, &env.server.params, &env.data, &cell, &cfg.strategy, &mut st, None, 1, 1).unwrap(),
        );
    }
    let agg = fedmm::federation::aggregate(&env.server, &updates, &cfg.strategy, 4).unwrap();
    let mut single = env.server.params.clone();
    single.add_scaled(&updates[0].delta, 1.0).unwrap();
    assert!(max_diff(&agg.params, &single) < 1e-12);
}

#[test]
fn serial_and_parallel_runs_are_bitwise_identical() {
    let ds = canonical_dataset(8, [10, 14], 2);
    let cfg = experiment(StrategyConfig::named(StrategyName::Scaffold), 3, 0.5);
    let log = |workers| {
        let exec = Executor::new(workers).unwrap();
        let mut lines = Vec::new();
        let res = run_experiment::<f64>(&cfg, &ds, &exec, |r| {
            lines.push(serde_json::to_string(r).unwrap());
            Ok(())
        })
        .unwrap();
        (lines, bits(&res.final_params))
    };
    let (a, pa) = log(1);
    let (b, pb) = log(4);
    assert_eq!(a, b);
    assert_eq!(pa, pb);
    assert_eq!(a.len(), 4);
}

#[test]
fn zero_rounds_reports_untrained_metrics_only() {
    let ds = canonical_dataset(4, [8, 10], 2);
    let cfg = experiment(StrategyConfig::default(), 0, 0.5);
    let res = run_experiment::<f64>(&cfg, &ds, &Executor::Serial, |_| Ok(())).unwrap();
    assert_eq!(res.runs.len(), 1);
    assert_eq!(res.runs[0].rounds.len(), 1);
    assert_eq!(res.runs[0].rounds[0].round, 0);
    assert!(res.runs[0].rounds[0].train_loss.is_none());
    let arch = res.arch.clone();
    assert_eq!(bits(&res.final_params), bits(&init_params(&arch, 0)));
}

#[test]
fn multiple_seeds_give_a_summary_with_spread() {
    let ds = canonical_dataset(4, [8, 10], 2);
    let mut cfg = experiment(StrategyConfig::default(), 2, 0.5);
    cfg.seeds = vec![1, 2, 3];
    let res = run_experiment::<f64>(&cfg, &ds, &Executor::Serial, |_| Ok(())).unwrap();
    assert_eq!(res.runs.len(), 3);
    let acc = &res.summary[&fedmm::evaluation::MetricName::Acc];
    assert_eq!(acc.runs, 3);
    let vals: Vec<f64> = res.runs.iter().map(|r| r.final_metrics[&fedmm::evaluation::MetricName::Acc]).collect();
    assert!((acc.mean - vals.iter().sum::<f64>() / 3.0).abs() < 1e-15);
}

#[test]
fn kfold_protocol_runs_once_per_fold() {
    let mut spec = common::canonical_spec(6, [6, 8], 1);
    spec.test_fraction = 0.0;
    let ds = fedmm::datastore::generate_synthetic(&spec).unwrap();
    let mut cfg = experiment(StrategyConfig::default(), 1, 1.0);
    cfg.folds = Some(3);
    let res = run_experiment::<f64>(&cfg, &ds, &Executor::Serial, |_| Ok(())).unwrap();
    let folds: Vec<_> = res.runs.iter().map(|r| r.fold).collect();
    assert_eq!(folds, vec![Some(0), Some(1), Some(2)]);
}

#[test]
fn diverging_clients_are_excluded_and_reported() {
    let (mut cfg, mut env) = env(StrategyConfig::default(), 1.0, 4);
    cfg.strategy.lr = 1e308;
    cfg.strategy.batch_size = 1;
    let err = env.step(&cfg, &Executor::Serial).unwrap_err();
    assert!(matches!(err, fedmm::Error::EmptyCohort), "{err}");
}

#[test]
fn f32_experiment_runs() {
    let ds = canonical_dataset(4, [8, 10], 2);
    let cfg = experiment(StrategyConfig::named(StrategyName::Fedopt), 2, 0.5);
    let res = run_experiment::<f32>(&cfg, &ds, &Executor::Serial, |_| Ok(())).unwrap();
    assert!(res.final_params.first_non_finite().is_none());
}
