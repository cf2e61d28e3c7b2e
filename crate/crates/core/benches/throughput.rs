use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use gfdetect::channel::{preamble_symbols, ScenarioConfig};
use gfdetect::correlator::{roc_from_scores, scores, spanning_thresholds};
use gfdetect::dataset::{build_dataset_with, LabelScheme};
use gfdetect::exec::Exec;
use gfdetect::forest::{train_forest_with, ForestConfig};
use gfdetect::mlp::{init_model, train, TrainConfig};
use gfdetect::rng::rng_from_seed;

const MODES: [(&str, Exec); 2] = [
    ("sequential", Exec::Sequential),
    ("parallel", Exec::Parallel),
];

fn dataset(c: &mut Criterion) {
    let cfg = ScenarioConfig::interference(3.0, 1);
    let mut g = c.benchmark_group("build_dataset");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| build_dataset_with(exec, &cfg, LabelScheme::Interf4, 5000).unwrap())
        });
    }
    g.finish();
}

fn forest(c: &mut Criterion) {
    let ds = build_dataset_with(
        Exec::Parallel,
        &ScenarioConfig::awgn(3.0, 2),
        LabelScheme::Binary,
        5000,
    )
    .unwrap();
    let cfg = ForestConfig {
        num_trees: 20,
        ..ForestConfig::default()
    };
    let model = train_forest_with(Exec::Parallel, &ds, &cfg).unwrap();
    let features = ds.features();

    let mut g = c.benchmark_group("forest_train");
    g.sample_size(10);
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| train_forest_with(exec, &ds, &cfg).unwrap())
        });
    }
    g.finish();

    let mut g = c.benchmark_group("forest_predict");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.predict_all(exec, &features))
        });
    }
    g.finish();
}

fn mlp(c: &mut Criterion) {
    let ds = build_dataset_with(
        Exec::Parallel,
        &ScenarioConfig::awgn(3.0, 3),
        LabelScheme::Binary,
        5000,
    )
    .unwrap();
    let cfg = TrainConfig {
        epochs: 1,
        ..TrainConfig::default()
    };
    let model = train(init_model(2, &mut rng_from_seed(4)), &ds, &cfg)
        .unwrap()
        .model;
    let features = ds.features();
    let mut g = c.benchmark_group("mlp_predict");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| model.predict_all(exec, &features).unwrap())
        });
    }
    g.finish();
}

fn roc(c: &mut Criterion) {
    let ds = build_dataset_with(
        Exec::Parallel,
        &ScenarioConfig::awgn(3.0, 5),
        LabelScheme::Binary,
        10_000,
    )
    .unwrap();
    let s = scores(&ds, &preamble_symbols());
    let positive: Vec<bool> = ds
        .samples
        .iter()
        .map(|x| x.label.is_aligned_preamble())
        .collect();
    let thresholds = spanning_thresholds(&s, 1001);
    let mut g = c.benchmark_group("roc_sweep");
    for (name, exec) in MODES {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| roc_from_scores(exec, &s, &positive, &thresholds).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, dataset, forest, mlp, roc);
criterion_main!(benches);
