use criterion::{criterion_group, criterion_main, BatchSize, Criterion};
use obsplace_bench::fixture;
use obsplace_core::dynamics::simulate;
use obsplace_core::estimation::{method1_scenario, run_estimation, EstimatorConfig};
use obsplace_core::gramian::{logdet, per_generator_bank, GramianBank, GramianConfig};
use obsplace_core::network::{solve_power_flow, MachineModel};
use obsplace_core::placement::{exhaustive, greedy, mads, MadsOptions};

fn network(c: &mut Criterion) {
    let (case, _, _) = fixture("synthetic20.json", MachineModel::Classical);
    c.bench_function("power_flow/synthetic20", |b| {
        b.iter(|| solve_power_flow(&case, 1e-8, 30).unwrap())
    });
    let (_, _, model) = fixture("wscc9.json", MachineModel::Transient);
    c.bench_function("simulate/wscc9_m2_5s", |b| {
        b.iter(|| simulate(&model, &model.x0, 5.0, 1.0 / 120.0).unwrap())
    });
}

fn gramians(c: &mut Criterion) {
    let mut g = c.benchmark_group("gramian");
    g.sample_size(10);
    for (name, kind) in [
        ("wscc9_m1", MachineModel::Classical),
        ("wscc9_m2", MachineModel::Transient),
    ] {
        let (_, _, model) = fixture("wscc9.json", kind);
        g.bench_function(name, |b| {
            b.iter(|| per_generator_bank(&model, &GramianConfig::default()).unwrap())
        });
    }
    let (_, _, model) = fixture("synthetic20.json", MachineModel::Classical);
    g.bench_function("synthetic20_m1", |b| {
        b.iter(|| per_generator_bank(&model, &GramianConfig::default()).unwrap())
    });
    let bank = per_generator_bank(&model, &GramianConfig::default()).unwrap();
    let w = bank.sum(&(0..20).collect::<Vec<_>>());
    g.bench_function("logdet_40x40", |b| b.iter(|| logdet(&w).unwrap()));
    g.finish();
}

fn placement(c: &mut Criterion) {
    let bank = GramianBank::random_low_rank(10, 8, 3, 2024);
    let mut g = c.benchmark_group("placement/random10_k4");
    g.bench_function("exhaustive", |b| b.iter(|| exhaustive(&bank, 4).unwrap()));
    g.bench_function("greedy", |b| b.iter(|| greedy(&bank, 4).unwrap()));
    g.bench_function("mads", |b| {
        b.iter(|| mads(&bank, 4, &MadsOptions::with_seed(1)).unwrap())
    });
    g.finish();

    let (_, _, model) = fixture("synthetic20.json", MachineModel::Classical);
    let bank = per_generator_bank(&model, &GramianConfig::default()).unwrap();
    let mut g = c.benchmark_group("placement/synthetic20_k8");
    g.sample_size(10);
    g.bench_function("greedy", |b| b.iter(|| greedy(&bank, 8).unwrap()));
    g.bench_function("mads", |b| {
        b.iter(|| mads(&bank, 8, &MadsOptions::with_seed(1)).unwrap())
    });
    g.finish();
}

fn estimation(c: &mut Criterion) {
    let (_, _, model) = fixture("wscc9.json", MachineModel::Classical);
    let cfg = EstimatorConfig::default();
    c.bench_function("srukf/wscc9_m1_5s_run", |b| {
        b.iter_batched(
            || method1_scenario(&model, 7, 1, 5.0, cfg.substep).unwrap(),
            |s| run_estimation(&s, &[1, 2], &cfg, 11).unwrap(),
            BatchSize::SmallInput,
        )
    });
}

criterion_group!(benches, network, gramians, placement, estimation);
criterion_main!(benches);
