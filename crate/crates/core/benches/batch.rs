use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use lqgtrack::linalg::{Matrix, Vector};
use lqgtrack::model::{validate_model, validate_weights, CostWeights, ReferenceSpec, SystemModel};
use lqgtrack::oracle::sweep;
use lqgtrack::parallel::Execution;
use lqgtrack::simulate::{ControllerKind, ReferenceKind, Scenario, ScenarioConfig};

fn golden(horizon: usize, rollouts: usize) -> ScenarioConfig {
    let one = || Matrix::from_element(1, 1, 1.0);
    let model = validate_model(SystemModel {
        a: one(),
        b: one(),
        c: one(),
        w: one(),
        v: one(),
        x0_mean: Vector::zeros(1),
        x0_cov: one(),
    })
    .unwrap();
    ScenarioConfig {
        model,
        weights: validate_weights(&CostWeights::constant(one(), one(), one()), 1, 1, horizon).unwrap(),
        reference: ReferenceSpec::constant(Vector::from_element(1, 1.0)).with_offset_cov(Matrix::from_element(1, 1, 0.25)),
        horizon,
        controller: ControllerKind::Steady,
        reference_kind: ReferenceKind::StochasticOffset,
        base_seed: 0,
        n_rollouts: rollouts,
        filter_burn_in: 50,
    }
}

fn rollouts(c: &mut Criterion) {
    let scenario = Scenario::new(golden(500, 256)).unwrap();
    let mut group = c.benchmark_group("run_batch 256x500");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(scenario.run_batch_with(exec).unwrap()))
        });
    }
    group.finish();
}

fn oracle(c: &mut Criterion) {
    let mut group = c.benchmark_group("oracle sweep 100");
    group.sample_size(10);
    for (name, exec) in [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)] {
        group.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(sweep(100, 0, exec).unwrap()))
        });
    }
    group.finish();
}

criterion_group!(benches, rollouts, oracle);
criterion_main!(benches);
