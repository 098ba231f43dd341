use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use qtcs::qaoa::{
    apply_mixer_with, apply_phase_with, energy_table_with, expectation_with, optimize_params_with,
    run_circuit_with, EnergyTable, OptimizeSettings, QaoaParams, StateVector,
};
use qtcs::qubo::{build_qubo, QuboModel};
use qtcs::suite::synth_suite;
use qtcs::Backend;

const BACKENDS: [(Backend, &str); 2] = [
    (Backend::Sequential, "sequential"),
    (Backend::Parallel, "parallel"),
];

fn model(n: usize) -> QuboModel {
    let suite = synth_suite(n, 3 * n, 0.3, 0.3, 7).unwrap();
    let penalty = 1.0 + 0.5 * suite.costs().iter().sum::<f64>();
    build_qubo(&suite, 0.5, penalty).unwrap()
}

fn table(n: usize) -> EnergyTable {
    energy_table_with(Backend::Sequential, &model(n)).unwrap()
}

fn kernels(c: &mut Criterion) {
    for n in [14, 16, 18] {
        let qubo = model(n);
        let t = table(n);
        let mut group = c.benchmark_group(format!("kernels/n{n}"));
        group.sample_size(10);
        for (backend, name) in BACKENDS {
            group.bench_function(BenchmarkId::new("energy_table", name), |b| {
                b.iter(|| energy_table_with(backend, black_box(&qubo)).unwrap())
            });
            let mut state = StateVector::uniform(n).unwrap();
            group.bench_function(BenchmarkId::new("apply_mixer", name), |b| {
                b.iter(|| apply_mixer_with(backend, &mut state, black_box(0.3)))
            });
            group.bench_function(BenchmarkId::new("apply_phase", name), |b| {
                b.iter(|| apply_phase_with(backend, &mut state, &t, black_box(0.7)).unwrap())
            });
            group.bench_function(BenchmarkId::new("expectation", name), |b| {
                b.iter(|| expectation_with(backend, black_box(&state), &t).unwrap())
            });
            let params = QaoaParams::new(vec![0.4, 0.8, 1.2], vec![0.9, 0.5, 0.2]).unwrap();
            group.bench_function(BenchmarkId::new("run_circuit_p3", name), |b| {
                b.iter(|| run_circuit_with(backend, &t, black_box(&params)).unwrap())
            });
        }
        group.finish();
    }
}

fn optimizer(c: &mut Criterion) {
    let n = 14;
    let (t, _) = table(n).normalized();
    let mut group = c.benchmark_group(format!("optimize_params/n{n}"));
    group.sample_size(10);
    for (backend, name) in BACKENDS {
        let settings = OptimizeSettings {
            p: 2,
            restarts: 3,
            seed: 11,
            max_evals: Some(100),
            trace: false,
        };
        group.bench_function(name, |b| {
            b.iter(|| optimize_params_with(backend, &t, black_box(&settings)).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, kernels, optimizer);
criterion_main!(benches);
