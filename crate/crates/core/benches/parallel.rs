use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use scopt::euclidean_solver::solve;
use scopt::measure_solver::solve_measure;
use scopt::{Exec, InitialCondition, MeasureObjectiveSpec, ObjectiveSpec, RunConfig};

fn euclidean(c: &mut Criterion) {
    let g = ObjectiveSpec::ackley();
    let mut group = c.benchmark_group("ackley_d20_n64");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let cfg = RunConfig {
            problem: "ackley".into(),
            dim: 20,
            particles: 64,
            time_steps: 20,
            mc_samples: 200,
            init: InitialCondition::FixedScalar(5.0),
            execution: exec,
            ..RunConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| solve(&g, cfg).unwrap())
        });
    }
    group.finish();
}

fn measure(c: &mut Criterion) {
    let spec = MeasureObjectiveSpec::newtonian_energy(2).unwrap();
    let mut group = c.benchmark_group("newtonian_n100");
    group.sample_size(10);
    for exec in [Exec::Sequential, Exec::Parallel] {
        let cfg = RunConfig {
            problem: "newtonian2d".into(),
            dim: 2,
            particles: 100,
            time_steps: 20,
            mc_samples: 100,
            epsilon: 1e-10,
            init: InitialCondition::FixedScalar(0.0),
            execution: exec,
            ..RunConfig::default()
        };
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &cfg, |b, cfg| {
            b.iter(|| solve_measure(&spec, cfg).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, euclidean, measure);
criterion_main!(benches);
