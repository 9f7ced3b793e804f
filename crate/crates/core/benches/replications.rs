use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use mclt_sgd::experiment::simulate_replications;
use mclt_sgd::martingale::{path_statistics, MartingaleModel};
use mclt_sgd::montecarlo::Execution;
use mclt_sgd::sgd::{NoiseModel, RunOptions, SgdProblem, StepSchedule};
use mclt_sgd::test_functions::catalog_function;
use mclt_sgd::SpdMatrix;
use nalgebra::DVector;
use std::hint::black_box;

const PATHS: [(&str, Execution); 2] = [("sequential", Execution::Sequential), ("parallel", Execution::Parallel)];

fn linear_reps(c: &mut Criterion) {
    let p = SgdProblem::quadratic(SpdMatrix::diagonal(&[1.0, 2.0]).unwrap(), DVector::zeros(2), NoiseModel::gaussian(SpdMatrix::identity(2))).unwrap();
    let s = StepSchedule::new(0.5, 0.6).unwrap();
    let theta0 = DVector::zeros(2);
    let opts = RunOptions::default();
    let mut g = c.benchmark_group("linear_t1000_r256");
    for (name, exec) in PATHS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| {
            b.iter(|| black_box(simulate_replications(&p, &s, &theta0, 1000, 256, 7, exec, &opts).unwrap()))
        });
    }
    g.finish();
}

fn martingale_reps(c: &mut Criterion) {
    let m = MartingaleModel::iid_gaussian(2, 256).unwrap();
    let h = catalog_function("cos", 2).unwrap();
    let mut g = c.benchmark_group("martingale_n256_r1024");
    for (name, exec) in PATHS {
        g.bench_with_input(BenchmarkId::from_parameter(name), &exec, |b, &exec| b.iter(|| black_box(path_statistics(&m, &h, 1024, 3, exec).unwrap())));
    }
    g.finish();
}

criterion_group! {
    name = benches;
    config = Criterion::default().sample_size(10);
    targets = linear_reps, martingale_reps
}
criterion_main!(benches);
