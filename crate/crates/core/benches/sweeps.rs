use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};

use carleman_lab::discrete::{carleman_sweep, make_grid, Mode};
use carleman_lab::parallel::Execution;
use carleman_lab::symbols::{InterfaceModel, ModelCoefficients, WeightSpec};

fn model() -> InterfaceModel {
    let c = ModelCoefficients::diagonal(&[4.0, 1.0], &[1.0, 1.0]).unwrap();
    InterfaceModel::new(&c, WeightSpec::new(3.0, 1.0, 1.0).unwrap()).unwrap()
}

fn sweep(c: &mut Criterion) {
    let model = model();
    let grid = make_grid(-0.3, 0.3, 401).unwrap();
    let taus = [50.0, 71.0, 100.0, 141.0, 200.0, 283.0];
    let mut group = c.benchmark_group("carleman_sweep");
    group.sample_size(10);
    for (label, exec) in [("parallel", Execution::Parallel), ("sequential", Execution::Sequential)] {
        group.bench_with_input(BenchmarkId::new(label, grid.n), &exec, |b, &exec| {
            b.iter(|| carleman_sweep(&model, &[1.0], 0.5, &taus, &grid, Mode::Direct, exec).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, sweep);
criterion_main!(benches);
