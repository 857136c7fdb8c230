use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion, Throughput};
use hop_core::sde::simulate_ensemble;
use hop_core::symfunc::circle_elem_sym_all;
use hop_core::{Coupling, Execution, ModelSpec, SdeConfig};

fn ensemble(c: &mut Criterion) {
    let model = ModelSpec::compact_a(3, Coupling::Finite(2.0)).unwrap();
    let x0 = [0.3, 2.1, 4.2];
    let cfg = SdeConfig::new(1e-3, 0.1, 5).unwrap();
    #[allow(unused_mut)]
    let mut modes = vec![("sequential", Execution::Sequential)];
    #[cfg(feature = "parallel")]
    modes.push(("parallel", Execution::Parallel));

    let mut group = c.benchmark_group("ensemble");
    group.sample_size(10);
    for n_paths in [1024usize, 8192] {
        group.throughput(Throughput::Elements(n_paths as u64));
        for &(name, exec) in &modes {
            group.bench_with_input(BenchmarkId::new(name, n_paths), &n_paths, |b, &n| {
                b.iter(|| simulate_ensemble(&model, &x0, &cfg, n, &[0.1], exec, |x| circle_elem_sym_all(x)).unwrap())
            });
        }
    }
    group.finish();
}

criterion_group!(benches, ensemble);
criterion_main!(benches);
