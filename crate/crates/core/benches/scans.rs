use cableqsim_core::spectrum::zz_map;
use cableqsim_core::{CircuitParams, Execution, ModeSet, System, TruncationSpec};
use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use std::hint::black_box;

fn grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n).map(|k| lo + (hi - lo) * k as f64 / (n - 1) as f64).collect()
}

fn zz_map_scan(c: &mut Criterion) {
    let sys = System::new(CircuitParams::default(), ModeSet::from_indices(0.44, [10, 11]).unwrap(), TruncationSpec::default())
        .unwrap();
    let f1 = grid(4.60, 4.80, 16);
    let f2 = grid(4.60, 4.80, 16);
    let mut group = c.benchmark_group("zz_map_16x16");
    group.sample_size(10);
    for exec in [Execution::Sequential, Execution::Parallel] {
        group.bench_with_input(BenchmarkId::from_parameter(format!("{exec:?}")), &exec, |b, &exec| {
            b.iter(|| zz_map(black_box(&sys), &f1, &f2, exec))
        });
    }
    group.finish();
}

criterion_group!(benches, zz_map_scan);
criterion_main!(benches);
