use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use ditto_bench::pair_set;
use ditto_core::registration::{fit_rigid_ransac, fit_rigid_svd, RansacParams};

fn svd(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_rigid_svd");
    for n in [100, 1_000, 10_000] {
        let pairs = pair_set(n, 0.0, 1);
        g.bench_with_input(BenchmarkId::from_parameter(n), &pairs, |b, p| b.iter(|| fit_rigid_svd(p).unwrap()));
    }
    g.finish();
}

fn ransac(c: &mut Criterion) {
    let mut g = c.benchmark_group("fit_rigid_ransac");
    g.sample_size(20);
    for outliers in [0.0, 0.3, 0.6] {
        let pairs = pair_set(2_000, outliers, 2);
        let params = RansacParams::default().with_seed(7);
        g.bench_with_input(BenchmarkId::from_parameter(outliers), &pairs, |b, p| {
            b.iter(|| fit_rigid_ransac(p, &params).unwrap())
        });
    }
    g.finish();
}

criterion_group!(benches, svd, ransac);
criterion_main!(benches);
