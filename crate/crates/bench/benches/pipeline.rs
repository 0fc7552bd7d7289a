use criterion::{criterion_group, criterion_main, Criterion};
use ditto_bench::small_bundle;
use ditto_core::demo::{extract_trajectory, FileSource};
use ditto_core::eval::{run_offline_eval, CompositeSource, EvalOptions, Protocol, SyntheticSource};
use ditto_core::registration::RansacParams;

fn pipeline(c: &mut Criterion) {
    let dirs: Vec<_> = (0..2).map(|i| std::env::temp_dir().join(format!("ditto-bench-{}-{i}", std::process::id()))).collect();
    let bundles: Vec<_> = dirs
        .iter()
        .enumerate()
        .map(|(i, d)| small_bundle(d, 5, i as u64).expect("synthetic bundle"))
        .collect();
    let params = RansacParams::default().with_seed(0);
    let synth = SyntheticSource::new(0);
    let src = CompositeSource::new(&FileSource, &synth);
    let opts = EvalOptions {
        measure_runtime: false,
        ..EvalOptions::default()
    };

    let mut g = c.benchmark_group("pipeline");
    g.sample_size(10);
    g.bench_function("extract_trajectory", |b| {
        b.iter(|| extract_trajectory(&bundles[0], &FileSource, &params).unwrap())
    });
    g.bench_function("trajectory_protocol", |b| {
        b.iter(|| run_offline_eval(&bundles, Protocol::Trajectory, &src, &opts).unwrap())
    });
    g.finish();
    for d in dirs {
        let _ = std::fs::remove_dir_all(d);
    }
}

criterion_group!(benches, pipeline);
criterion_main!(benches);
