use criterion::{black_box, criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use scenematch::context::{ContextParams, LaneOverrides, RelativeLane};
use scenematch::dataset::synth::{generate_dataset, SynthConfig};
use scenematch::metric::kernel;
use scenematch::search::{enumerate_candidates, search, SearchOptions};
use scenematch::SearchQuery;

fn points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 4]> {
    (0..n)
        .map(|_| {
            [
                rng.gen_range(-200.0..200.0),
                rng.gen_range(-40.0..40.0),
                rng.gen_range(-50.0..50.0),
                rng.gen_range(-10.0..10.0),
            ]
        })
        .collect()
}

fn kernels(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut g = c.benchmark_group("hausdorff");
    for n in [1, 3, 8] {
        let a = points(&mut rng, 3);
        let b = points(&mut rng, n);
        g.bench_with_input(BenchmarkId::new("optimized", n), &n, |bench, _| {
            bench.iter(|| kernel::hausdorff(black_box(&a), black_box(&b)))
        });
        g.bench_with_input(BenchmarkId::new("reference", n), &n, |bench, _| {
            bench.iter(|| {
                kernel::directed_reference(black_box(&a), black_box(&b))
                    .max(kernel::directed_reference(black_box(&b), black_box(&a)))
            })
        });
    }
    g.finish();
}

fn searches(c: &mut Criterion) {
    let cfg = SynthConfig {
        vehicles: 150,
        duration: 120.0,
        ..SynthConfig::default()
    };
    let ds = generate_dataset(&cfg, 1000, 6).unwrap();
    let (keys, _) = enumerate_candidates(&ds, RelativeLane::Right, 1, &ContextParams::default());
    let query = SearchQuery::new(keys[keys.len() / 2]);
    let mut g = c.benchmark_group("search");
    g.sample_size(10);
    for (name, threads, exhaustive) in [("pruned-1", 1, false), ("pruned-4", 4, false), ("exhaustive-1", 1, true)] {
        let opts = SearchOptions {
            threads: Some(threads),
            exhaustive,
            overrides: LaneOverrides::default(),
        };
        g.bench_function(name, |b| b.iter(|| search(&ds, &query, &opts).unwrap()));
    }
    g.finish();
}

criterion_group!(benches, kernels, searches);
criterion_main!(benches);
