use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::hint::black_box;

use otassign::{emd, CostSpec, DiscreteMeasure, Tensor};

fn cloud(rng: &mut ChaCha8Rng, n: usize) -> DiscreteMeasure {
    let data = (0..2 * n).map(|_| rng.random::<f64>()).collect();
    DiscreteMeasure::uniform(Tensor::new(vec![n, 2], data).unwrap()).unwrap()
}

fn network_simplex(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut g = c.benchmark_group("emd");
    g.sample_size(10);
    for &n in &[50usize, 200, 500] {
        let (a, b) = (cloud(&mut rng, n), cloud(&mut rng, n));
        let spec = CostSpec::euclidean();
        g.bench_with_input(BenchmarkId::new("uniform_2d", n), &n, |bch, _| {
            bch.iter(|| emd(black_box(&a), &b, &spec).unwrap().cost_value)
        });
    }
    let (a, b) = (cloud(&mut rng, 2000), cloud(&mut rng, 200));
    g.bench_function("uneven_2000x200", |bch| {
        bch.iter(|| emd(black_box(&a), &b, &CostSpec::euclidean()).unwrap().cost_value)
    });
    g.finish();
}

criterion_group!(benches, network_simplex);
criterion_main!(benches);
