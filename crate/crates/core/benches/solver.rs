//! Thread-pool comparison for the hot paths: one residual evaluation, one
//! continuation run and a small τ sweep. With the `parallel` feature each
//! case runs on a one-thread rayon pool and on the default pool; without it
//! only the sequential path exists.
//!
//! ```text
//! cargo bench -p vortex-core --bench solver
//! cargo bench -p vortex-core --bench solver --no-default-features
//! ```

use std::f64::consts::PI;
use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use vortex_core::continuation::operator::residual_l;
use vortex_core::continuation::{run_continuation, ContinuationConfig};
use vortex_core::instances;
use vortex_core::sweep::sweep_grid;
use vortex_core::verify::random_hermitian_field;

type Case = (&'static str, Box<dyn Fn() + Send + Sync>);

fn cases() -> Vec<Case> {
    let split = instances::by_name("torus-split", false).expect("instance");
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f = random_hermitian_field(&split.geom, &mut rng, 2, 0.8).exp();
    let line = instances::torus_line(32, 1.0, 1.2 * 4.0 * PI, 0.3).expect("instance");
    let cfg = ContinuationConfig::default();
    let cfg2 = cfg.clone();
    vec![
        ("residual_rank2_64", Box::new(move || {
            black_box(residual_l(&split, 0.3, &f).expect("residual"));
        })),
        ("continuation_line_32", Box::new(move || {
            black_box(run_continuation(&line, &cfg).expect("run"));
        })),
        ("sweep_4_taus_16", Box::new(move || {
            let taus = [6.0, 10.0, 14.0, 18.0];
            black_box(sweep_grid(|t| instances::torus_line(16, 1.0, t, 0.3), &cfg2, &taus).expect("sweep"));
        })),
    ]
}

#[cfg(feature = "parallel")]
fn pools() -> Vec<(String, rayon::ThreadPool)> {
    let default = rayon::ThreadPoolBuilder::new().build().expect("pool");
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().expect("pool");
    vec![("1-thread".into(), one), (format!("default-{}", default.current_num_threads()), default)]
}

fn bench(c: &mut Criterion) {
    for (name, run) in cases() {
        let mut group = c.benchmark_group(name);
        group.sample_size(10);
        #[cfg(feature = "parallel")]
        for (label, pool) in pools() {
            group.bench_function(BenchmarkId::new("rayon", label), |b| b.iter(|| pool.install(&run)));
        }
        #[cfg(not(feature = "parallel"))]
        group.bench_function(BenchmarkId::new("sequential", "1"), |b| b.iter(&run));
        group.finish();
    }
}

criterion_group!(benches, bench);
criterion_main!(benches);
