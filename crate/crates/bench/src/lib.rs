//! Benchmark-only crate; see `benches/hot_paths.rs`.

use wgflow_core::rng::CounterRng;
use wgflow_core::ParticleEnsemble;

/// Standard Gaussian cloud used by the benchmarks.
pub fn gaussian_cloud(seed: u64, n: usize, d: usize) -> ParticleEnsemble {
    let rng = CounterRng::new(seed, 0xBE7C);
    let data: Vec<f64> = (0..n * d).map(|k| rng.normal(k as u64)).collect();
    ParticleEnsemble::new(d, data).expect("valid cloud")
}
