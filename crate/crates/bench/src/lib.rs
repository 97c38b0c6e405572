//! Deterministic fixtures shared by the kernel benchmarks.

use posediff_core::synth::{self, SynthOptions};
use posediff_core::train::prepare_samples;
use posediff_core::{Config, FrameSample, Point3, Profile, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Seeded generator for benchmark inputs.
pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` points uniform in the unit cube.
pub fn points(n: usize, seed: u64) -> Vec<Point3> {
    let mut r = rng(seed);
    (0..n)
        .map(|_| std::array::from_fn(|_| r.random_range(-1.0..1.0)))
        .collect()
}

/// Uniform tensor in `[-1, 1)`.
pub fn tensor(shape: &[usize], seed: u64) -> Tensor {
    let mut r = rng(seed);
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| r.random_range(-1.0..1.0)).collect()).expect("length matches shape")
}

/// Fast-profile configuration with the given seed.
pub fn fast_config(seed: u64) -> Config {
    let mut c = Config::profile(Profile::Fast);
    c.seed = seed;
    c
}

/// `count` prepared synthetic frames.
pub fn samples(config: &Config, count: usize) -> Vec<FrameSample> {
    let ds = synth::generate(&SynthOptions { joints: config.joints, count, seed: 7, occluder: false })
        .expect("synthetic generation");
    prepare_samples(&ds, config).expect("sample preparation")
}
