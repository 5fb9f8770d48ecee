//! Seed derivation and simplex sampling.
//!
//! All randomness in the crate flows through ChaCha8. Work units that run
//! in parallel (random starts, bootstrap replicates) each get an
//! independent stream seeded by `derive(base, index)` so the set of draws
//! is a pure function of the base seed, independent of scheduling.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// SplitMix64 mix of a base seed and a work-unit index. Stable across
/// platforms; documented so runs can be reproduced outside this crate.
pub fn derive(base: u64, index: u64) -> u64 {
    let mut z = base
        .wrapping_add(0x9e3779b97f4a7c15u64.wrapping_mul(index.wrapping_add(1)));
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

pub fn rng_for(base: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive(base, index))
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Draws from a symmetric Dirichlet(alpha) via normalized Gamma draws.
/// Marsaglia-Tsang would need fewer uniforms; for alpha >= 1 the simple
/// sum-of-exponentials trick only works at alpha = 1, so use rand_distr.
pub fn dirichlet<R: Rng>(rng: &mut R, dim: usize, alpha: f64) -> Vec<f64> {
    use rand_distr::{Distribution, Gamma};
    let gamma = Gamma::new(alpha, 1.0).expect("alpha > 0");
    let mut draw: Vec<f64> = (0..dim).map(|_| gamma.sample(rng)).collect();
    let mut total: f64 = draw.iter().sum();
    if total <= 0.0 {
        // All-zero draws are possible for tiny alpha; fall back to uniform.
        draw.iter_mut().for_each(|v| *v = 1.0);
        total = dim as f64;
    }
    draw.iter_mut().for_each(|v| *v /= total);
    draw
}

/// Samples an index from a discrete distribution given as probabilities
/// summing to 1. Uses a single uniform and a cumulative scan.
pub fn sample_index<R: Rng>(rng: &mut R, probs: &[f64]) -> usize {
    let u: f64 = rng.random::<f64>();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    probs.len() - 1
}
