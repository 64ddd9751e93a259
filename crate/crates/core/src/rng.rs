//! Seeded random streams.
//!
//! Every stochastic component draws from a ChaCha8 stream keyed by a user seed
//! and a fixed stream id, so independent consumers never share state and a run
//! is reproducible from its seeds alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type Rng = ChaCha8Rng;

/// Stream ids for the consumers that share one user seed.
pub mod stream {
    pub const LATENT: u64 = 1;
    pub const PRIOR_WEIGHTS: u64 = 2;
    pub const CHAIN_INIT: u64 = 3;
    pub const CHAIN: u64 = 4;
    pub const NOISE: u64 = 5;
    pub const ENCODING: u64 = 6;
    pub const PRIOR_STATS: u64 = 7;
    pub const DOT_TEST: u64 = 8;
    pub const MINIBATCH: u64 = 9;
}

pub fn seeded(seed: u64, stream: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Derives the `index`-th child stream of `(seed, stream)`; used to fan out
/// per-sample streams that do not depend on evaluation order.
pub fn split(seed: u64, stream: u64, index: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed ^ splitmix64(index.wrapping_add(0x9e37_79b9))));
    rng.set_stream(stream);
    rng
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

pub fn standard_normal(rng: &mut Rng) -> f64 {
    StandardNormal.sample(rng)
}

pub fn fill_standard_normal(rng: &mut Rng, out: &mut [f64]) {
    for v in out {
        *v = StandardNormal.sample(rng);
    }
}

pub fn standard_normal_vec(rng: &mut Rng, n: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    fill_standard_normal(rng, &mut v);
    v
}
