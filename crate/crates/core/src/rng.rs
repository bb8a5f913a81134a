//! Seeded random streams.
//!
//! Every draw comes from ChaCha20 seeded with `seed_from_u64(seed)`; the
//! 64-bit stream id is `purpose << 56 | dim << 48 | replication << 16`, so a
//! given (purpose, dimension, replication) always sees the same numbers no
//! matter how many other streams were consumed. Normal variates use the
//! Ziggurat sampler of `rand_distr::StandardNormal`.

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Mismatch = 1,
    Noise = 2,
    OptimizerStart = 3,
    PosteriorSample = 4,
    PriorSample = 5,
}

pub struct StreamRng(ChaCha20Rng);

impl StreamRng {
    pub fn new(seed: u64, purpose: Purpose, dim: u8, replication: u32) -> Self {
        let mut r = ChaCha20Rng::seed_from_u64(seed);
        r.set_stream(((purpose as u64) << 56) | ((dim as u64) << 48) | ((replication as u64) << 16));
        StreamRng(r)
    }

    pub fn normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.0)
    }
}

pub fn normal_vec(rng: &mut StreamRng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.normal()).collect()
}
