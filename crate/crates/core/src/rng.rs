//! Deterministic random streams.
//!
//! Every random draw in the crate comes from a ChaCha stream keyed by
//! `(master seed, purpose, epoch, index)`. Chains, samples and parameter
//! matrices each own a stream, so results never depend on how work is
//! scheduled across threads.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the key.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    Init = 1,
    Minibatch = 2,
    PositivePhase = 3,
    NegativePhase = 4,
    Evaluation = 5,
    Reconstruction = 6,
    Probe = 7,
    Synthetic = 8,
    Generate = 9,
    Selection = 10,
}

/// A stream family: a master seed, a purpose and an epoch. Individual
/// streams are obtained per item index with [`StreamKey::rng`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub seed: u64,
    pub purpose: Purpose,
    pub epoch: u64,
}

impl StreamKey {
    pub fn new(seed: u64, purpose: Purpose, epoch: u64) -> Self {
        Self {
            seed,
            purpose,
            epoch,
        }
    }

    pub fn rng(&self, index: u64) -> StreamRng {
        let mut state = splitmix64(self.seed ^ 0x6a09_e667_f3bc_c908);
        state = splitmix64(state ^ self.purpose as u64);
        state = splitmix64(state ^ self.epoch.wrapping_mul(0x9e37_79b9_7f4a_7c15));
        state = splitmix64(state ^ index);
        let mut seed = [0u8; 32];
        for chunk in seed.chunks_exact_mut(8) {
            state = splitmix64(state);
            chunk.copy_from_slice(&state.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub(crate) fn standard_normal(rng: &mut StreamRng) -> f64 {
    StandardNormal.sample(rng)
}
