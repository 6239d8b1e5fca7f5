//! Seed derivation.
//!
//! Every stochastic choice in the toolkit draws from a generator seeded by
//! [`SeedSequence::derive`] on a stable item index, never from a stream shared
//! between items. Parallel and serial runs therefore see the same randomness.
//!
//! The mixer is SplitMix64's finaliser:
//!
//! ```text
//! mix(z)         = finalise(z + 0x9E3779B97F4A7C15)
//! finalise(z)    = z ^= z >> 30; z *= 0xBF58476D1CE4E5B9;
//!                  z ^= z >> 27; z *= 0x94D049BB133111EB;
//!                  z ^ (z >> 31)
//! derive(b, i)   = mix(b ^ mix(i))
//! ```
//!
//! all arithmetic wrapping mod 2^64. `mix` is a bijection, so for a fixed base
//! distinct indices always give distinct child seeds.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// One SplitMix64 step.
#[inline]
pub fn mix64(z: u64) -> u64 {
    let mut z = z.wrapping_add(GOLDEN_GAMMA);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(transparent)]
pub struct SeedSequence(u64);

impl SeedSequence {
    pub const fn new(base_seed: u64) -> Self {
        SeedSequence(base_seed)
    }

    pub const fn base(self) -> u64 {
        self.0
    }

    /// Child seed for `index`. Pure; independent of call order.
    #[inline]
    pub fn derive(self, index: u64) -> u64 {
        mix64(self.0 ^ mix64(index))
    }

    /// Child sequence, for nesting derivations (run → split → item).
    #[inline]
    pub fn child(self, index: u64) -> SeedSequence {
        SeedSequence(self.derive(index))
    }

    /// Generator seeded from this sequence's own value.
    pub fn rng(self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}

impl From<u64> for SeedSequence {
    fn from(v: u64) -> Self {
        SeedSequence(v)
    }
}

/// Stream tags, so different consumers of one item seed never collide.
pub mod stream {
    pub const MASK: u64 = 1;
    pub const LAMBDA: u64 = 2;
    pub const DONOR: u64 = 3;
    pub const PLACEMENT: u64 = 4;
    pub const SHUFFLE: u64 = 5;
    pub const PAIRING: u64 = 6;
    pub const INIT: u64 = 7;
    pub const LABELS: u64 = 8;
    pub const BANK: u64 = 9;
    pub const NOISE: u64 = 10;
}
