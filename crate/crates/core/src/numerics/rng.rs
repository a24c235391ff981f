//! Seeded, splittable random number generation.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha12Rng;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// ChaCha generator that can spawn deterministic child streams.
///
/// `child(key)` depends only on the generator's seed and `key`, never on how
/// many numbers were already drawn, so parallel work items keyed by index
/// reproduce bit-identically regardless of scheduling.
#[derive(Debug, Clone)]
pub struct SplitRng {
    seed: u64,
    inner: ChaCha12Rng,
}

impl SplitRng {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            inner: ChaCha12Rng::seed_from_u64(seed),
        }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn child(&self, key: u64) -> Self {
        Self::new(splitmix64(self.seed ^ splitmix64(key.wrapping_add(0x5851_F42D_4C95_7F2D))))
    }

    /// Draws a fresh child seeded from this generator's stream.
    pub fn split(&mut self) -> Self {
        let s = self.inner.next_u64();
        Self::new(splitmix64(s))
    }
}

impl RngCore for SplitRng {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }
    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }
    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}
