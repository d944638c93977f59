//! Counter-based random streams.
//!
//! Every random decision in a run is drawn from a stream addressed by
//! `(seed, purpose, step, index)`. Streams are independent of the order in
//! which they are created, so parallel workers cannot change results.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Namespaces for the different consumers of randomness.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
#[repr(u64)]
pub enum Purpose {
    TrainQuery = 1,
    Rollout = 2,
    PairSelect = 3,
    Shuffle = 4,
    EvalQuery = 5,
    EvalSample = 6,
    Test = 7,
}

/// Address of a random stream. Cheap to copy; call [`RngStream::rng`] to
/// obtain a generator positioned at the start of the stream.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RngStream {
    key: [u64; 4],
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, purpose: Purpose, step: u64, index: u64) -> Self {
        let p = purpose as u64;
        let a = splitmix64(seed ^ splitmix64(p));
        let b = splitmix64(a ^ splitmix64(step.wrapping_add(0x5851_F42D_4C95_7F2D)));
        let c = splitmix64(b ^ splitmix64(index.wrapping_add(0x1405_7B7E_F767_814F)));
        let d = splitmix64(c ^ p.rotate_left(32));
        Self { key: [a, b, c, d] }
    }

    /// Derives a child stream; children with different indices are independent.
    pub fn fork(&self, index: u64) -> Self {
        let mut key = self.key;
        let salt = splitmix64(index ^ 0xD1B5_4A32_D192_ED03);
        for (i, k) in key.iter_mut().enumerate() {
            *k = splitmix64(*k ^ salt.rotate_left(16 * i as u32));
        }
        Self { key }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut seed = [0u8; 32];
        for (chunk, k) in seed.chunks_exact_mut(8).zip(self.key) {
            chunk.copy_from_slice(&k.to_le_bytes());
        }
        ChaCha8Rng::from_seed(seed)
    }
}
