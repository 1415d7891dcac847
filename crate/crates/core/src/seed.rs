//! Keyed random streams.
//!
//! All randomness in a run is drawn from ChaCha8 generators whose seeds are
//! derived from the run seed and a tuple of integer keys, so results never
//! depend on the order in which clients or sweep cells execute.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Purpose tags mixed into derived seeds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    TrainTestSplit = 1,
    ClientPartition = 2,
    ClientRoles = 3,
    Trigger = 4,
    ModelInit = 5,
    Poison = 6,
    Shuffle = 7,
    TestPoison = 8,
    Dataset = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Derives a child seed from `base`, a stream tag, and any number of keys.
pub fn derive(base: u64, stream: Stream, keys: &[u64]) -> u64 {
    let mut h = splitmix64(base ^ splitmix64(stream as u64));
    for &k in keys {
        h = splitmix64(h ^ splitmix64(k.wrapping_add(0x632B_E59B_D9B4_E019)));
    }
    h
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn stream_rng(base: u64, stream: Stream, keys: &[u64]) -> ChaCha8Rng {
    rng(derive(base, stream, keys))
}
