//! Reproducible random streams.
//!
//! Every draw in the crate comes from a ChaCha8 generator whose seed is a
//! SplitMix64 fold of `(master seed, key components..., purpose)`. Streams
//! for different rounds, replications or purposes are therefore independent
//! of evaluation order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Purpose {
    Network,
    Shocks,
    Dynamics,
    Replication,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Network => 0x6e65_7477,
            Purpose::Shocks => 0x7368_6f63,
            Purpose::Dynamics => 0x6479_6e61,
            Purpose::Replication => 0x7265_706c,
        }
    }
}

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives a 64-bit sub-seed from a master seed and key components.
pub fn derive_seed(master: u64, purpose: Purpose, key: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ purpose.tag());
    for &k in key {
        h = splitmix64(h ^ splitmix64(k));
    }
    h
}

/// Generator for the stream identified by `(master, purpose, key)`.
pub fn stream(master: u64, purpose: Purpose, key: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(master, purpose, key))
}

/// Seed for replication `index` of an experiment keyed by `master`.
pub fn replication_seed(master: u64, index: u64) -> u64 {
    derive_seed(master, Purpose::Replication, &[index])
}
