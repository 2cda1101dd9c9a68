//! Seed derivation for reproducible, isolated random streams.
//!
//! Every stream is keyed by (master seed, replication, label, purpose). Labels are
//! usually policy names. Two streams with different keys never share state, so a
//! policy that consumes more randomness cannot shift another policy's draws.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Generator used throughout the crate.
pub type SimRng = ChaCha8Rng;

/// What a random stream is used for.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Purpose {
    /// Arm latents and arm ordering.
    Environment,
    /// User potential outcomes (shared across policies under common random numbers).
    Outcomes,
    /// Thompson draws and Monte-Carlo probability estimates.
    Policy,
    /// Contexts for the contextual simulation.
    Contexts,
    /// Stand-in trace datasets.
    Data,
}

impl Purpose {
    fn tag(self) -> u64 {
        match self {
            Purpose::Environment => 0x454e_5649,
            Purpose::Outcomes => 0x4f55_5443,
            Purpose::Policy => 0x504f_4c49,
            Purpose::Contexts => 0x4354_5854,
            Purpose::Data => 0x4441_5441,
        }
    }
}

pub fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// 64-bit FNV-1a over the UTF-8 bytes of `label`.
pub fn label_hash(label: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in label.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn derive_seed(master: u64, replication: u64, label: &str, purpose: Purpose) -> u64 {
    let mut s = splitmix64(master);
    s = splitmix64(s ^ replication);
    s = splitmix64(s ^ label_hash(label));
    splitmix64(s ^ purpose.tag())
}

pub fn stream(master: u64, replication: u64, label: &str, purpose: Purpose) -> SimRng {
    SimRng::seed_from_u64(derive_seed(master, replication, label, purpose))
}

pub fn seeded(seed: u64) -> SimRng {
    SimRng::seed_from_u64(seed)
}
