//! Seed derivation.
//!
//! Every random stream in a run is keyed by a tuple such as
//! `(run_seed, client, round, purpose)` and hashed with a fixed SplitMix64
//! mixer, so a stream's contents never depend on execution order or on how
//! many draws another stream consumed.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. The discriminant is part of the hash key.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Corpus = 1,
    TestSet = 2,
    Partition = 3,
    ModelInit = 4,
    ClientSampling = 5,
    PseudoLabel = 6,
    AppU = 7,
    WeakLabeled = 8,
    StrongUnlabeled = 9,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stable hash of an ordered key tuple.
pub fn derive_seed(parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

pub fn stream(parts: &[u64]) -> StreamRng {
    StreamRng::seed_from_u64(derive_seed(parts))
}

/// Stream for one client's work in one round.
pub fn client_stream(run_seed: u64, client: usize, round: usize, purpose: Purpose) -> StreamRng {
    stream(&[run_seed, client as u64, round as u64, purpose as u64])
}

/// Stream that belongs to the run as a whole.
pub fn run_stream(run_seed: u64, purpose: Purpose) -> StreamRng {
    stream(&[run_seed, purpose as u64])
}
