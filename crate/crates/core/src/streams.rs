//! Named random streams derived from a master seed.
//!
//! Every random draw in an experiment comes from a ChaCha8 stream whose seed
//! is a stable 64-bit mix of the master seed, a purpose tag and a list of
//! indices. The mixing scheme is versioned through [`STREAM_SCHEME`]; changing
//! it changes every artifact, so bump the version when you do.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STREAM_SCHEME: &str = "pacgen_streams_v1";

/// Real-world training environments.
pub const REAL: &str = "REAL";
/// Synthetic datasets drawn from the generative model.
pub const GEN: &str = "GEN";
/// Evolutionary-strategies perturbations.
pub const ES: &str = "ES";
/// Held-out evaluation environments.
pub const EVAL: &str = "EVAL";

pub type Stream = ChaCha8Rng;

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

// FNV-1a; only used to fold the purpose tag into the seed.
fn tag_hash(tag: &str) -> u64 {
    tag.bytes().fold(0xCBF2_9CE4_8422_2325u64, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01B3)
    })
}

/// Stable seed for the stream `(master, tag, indices...)`.
pub fn derive_seed(master: u64, tag: &str, indices: &[u64]) -> u64 {
    let mut h = splitmix64(master ^ splitmix64(tag_hash(tag)));
    for &i in indices {
        h = splitmix64(h ^ splitmix64(i.wrapping_add(0xA076_1D64_78BD_642F)));
    }
    h
}

pub fn stream(master: u64, tag: &str, indices: &[u64]) -> Stream {
    ChaCha8Rng::seed_from_u64(derive_seed(master, tag, indices))
}

pub fn stream_from_seed(seed: u64) -> Stream {
    ChaCha8Rng::seed_from_u64(seed)
}
