//! Reproducible random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 stream whose key is a
//! mix of a master seed and a path of integer tags (trial index, cell hash,
//! purpose tag). Two different paths give statistically independent streams,
//! and the stream for one path never depends on how many other paths exist.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// Purpose tags for the streams derived from one instance or trial seed.
pub mod tag {
    pub const TRUTH: u64 = 0x7472_7574;
    pub const EDGES: u64 = 0x6564_6765;
    pub const NOISE: u64 = 0x6e6f_6973;
    pub const ADVERSARY: u64 = 0x6164_7672;
    pub const INIT: u64 = 0x696e_6974;
    pub const LANCZOS: u64 = 0x6c61_6e63;
    pub const ESCAPE: u64 = 0x6573_6370;
    pub const INSTANCE: u64 = 0x696e_7374;
    pub const SOLVE: u64 = 0x736f_6c76;
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = x;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derive a child seed from `seed` and a path of tags.
pub fn derive_seed(seed: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(seed), |acc, &t| splitmix64(acc ^ splitmix64(t)))
}

/// Random stream keyed by `(seed, path)`.
pub fn stream(seed: u64, path: &[u64]) -> StreamRng {
    let child = derive_seed(seed, path);
    let mut key = [0u8; 32];
    for (k, chunk) in key.chunks_mut(8).enumerate() {
        chunk.copy_from_slice(&splitmix64(child ^ (k as u64)).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}
