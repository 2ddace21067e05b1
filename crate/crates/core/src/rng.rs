//! Per-document random streams.
//!
//! Every random draw in corpus generation comes from a generator keyed by
//! `(master seed, stream, index)`, so document `i` is the same no matter which
//! worker produces it or in what order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Named random streams. Each has a fixed salt.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stream {
    EvidenceSample,
    EvidencePermutation,
    Walk,
    Mask,
}

impl Stream {
    fn salt(self) -> u64 {
        match self {
            Stream::EvidenceSample => 0x6576_6964_656e_6365,
            Stream::EvidencePermutation => 0x6576_6964_7065_726d,
            Stream::Walk => 0x0000_0000_7761_6c6b,
            Stream::Mask => 0x0000_006d_6173_6b73,
        }
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Seed of the generator for `(seed, stream, index)`.
pub fn derive_seed(seed: u64, stream: Stream, index: u64) -> u64 {
    mix64(seed ^ mix64(stream.salt() ^ mix64(index)))
}

pub fn stream_rng(seed: u64, stream: Stream, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, stream, index))
}
