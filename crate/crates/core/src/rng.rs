//! Counter-based random streams.
//!
//! A stream is identified by `(master_seed, stream_index)`. The ChaCha key is
//! derived from the master seed and the stream index selects the ChaCha
//! stream (nonce), so every stream is an independent keystream and can be
//! reconstructed without touching any other stream. Results therefore do not
//! depend on which worker draws which stream.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Identifier of one independent random stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct RngStream {
    pub master_seed: u64,
    pub stream_index: u64,
}

impl RngStream {
    pub fn new(master_seed: u64, stream_index: u64) -> Self {
        Self {
            master_seed,
            stream_index,
        }
    }

    /// The stream `offset` positions after this one.
    pub fn offset(self, offset: u64) -> Self {
        Self {
            master_seed: self.master_seed,
            stream_index: self.stream_index.wrapping_add(offset),
        }
    }

    /// A generator positioned at the start of this stream.
    pub fn generator(self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.master_seed);
        rng.set_stream(self.stream_index);
        rng
    }
}

/// Stream layout used by the Monte Carlo harness.
///
/// Bits 48..64 hold the sample-size index, bits 24..48 the replicate and the
/// low 24 bits the trajectory, so `replicate_base(..) + j` is trajectory `j`.
pub fn replicate_base(n_index: usize, replicate: usize) -> u64 {
    ((n_index as u64) << 48) | ((replicate as u64 & 0xFF_FFFF) << 24)
}

/// Derives an unrelated master seed, used to keep limit-law draws apart from
/// the simulation streams of the same scenario.
pub fn derived_seed(master_seed: u64, salt: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = master_seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
