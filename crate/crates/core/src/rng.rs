//! Seeded random streams.
//!
//! Every random quantity in the crate is drawn from a ChaCha8 generator
//! keyed by a user seed and a 64-bit stream id. Streams with distinct ids
//! are independent, so replicates, intervals and chains can each get their
//! own stream and still reproduce bit-for-bit regardless of scheduling.
//!
//! Stream id layout used by the crate:
//!
//! * replicate `r` of a simulation design: `stream_id(r, 0)`
//! * MCEM iteration `t` of a fit: `stream_id(t, 1)`
//! * the retry chain after a degenerate sweep: `stream_id(t, 2)`

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// A generator for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Packs an index and a purpose tag into one stream id.
pub fn stream_id(index: u64, tag: u8) -> u64 {
    (index << 8) | tag as u64
}
